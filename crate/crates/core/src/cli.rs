//! Dataset-level pipelines behind the `segunc` subcommands, plus overlay
//! rendering. Every runner takes a manifest path and writes its artifacts
//! into an output directory; results do not depend on `jobs`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{
    argmax_labels, misclassification_target, CumulativeHistograms, DetectionTarget, EvalReport,
    HistogramAccumulator, ImageEvaluation, ReportBuilder, DEFAULT_ECE_BINS,
};
use crate::synth::{write_dataset, SynthConfig};
use crate::tensor_io::{save_uncertainty_map, DatasetManifest, ManifestEntry, UncertaintyMap};
use crate::thresholding::{flag, DetectionMask, ThresholdPolicy};
use crate::uncertainty::{average_probabilities, GrayImage, Metric, Normalization};

/// Colours of the failure overlay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlaySpec {
    /// Misclassified and flagged.
    pub color_tp: [u8; 3],
    /// Misclassified but not flagged.
    pub color_fn: [u8; 3],
    /// Correct but flagged.
    pub color_fp: [u8; 3],
    pub background: Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    Black,
    SourceImage,
}

impl Default for OverlaySpec {
    fn default() -> Self {
        Self {
            color_tp: [0, 255, 0],
            color_fn: [255, 0, 0],
            color_fp: [0, 0, 255],
            background: Background::Black,
        }
    }
}

impl OverlaySpec {
    pub fn new(
        color_tp: [u8; 3],
        color_fn: [u8; 3],
        color_fp: [u8; 3],
        background: Background,
    ) -> Result<Self> {
        if color_tp == color_fn || color_tp == color_fp || color_fn == color_fp {
            return Err(Error::Config("overlay colours must be distinct".into()));
        }
        Ok(Self {
            color_tp,
            color_fn,
            color_fp,
            background,
        })
    }
}

/// Green / red / blue failure overlay. `source` is required for
/// [`Background::SourceImage`] and ignored otherwise.
pub fn render_overlay(
    target: &DetectionTarget,
    mask: &DetectionMask,
    spec: &OverlaySpec,
    source: Option<&RgbImage>,
) -> Result<RgbImage> {
    let (h, w) = target.shape();
    if mask.shape() != (h, w) {
        return Err(Error::Shape {
            expected: (h, w),
            actual: mask.shape(),
        });
    }
    let mut out = match (spec.background, source) {
        (Background::Black, _) => RgbImage::new(w as u32, h as u32),
        (Background::SourceImage, Some(src)) => {
            let actual = (src.height() as usize, src.width() as usize);
            if actual != (h, w) {
                return Err(Error::Shape {
                    expected: (h, w),
                    actual,
                });
            }
            src.clone()
        }
        (Background::SourceImage, None) => {
            return Err(Error::Config(
                "overlay on the source image needs the image".into(),
            ));
        }
    };
    let flagged = mask.flagged();
    for (i, (&mis, &valid)) in target
        .misclassified()
        .iter()
        .zip(target.valid())
        .enumerate()
    {
        let color = match (mis, flagged[i] && valid) {
            (true, true) => spec.color_tp,
            (true, false) => spec.color_fn,
            (false, true) => spec.color_fp,
            (false, false) => continue,
        };
        out.put_pixel((i % w) as u32, (i / w) as u32, Rgb(color));
    }
    Ok(out)
}

/// Settings shared by the manifest-driven runners.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub metric: Metric,
    pub threshold: ThresholdPolicy,
    pub normalize: Normalization,
    pub ece_bins: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Add a generation timestamp to `report.json`.
    pub stamp: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Entropy,
            threshold: ThresholdPolicy::default(),
            normalize: Normalization::Unit,
            ece_bins: DEFAULT_ECE_BINS,
            jobs: 0,
            stamp: false,
        }
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Rejects metric / data combinations before any tensor is read.
fn check_compatible(manifest: &DatasetManifest, metric: Metric) -> Result<()> {
    let needed = metric.min_predictions();
    if let Some(entry) = manifest
        .entries
        .iter()
        .find(|e| e.prediction_paths.len() < needed)
    {
        return Err(Error::usage(
            "--metric",
            format!(
                "`{}` needs at least {needed} predictions per image but `{}` ({} scenario) has {}; \
                 single-prediction data allows vr, pm, entropy, avg-vr, avg-pm, avg-entropy, scharr",
                metric.name(),
                entry.image_id,
                entry.scenario,
                entry.prediction_paths.len()
            ),
        ));
    }
    if metric.needs_image() {
        if let Some(entry) = manifest.entries.iter().find(|e| e.image_path.is_none()) {
            return Err(Error::Config(format!(
                "`{}` needs a source image but manifest entry `{}` has no image_path",
                metric.name(),
                entry.image_id
            )));
        }
    }
    Ok(())
}

fn load_manifest(path: &Path, metric: Metric) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(path)?;
    check_compatible(&manifest, metric)?;
    Ok(manifest)
}

/// Everything the per-image pipeline produces before scoring.
struct Prepared {
    mean: crate::tensor_io::ProbabilityMap,
    labels: crate::tensor_io::LabelMap,
    /// Restricted to non-ignored pixels and normalized.
    uncertainty: UncertaintyMap,
}

fn prepare(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    metric: Metric,
    normalize: Normalization,
) -> Result<Prepared> {
    let stack = manifest.load_stack(entry)?;
    let labels = manifest.load_labels(entry)?;
    if (stack.height(), stack.width()) != labels.shape() {
        return Err(Error::Shape {
            expected: labels.shape(),
            actual: (stack.height(), stack.width()),
        });
    }
    let image = match (&entry.image_path, metric.needs_image()) {
        (Some(rel), true) => Some(GrayImage::load(&manifest.resolve(rel))?),
        _ => None,
    };
    let raw = metric.compute(&stack, image.as_ref())?;
    let uncertainty = normalize.apply(raw.restricted_to(&labels.valid_mask())?);
    Ok(Prepared {
        mean: average_probabilities(&stack),
        labels,
        uncertainty,
    })
}

/// Runs `work` over every entry on `jobs` workers and feeds the results to
/// `sink` in manifest order.
fn for_each_entry<T: Send>(
    manifest: &DatasetManifest,
    jobs: usize,
    work: impl Fn(&ManifestEntry) -> Result<T> + Sync,
    mut sink: impl FnMut(T) -> Result<()>,
) -> Result<()> {
    let pool = thread_pool(jobs)?;
    let batch = pool.current_num_threads().max(1);
    for entries in manifest.entries.chunks(batch) {
        let results: Vec<Result<T>> = pool.install(|| entries.par_iter().map(&work).collect());
        for r in results {
            sink(r?)?;
        }
    }
    Ok(())
}

fn config_echo(
    manifest: &DatasetManifest,
    opts: &RunOptions,
) -> BTreeMap<String, serde_json::Value> {
    let mut scenarios: Vec<String> = manifest
        .entries
        .iter()
        .map(|e| e.scenario.to_string())
        .collect();
    scenarios.sort();
    scenarios.dedup();
    BTreeMap::from([
        ("metric".to_string(), json!(opts.metric.name())),
        ("threshold".to_string(), json!(opts.threshold.to_string())),
        ("normalize".to_string(), json!(opts.normalize.to_string())),
        ("ece_bins".to_string(), json!(opts.ece_bins)),
        ("positive_class".to_string(), json!("misclassified")),
        ("scenarios".to_string(), json!(scenarios)),
        ("num_classes".to_string(), json!(manifest.num_classes())),
        ("ignore_index".to_string(), json!(manifest.ignore_index)),
    ])
}

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()
}

/// Evaluates every image of the manifest and writes `report.json` and
/// `report.csv` into `out_dir`.
pub fn run_eval(manifest_path: &Path, opts: &RunOptions, out_dir: &Path) -> Result<EvalReport> {
    let manifest = load_manifest(manifest_path, opts.metric)?;
    let mut builder = ReportBuilder::new(manifest.class_names.clone(), opts.ece_bins)?;
    for_each_entry(
        &manifest,
        opts.jobs,
        |entry| {
            let p = prepare(&manifest, entry, opts.metric, opts.normalize)?;
            ImageEvaluation::compute(
                &entry.image_id,
                &p.mean,
                &p.labels,
                &p.uncertainty,
                &opts.threshold,
                opts.ece_bins,
            )
        },
        |image| builder.push(&image),
    )?;
    let mut report = builder.finish(config_echo(&manifest, opts))?;
    if opts.stamp {
        report.generated_at = Some(timestamp());
    }
    report.save(out_dir)?;
    Ok(report)
}

/// Renders cumulative curves as `threshold,correct_cum,mis_cum`; a column
/// whose population is empty is left out.
pub fn histogram_csv(h: &CumulativeHistograms) -> String {
    let mut header = vec!["threshold"];
    if h.correct.is_some() {
        header.push("correct_cum");
    }
    if h.misclassified.is_some() {
        header.push("mis_cum");
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, t) in h.thresholds.iter().enumerate() {
        let _ = write!(out, "{t}");
        for curve in [&h.correct, &h.misclassified].into_iter().flatten() {
            let _ = write!(out, ",{}", curve[i]);
        }
        out.push('\n');
    }
    out
}

/// Pools cumulative histograms of the selected metric over the dataset and
/// writes them to `output` as CSV.
pub fn run_hist(
    manifest_path: &Path,
    opts: &RunOptions,
    bins: usize,
    output: &Path,
) -> Result<CumulativeHistograms> {
    let manifest = load_manifest(manifest_path, opts.metric)?;
    let mut acc = HistogramAccumulator::new(bins)?;
    for_each_entry(
        &manifest,
        opts.jobs,
        |entry| {
            let p = prepare(&manifest, entry, opts.metric, opts.normalize)?;
            let target = misclassification_target(&argmax_labels(&p.mean), &p.labels)?;
            let mut one = HistogramAccumulator::new(bins)?;
            one.add_image(&p.uncertainty, &target)?;
            Ok(one)
        },
        |one| {
            acc.merge(&one);
            Ok(())
        },
    )?;
    let curves = acc.finish();
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(output, histogram_csv(&curves)).map_err(|e| Error::io(output, e))?;
    Ok(curves)
}

/// Writes one uncertainty map per image to `out_dir/<image_id>.npy`.
/// Ignored pixels are marked invalid in the stored map.
pub fn run_uncertainty(
    manifest_path: &Path,
    opts: &RunOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(manifest_path, opts.metric)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for_each_entry(
        &manifest,
        opts.jobs,
        |entry| {
            let p = prepare(&manifest, entry, opts.metric, opts.normalize)?;
            let path = out_dir.join(format!("{}.npy", entry.image_id));
            save_uncertainty_map(&p.uncertainty, &path)?;
            Ok(path)
        },
        |path| {
            written.push(path);
            Ok(())
        },
    )?;
    Ok(written)
}

/// Grayscale rendering of a map already scaled to `[0, 1]`; invalid pixels are black.
pub fn uncertainty_image(map: &UncertaintyMap) -> image::GrayImage {
    let bytes = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&v, &ok)| {
            if ok {
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    image::GrayImage::from_raw(map.width() as u32, map.height() as u32, bytes)
        .expect("buffer matches map shape")
}

/// White where the model is wrong, black elsewhere.
pub fn target_image(target: &DetectionTarget) -> image::GrayImage {
    let (h, w) = target.shape();
    let bytes = target
        .misclassified()
        .iter()
        .map(|&m| if m { 255 } else { 0 })
        .collect();
    image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches target shape")
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))?
        .to_rgb8())
}

/// Per image, writes `<id>_overlay.png`, `<id>_uncertainty.png` and
/// `<id>_errors.png` into `out_dir`.
pub fn run_viz(
    manifest_path: &Path,
    opts: &RunOptions,
    spec: &OverlaySpec,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(manifest_path, opts.metric)?;
    if spec.background == Background::SourceImage {
        if let Some(entry) = manifest.entries.iter().find(|e| e.image_path.is_none()) {
            return Err(Error::Config(format!(
                "overlay on the source image but entry `{}` has no image_path",
                entry.image_id
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for_each_entry(
        &manifest,
        opts.jobs,
        |entry| {
            let p = prepare(&manifest, entry, opts.metric, opts.normalize)?;
            let target = misclassification_target(&argmax_labels(&p.mean), &p.labels)?;
            let mask = if target.num_valid() > 0 {
                flag(&p.uncertainty, opts.threshold.select(&p.uncertainty)?)
            } else {
                flag(&p.uncertainty, f64::INFINITY)
            };
            let source = match (spec.background, &entry.image_path) {
                (Background::SourceImage, Some(rel)) => Some(load_rgb(&manifest.resolve(rel))?),
                _ => None,
            };
            let overlay = render_overlay(&target, &mask, spec, source.as_ref())?;
            let id = &entry.image_id;
            let files = [
                out_dir.join(format!("{id}_overlay.png")),
                out_dir.join(format!("{id}_uncertainty.png")),
                out_dir.join(format!("{id}_errors.png")),
            ];
            overlay
                .save(&files[0])
                .map_err(|e| Error::image(&files[0], e))?;
            uncertainty_image(&p.uncertainty)
                .save(&files[1])
                .map_err(|e| Error::image(&files[1], e))?;
            target_image(&target)
                .save(&files[2])
                .map_err(|e| Error::image(&files[2], e))?;
            Ok(files)
        },
        |files| {
            written.extend(files);
            Ok(())
        },
    )?;
    Ok(written)
}

/// Writes a synthetic dataset (manifest, labels, images, predictions) into `out_dir`.
pub fn run_synth(config: &SynthConfig, count: usize, out_dir: &Path) -> Result<DatasetManifest> {
    write_dataset(config, count, out_dir)
}
