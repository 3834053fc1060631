//! Synthetic segmentation outputs with known misclassification structure.
//!
//! Labels are Voronoi regions. An exact number of valid pixels is chosen to
//! be misclassified, and the predicted distributions are drawn so that the
//! `informativeness` knob controls how much more uncertain those pixels look
//! than the correct ones. Every per-pixel draw comes from a generator keyed
//! by `(seed, pixel index)` and consumes the same number of values whatever
//! the configuration, so runs differing only in `informativeness` share all
//! randomness.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DetectionTarget;
use crate::tensor_io::{
    save_label_map, save_probability_map, DatasetManifest, LabelMap, ManifestEntry,
    PredictionStack, ProbabilityMap, Scenario, DEFAULT_IGNORE_INDEX,
};
use crate::uncertainty::GrayImage;

/// Smallest gap kept between the top two probabilities of every pixel.
pub const MARGIN_FLOOR: f64 = 0.05;

const CORRECT_CONFIDENCE: (f64, f64) = (0.9, 0.995);
const CORRECT_SPREAD: f64 = 0.3;
const REGION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Members of the prediction stack.
    pub num_predictions: usize,
    /// Fraction of valid pixels to misclassify, in `(0, 1)`.
    pub mis_rate: f64,
    /// 0: misclassified pixels look as confident as correct ones.
    /// 1: misclassified pixels are maximally uncertain.
    pub informativeness: f64,
    pub region_count: usize,
    pub ignore_rate: f64,
    pub seed: u64,
    pub scenario: Scenario,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_classes: 5,
            num_predictions: 1,
            mis_rate: 0.2,
            informativeness: 1.0,
            region_count: 12,
            ignore_rate: 0.0,
            seed: 0,
            scenario: Scenario::Base,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.height == 0 || self.width == 0 {
            return bad(format!(
                "image size {}x{} is empty",
                self.height, self.width
            ));
        }
        if !(2..=usize::from(u16::MAX)).contains(&self.num_classes) {
            return bad(format!("need 2..=65535 classes, got {}", self.num_classes));
        }
        if self.num_predictions == 0 {
            return bad("need at least one prediction".into());
        }
        if self.scenario == Scenario::Base && self.num_predictions != 1 {
            return bad(format!(
                "Base scenario has one prediction, got {}",
                self.num_predictions
            ));
        }
        if !(self.mis_rate > 0.0 && self.mis_rate < 1.0) {
            return bad(format!(
                "mis_rate must lie in (0, 1), got {}",
                self.mis_rate
            ));
        }
        if self.mis_rate * ((self.height * self.width) as f64) < 1.0 {
            return bad(format!(
                "mis_rate {} on {}x{} pixels selects fewer than one pixel",
                self.mis_rate, self.height, self.width
            ));
        }
        if !(0.0..=1.0).contains(&self.informativeness) {
            return bad(format!(
                "informativeness must lie in [0, 1], got {}",
                self.informativeness
            ));
        }
        if self.region_count == 0 {
            return bad("need at least one region".into());
        }
        if !(0.0..1.0).contains(&self.ignore_rate) {
            return bad(format!(
                "ignore_rate must lie in [0, 1), got {}",
                self.ignore_rate
            ));
        }
        Ok(())
    }

    /// 255, or 65535 when class ids do not fit below it.
    pub fn ignore_index(&self) -> u16 {
        if self.num_classes > usize::from(DEFAULT_IGNORE_INDEX) {
            u16::MAX
        } else {
            DEFAULT_IGNORE_INDEX
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub labels: LabelMap,
    pub stack: PredictionStack,
    /// The pixels the generator made wrong.
    pub target: DetectionTarget,
    /// Piecewise-constant intensity per Voronoi region, for edge baselines.
    pub image: GrayImage,
}

impl SynthOutput {
    pub fn realized_mis_rate(&self) -> f64 {
        realized_mis_rate(self)
    }
}

/// `|misclassified| / |valid|`; zero when no pixel is valid.
pub fn realized_mis_rate(output: &SynthOutput) -> f64 {
    let valid = output.target.num_valid();
    if valid == 0 {
        return 0.0;
    }
    output.target.num_misclassified() as f64 / valid as f64
}

fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel as u64);
    rng
}

struct Regions {
    sites: Vec<(f64, f64)>,
    classes: Vec<u16>,
    shades: Vec<f32>,
}

impl Regions {
    fn draw(config: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(REGION_STREAM);
        let mut sites = Vec::with_capacity(config.region_count);
        let mut classes = Vec::with_capacity(config.region_count);
        let mut shades = Vec::with_capacity(config.region_count);
        for _ in 0..config.region_count {
            sites.push((
                rng.random_range(0.0..config.height as f64),
                rng.random_range(0.0..config.width as f64),
            ));
            classes.push(rng.random_range(0..config.num_classes) as u16);
            shades.push(rng.random_range(0.1f32..0.9));
        }
        Self {
            sites,
            classes,
            shades,
        }
    }

    /// Nearest site to the pixel centre; ties go to the lower index.
    fn nearest(&self, row: usize, col: usize) -> usize {
        let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
        let mut best = (f64::INFINITY, 0);
        for (i, &(sy, sx)) in self.sites.iter().enumerate() {
            let d = (sy - y).powi(2) + (sx - x).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Leading draws shared by both generation passes.
struct Head {
    ignored: bool,
    key: u64,
}

fn draw_head(rng: &mut ChaCha8Rng, ignore_rate: f64) -> Head {
    let ignored = rng.random::<f64>() < ignore_rate;
    let key = rng.next_u64();
    Head { ignored, key }
}

/// Base distribution and per-member perturbations for one pixel.
fn pixel_distributions(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    label: Option<u16>,
    misclassified: bool,
    out: &mut [Vec<f64>],
) {
    let k = config.num_classes;
    let gamma = config.informativeness;
    // fixed draw order: confidence, wrong-class offset, split mix, weights, members
    let u_conf: f64 = rng.random();
    let u_wrong: f64 = rng.random();
    let u_mix: f64 = rng.random();
    let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();

    let label = usize::from(label.unwrap_or(0));
    let (top, p, mix, spread) = if misclassified {
        let near_uniform = 1.0 / k as f64 + MARGIN_FLOOR * (k - 1) as f64 / k as f64;
        let lo = (1.0 - gamma) * CORRECT_CONFIDENCE.0 + gamma * near_uniform;
        let hi = (1.0 - gamma) * CORRECT_CONFIDENCE.1 + gamma * near_uniform;
        let offset = ((u_wrong * (k - 1) as f64) as usize).min(k - 2);
        let wrong = (label + 1 + offset) % k;
        (
            wrong,
            lo + (hi - lo) * u_conf,
            (1.0 - gamma) * u_mix,
            CORRECT_SPREAD + 0.6 * gamma,
        )
    } else {
        let (lo, hi) = CORRECT_CONFIDENCE;
        (label, lo + (hi - lo) * u_conf, u_mix, CORRECT_SPREAD)
    };

    // remainder split between an even share and random weights, pulled back
    // toward even if the largest share would break the margin floor
    let others: Vec<usize> = (0..k).filter(|&c| c != top).collect();
    let total: f64 = others.iter().map(|&c| weights[c]).sum();
    let w_max = others.iter().map(|&c| weights[c]).fold(0.0, f64::max) / total;
    let even = 1.0 / (k - 1) as f64;
    let rest = 1.0 - p;
    let mut mix = mix;
    if w_max > even && rest > 0.0 {
        let limit = ((p - MARGIN_FLOOR) / rest - even) / (w_max - even);
        mix = mix.min(limit.max(0.0));
    }
    let base = &mut out[0];
    base.fill(0.0);
    base[top] = p;
    for &c in &others {
        base[c] = rest * ((1.0 - mix) * even + mix * weights[c] / total);
    }

    // members move mass between two classes in opposite-sign pairs, so the
    // member mean is the base distribution
    let base = out[0].clone();
    let n = config.num_predictions;
    for pair in 0..n / 2 {
        let x = rng.random_range(0..k);
        let y = (x + 1 + rng.random_range(0..k - 1)) % k;
        let a = spread * rng.random::<f64>() * base[x].min(base[y]);
        for (m, sign) in [(2 * pair, 1.0), (2 * pair + 1, -1.0)] {
            let member = &mut out[1 + m];
            member.copy_from_slice(&base);
            member[x] += sign * a;
            member[y] -= sign * a;
        }
    }
    if n % 2 == 1 {
        out[n].copy_from_slice(&base);
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let (h, w, k, n_pred) = (
        config.height,
        config.width,
        config.num_classes,
        config.num_predictions,
    );
    let n = h * w;
    let ignore = config.ignore_index();
    let regions = Regions::draw(config);

    let region_of: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|p| regions.nearest(p / w, p % w))
        .collect();
    let heads: Vec<Head> = (0..n)
        .into_par_iter()
        .map(|p| draw_head(&mut pixel_rng(config.seed, p), config.ignore_rate))
        .collect();

    let mut candidates: Vec<(u64, usize)> = heads
        .iter()
        .enumerate()
        .filter(|(_, hd)| !hd.ignored)
        .map(|(p, hd)| (hd.key, p))
        .collect();
    let n_valid = candidates.len();
    let n_mis = ((config.mis_rate * n_valid as f64).round() as usize).min(n_valid);
    let mut misclassified = vec![false; n];
    if n_mis > 0 {
        candidates.select_nth_unstable(n_mis - 1);
        for &(_, p) in &candidates[..n_mis] {
            misclassified[p] = true;
        }
    }

    let labels: Vec<u16> = (0..n)
        .map(|p| {
            if heads[p].ignored {
                ignore
            } else {
                regions.classes[region_of[p]]
            }
        })
        .collect();

    // per pixel: base distribution followed by the members
    let pixels: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![vec![0f64; k]; n_pred + 1],
            |scratch, p| {
                let mut rng = pixel_rng(config.seed, p);
                draw_head(&mut rng, config.ignore_rate);
                let label = (!heads[p].ignored).then_some(labels[p]);
                pixel_distributions(&mut rng, config, label, misclassified[p], scratch);
                scratch[1..]
                    .iter()
                    .flat_map(|m| m.iter().map(|&v| v as f32))
                    .collect()
            },
        )
        .collect();

    let mut planes = vec![vec![0f32; k * n]; n_pred];
    for (p, values) in pixels.iter().enumerate() {
        for (m, plane) in planes.iter_mut().enumerate() {
            for c in 0..k {
                plane[c * n + p] = values[m * k + c];
            }
        }
    }
    let predictions = planes
        .into_iter()
        .map(|data| ProbabilityMap::from_raw(data, k, h, w))
        .collect::<Result<Vec<_>>>()?;
    let stack = PredictionStack::new(predictions, config.scenario)?;

    let valid: Vec<bool> = heads.iter().map(|hd| !hd.ignored).collect();
    let image = GrayImage::new(region_of.iter().map(|&r| regions.shades[r]).collect(), h, w)?;
    Ok(SynthOutput {
        labels: LabelMap::new(labels, h, w, ignore, k)?,
        stack,
        target: DetectionTarget::new(misclassified, valid, h, w)?,
        image,
    })
}

fn save_gray_png(image: &GrayImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image
        .pixels()
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(image.width() as u32, image.height() as u32, bytes)
        .ok_or_else(|| Error::Invariant("gray image buffer size".into()))?;
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Writes `count` generated images (seeds `seed, seed + 1, ...`) with a
/// manifest at `dir/manifest.json`, returning the manifest.
pub fn write_dataset(config: &SynthConfig, count: usize, dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    if count == 0 {
        return Err(Error::Config("dataset needs at least one image".into()));
    }
    for sub in ["labels", "images", "probs"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let seed = config.seed.wrapping_add(i as u64);
        let out = generate(&SynthConfig {
            seed,
            ..config.clone()
        })?;
        let id = format!("synth_{i:04}");
        let label_path = format!("labels/{id}.png");
        let image_path = format!("images/{id}.png");
        save_label_map(&out.labels, &dir.join(&label_path))?;
        save_gray_png(&out.image, &dir.join(&image_path))?;
        let mut prediction_paths = Vec::with_capacity(out.stack.len());
        for (m, pred) in out.stack.predictions().iter().enumerate() {
            let rel = format!("probs/{id}_{m:02}.npy");
            save_probability_map(pred, &dir.join(&rel))?;
            prediction_paths.push(rel);
        }
        entries.push(ManifestEntry {
            image_id: id,
            label_path,
            prediction_paths,
            scenario: config.scenario,
            image_path: Some(image_path),
            seed: Some(seed),
        });
    }
    let class_names = (0..config.num_classes)
        .map(|c| format!("class{c}"))
        .collect();
    let manifest = DatasetManifest::new(class_names, config.ignore_index(), entries);
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
