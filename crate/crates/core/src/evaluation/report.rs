//! Per-image evaluation records and their micro / macro aggregation.
//!
//! Micro values are recomputed from pooled counts (confusion matrices, rank
//! pools, calibration bins). Macro values are unweighted means of the
//! per-image values that are defined; undefined values are left out rather
//! than counted as zero.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::auroc::{class_pools, RankPool};
use super::detection::{precision_recall, PRStats};
use super::quality::{BrierAccumulator, ConfusionMatrix, EceAccumulator};
use super::target::{argmax_with_confidence, misclassification_target};
use crate::error::{Error, Result};
use crate::tensor_io::{LabelMap, ProbabilityMap, UncertaintyMap};
use crate::thresholding::{flag, ThresholdPolicy};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Column order of the flat CSV report.
pub const CSV_COLUMNS: [&str; 11] = [
    "image_id",
    "n_valid",
    "n_misclassified",
    "threshold",
    "auroc",
    "precision",
    "recall",
    "pixel_fraction",
    "miou",
    "ece",
    "brier",
];

/// Metrics reported in the micro and macro sections.
pub const AGGREGATED_METRICS: [&str; 7] = [
    "auroc",
    "precision",
    "recall",
    "pixel_fraction",
    "miou",
    "ece",
    "brier",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    Micro,
    Macro,
}

/// Everything needed to report one image and to pool it with others.
#[derive(Debug, Clone)]
pub struct ImageEvaluation {
    pub image_id: String,
    pub n_valid: u64,
    pub n_misclassified: u64,
    /// Absent when the image has no valid pixels.
    pub threshold: Option<f64>,
    pub detection: PRStats,
    pub rank_pool: RankPool,
    pub class_pools: Vec<RankPool>,
    pub confusion: ConfusionMatrix,
    pub ece: EceAccumulator,
    pub brier: BrierAccumulator,
}

impl ImageEvaluation {
    /// Evaluates one image. `prediction` is the (mean) predictive
    /// distribution whose argmax defines the segmentation, and `uncertainty`
    /// the already normalized map scored against its errors. Ignored pixels
    /// are removed from the uncertainty map before thresholding.
    pub fn compute(
        image_id: impl Into<String>,
        prediction: &ProbabilityMap,
        gt: &LabelMap,
        uncertainty: &UncertaintyMap,
        policy: &ThresholdPolicy,
        ece_bins: usize,
    ) -> Result<Self> {
        if prediction.num_classes() != gt.num_classes() {
            return Err(Error::Invariant(format!(
                "prediction has {} classes but the labels declare {}",
                prediction.num_classes(),
                gt.num_classes()
            )));
        }
        let (pred, confidence) = argmax_with_confidence(prediction);
        let target = misclassification_target(&pred, gt)?;
        if uncertainty.shape() != gt.shape() {
            return Err(Error::Shape {
                expected: gt.shape(),
                actual: uncertainty.shape(),
            });
        }
        if uncertainty
            .valid()
            .iter()
            .zip(target.valid())
            .any(|(&u, &t)| t && !u)
        {
            return Err(Error::Invariant(
                "uncertainty map is undefined at a non-ignored pixel".into(),
            ));
        }
        let uncertainty = uncertainty.clone().restricted_to(target.valid())?;

        let threshold = if target.num_valid() > 0 {
            Some(policy.select(&uncertainty)?)
        } else {
            None
        };
        let detection = match threshold {
            Some(t) => precision_recall(&flag(&uncertainty, t), &target)?,
            None => PRStats::default(),
        };
        let rank_pool = RankPool::from_map(&uncertainty, &target)?;
        let class_pools = class_pools(&uncertainty, &target, gt)?;
        let mut confusion = ConfusionMatrix::new(gt.num_classes());
        confusion.accumulate(&pred, gt)?;
        let mut ece = EceAccumulator::new(ece_bins)?;
        ece.add_image(&confidence, &pred, gt)?;
        let mut brier = BrierAccumulator::default();
        brier.add_image(prediction, gt)?;

        Ok(Self {
            image_id: image_id.into(),
            n_valid: target.num_valid(),
            n_misclassified: target.num_misclassified(),
            threshold,
            detection,
            rank_pool,
            class_pools,
            confusion,
            ece,
            brier,
        })
    }

    /// Defined per-image metrics by name.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("n_valid".into(), self.n_valid as f64);
        out.insert("n_misclassified".into(), self.n_misclassified as f64);
        if let Some(t) = self.threshold {
            out.insert("threshold".into(), t);
        }
        insert_defined(
            &mut out,
            &self.detection,
            self.rank_pool.auroc().ok(),
            &self.confusion,
            &self.ece,
            &self.brier,
        );
        out
    }
}

fn insert_defined(
    out: &mut BTreeMap<String, f64>,
    detection: &PRStats,
    auroc: Option<f64>,
    confusion: &ConfusionMatrix,
    ece: &EceAccumulator,
    brier: &BrierAccumulator,
) {
    let values = [
        ("auroc", auroc),
        ("precision", detection.precision()),
        ("recall", detection.recall()),
        ("pixel_fraction", detection.pixel_fraction()),
        ("miou", confusion.miou().ok().map(|m| m.mean)),
        ("ece", ece.value().ok()),
        ("brier", brier.value().ok()),
    ];
    for (name, value) in values {
        if let Some(v) = value {
            out.insert(name.to_string(), v);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: f64,
    count: u64,
}

impl Mean {
    fn add(&mut self, value: Option<f64>) {
        if let Some(v) = value {
            self.sum += v;
            self.count += 1;
        }
    }

    fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Folds image evaluations, in order, into an [`EvalReport`].
///
/// Only pooled counts and per-image scalars are retained, so a large
/// dataset can be streamed through.
#[derive(Debug, Clone)]
pub struct ReportBuilder {
    class_names: Vec<String>,
    ids: HashSet<String>,
    rows: Vec<(String, BTreeMap<String, f64>)>,
    detection: PRStats,
    pool: RankPool,
    class_pools: Vec<RankPool>,
    confusion: ConfusionMatrix,
    ece: EceAccumulator,
    brier: BrierAccumulator,
    macro_means: BTreeMap<&'static str, Mean>,
    class_auroc_means: Vec<Mean>,
    class_iou_means: Vec<Mean>,
    auroc_skipped: u64,
    n_valid: u64,
    n_misclassified: u64,
}

impl ReportBuilder {
    pub fn new(class_names: Vec<String>, ece_bins: usize) -> Result<Self> {
        let k = class_names.len();
        Ok(Self {
            ids: HashSet::new(),
            rows: Vec::new(),
            detection: PRStats::default(),
            pool: RankPool::default(),
            class_pools: vec![RankPool::default(); k],
            confusion: ConfusionMatrix::new(k),
            ece: EceAccumulator::new(ece_bins)?,
            brier: BrierAccumulator::default(),
            macro_means: BTreeMap::new(),
            class_auroc_means: vec![Mean::default(); k],
            class_iou_means: vec![Mean::default(); k],
            auroc_skipped: 0,
            n_valid: 0,
            n_misclassified: 0,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, image: &ImageEvaluation) -> Result<()> {
        if image.class_pools.len() != self.class_names.len()
            || image.confusion.num_classes() != self.class_names.len()
        {
            return Err(Error::Invariant(format!(
                "image `{}` was evaluated with a different class count",
                image.image_id
            )));
        }
        if image.ece.num_bins() != self.ece.num_bins() {
            return Err(Error::Invariant(format!(
                "image `{}` was evaluated with a different ECE bin count",
                image.image_id
            )));
        }
        if !self.ids.insert(image.image_id.clone()) {
            return Err(Error::Invariant(format!(
                "duplicate image id `{}`",
                image.image_id
            )));
        }
        let metrics = image.metrics();
        for name in AGGREGATED_METRICS {
            self.macro_means
                .entry(name)
                .or_default()
                .add(metrics.get(name).copied());
        }
        if !metrics.contains_key("auroc") {
            self.auroc_skipped += 1;
        }
        for (c, pool) in image.class_pools.iter().enumerate() {
            self.class_auroc_means[c].add(pool.auroc().ok());
            self.class_pools[c].merge(pool);
        }
        for (c, iou) in image.confusion.iou_per_class().into_iter().enumerate() {
            self.class_iou_means[c].add(iou);
        }
        self.detection += image.detection;
        self.pool.merge(&image.rank_pool);
        self.confusion.merge(&image.confusion);
        self.ece.merge(&image.ece);
        self.brier.merge(&image.brier);
        self.n_valid += image.n_valid;
        self.n_misclassified += image.n_misclassified;
        self.rows.push((image.image_id.clone(), metrics));
        Ok(())
    }

    pub fn section(&self, mode: AggregateMode) -> BTreeMap<String, f64> {
        match mode {
            AggregateMode::Macro => self
                .macro_means
                .iter()
                .filter_map(|(&name, mean)| mean.value().map(|v| (name.to_string(), v)))
                .collect(),
            AggregateMode::Micro => {
                let mut out = BTreeMap::new();
                insert_defined(
                    &mut out,
                    &self.detection,
                    self.pool.auroc().ok(),
                    &self.confusion,
                    &self.ece,
                    &self.brier,
                );
                out
            }
        }
    }

    pub fn finish(self, config: BTreeMap<String, serde_json::Value>) -> Result<EvalReport> {
        if self.rows.is_empty() {
            return Err(Error::Config("no images to report".into()));
        }
        let micro = self.section(AggregateMode::Micro);
        let macro_ = self.section(AggregateMode::Macro);
        let micro_iou = self.confusion.iou_per_class();
        let mut classwise = BTreeMap::new();
        for (c, name) in self.class_names.iter().enumerate() {
            let mut m = BTreeMap::new();
            let entries = [
                ("auroc_micro", self.class_pools[c].auroc().ok()),
                ("auroc_macro", self.class_auroc_means[c].value()),
                ("iou_micro", micro_iou[c]),
                ("iou_macro", self.class_iou_means[c].value()),
            ];
            for (key, value) in entries {
                if let Some(v) = value {
                    m.insert(key.to_string(), v);
                }
            }
            classwise.insert(name.clone(), m);
        }
        let totals = ReportTotals {
            images: self.rows.len() as u64,
            n_valid: self.n_valid,
            n_misclassified: self.n_misclassified,
            auroc_skipped_images: self.auroc_skipped,
        };
        Ok(EvalReport {
            classwise,
            config,
            generated_at: None,
            r#macro: macro_,
            micro,
            per_image: self.rows.iter().cloned().collect(),
            schema_version: REPORT_SCHEMA_VERSION,
            totals,
            row_order: self.rows.into_iter().map(|(id, _)| id).collect(),
        })
    }
}

/// Micro or macro aggregate of a set of image evaluations.
pub fn aggregate(images: &[ImageEvaluation], mode: AggregateMode) -> Result<BTreeMap<String, f64>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Config("no images to aggregate".into()))?;
    let k = first.confusion.num_classes();
    let mut builder = ReportBuilder::new(
        (0..k).map(|c| c.to_string()).collect(),
        first.ece.num_bins(),
    )?;
    for image in images {
        builder.push(image)?;
    }
    Ok(builder.section(mode))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportTotals {
    pub images: u64,
    pub n_valid: u64,
    pub n_misclassified: u64,
    /// Images left out of macro AUROC because one outcome was empty.
    pub auroc_skipped_images: u64,
}

/// Dataset-level evaluation. Serializes with keys in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classwise: BTreeMap<String, BTreeMap<String, f64>>,
    pub config: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub r#macro: BTreeMap<String, f64>,
    pub micro: BTreeMap<String, f64>,
    pub per_image: BTreeMap<String, BTreeMap<String, f64>>,
    pub schema_version: u32,
    pub totals: ReportTotals,
    #[serde(skip)]
    row_order: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invariant(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// One row per image in evaluation order, then `MICRO` and `MACRO`.
    /// Undefined values are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Invariant(format!("csv output: {e}"));
        w.write_record(CSV_COLUMNS).map_err(err)?;
        let cell = |m: &BTreeMap<String, f64>, key: &str| {
            m.get(key).map(|v| v.to_string()).unwrap_or_default()
        };
        for id in &self.row_order {
            let m = &self.per_image[id];
            let row: Vec<String> = CSV_COLUMNS
                .iter()
                .map(|&c| match c {
                    "image_id" => id.clone(),
                    "n_valid" | "n_misclassified" => m
                        .get(c)
                        .map(|v| (*v as u64).to_string())
                        .unwrap_or_default(),
                    _ => cell(m, c),
                })
                .collect();
            w.write_record(&row).map_err(err)?;
        }
        for (label, section) in [("MICRO", &self.micro), ("MACRO", &self.r#macro)] {
            let row: Vec<String> = CSV_COLUMNS
                .iter()
                .map(|&c| match c {
                    "image_id" => label.to_string(),
                    "n_valid" if label == "MICRO" => self.totals.n_valid.to_string(),
                    "n_misclassified" if label == "MICRO" => {
                        self.totals.n_misclassified.to_string()
                    }
                    _ => cell(section, c),
                })
                .collect();
            w.write_record(&row).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Invariant(format!("csv output: {e}")))?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        Ok(())
    }
}
