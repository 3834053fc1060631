//! The whole pipeline from a manifest to `report.json` / `report.csv`,
//! with micro (pooled) and macro (per-image mean) aggregates.
//!
//! cargo run --example end_to_end_eval -- [output-dir]

use std::path::PathBuf;

use seg_uncertainty::cli::{run_eval, RunOptions};
use seg_uncertainty::synth::{write_dataset, SynthConfig};
use seg_uncertainty::tensor_io::Scenario;
use seg_uncertainty::uncertainty::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("segunc_e2e_{}", std::process::id())));
    let config = SynthConfig {
        num_classes: 8,
        num_predictions: 6,
        scenario: Scenario::Drop,
        informativeness: 0.75,
        ignore_rate: 0.02,
        seed: 100,
        ..SynthConfig::default()
    };
    write_dataset(&config, 5, &dir.join("data"))?;

    for metric in [Metric::AveragedEntropy, Metric::Bald, Metric::VarianceMax] {
        let opts = RunOptions {
            metric,
            threshold: "max-frac:0.10".parse()?,
            ..RunOptions::default()
        };
        let out = dir.join(metric.name());
        let report = run_eval(&dir.join("data/manifest.json"), &opts, &out)?;
        println!(
            "{} ({} images, {} AUROC-skipped)",
            metric.name(),
            report.totals.images,
            report.totals.auroc_skipped_images
        );
        for key in [
            "auroc",
            "precision",
            "recall",
            "pixel_fraction",
            "miou",
            "ece",
            "brier",
        ] {
            let show = |v: Option<&f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            println!(
                "  {key:<15} micro {:>7}  macro {:>7}",
                show(report.micro.get(key)),
                show(report.r#macro.get(key))
            );
        }
    }
    println!("reports under {}", dir.display());
    Ok(())
}
