//! Qualitative failure analysis: overlay of hits and misses, the Scharr
//! edge baseline and cumulative histograms of uncertainty.
//!
//! cargo run --example failure_analysis -- [output-dir]

use std::path::PathBuf;

use seg_uncertainty::cli::{histogram_csv, render_overlay, uncertainty_image, OverlaySpec};
use seg_uncertainty::evaluation::{auroc, cumulative_histograms};
use seg_uncertainty::synth::{generate, SynthConfig};
use seg_uncertainty::thresholding::{flag, ThresholdPolicy};
use seg_uncertainty::uncertainty::{entropy, normalize_unit, scharr_magnitude};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let out = generate(&SynthConfig {
        informativeness: 0.6,
        seed: 5,
        ..SynthConfig::default()
    })?;

    let ent = normalize_unit(&entropy(&out.stack.predictions()[0]));
    let edges = normalize_unit(&scharr_magnitude(&out.image));
    println!(
        "AUROC entropy {:.4}, scharr edges {:.4}",
        auroc(&ent, &out.target)?,
        auroc(&edges, &out.target)?
    );

    let t = ThresholdPolicy::default().select(&ent)?;
    let mask = flag(&ent, t);
    let overlay = render_overlay(&out.target, &mask, &OverlaySpec::default(), None)?;
    overlay.save(dir.join("failure_overlay.png"))?;
    uncertainty_image(&ent).save(dir.join("failure_entropy.png"))?;
    println!("threshold {t:.3}, wrote overlays to {}", dir.display());

    let hist = cumulative_histograms(&ent, &out.target, 10)?;
    print!("{}", histogram_csv(&hist));
    Ok(())
}
