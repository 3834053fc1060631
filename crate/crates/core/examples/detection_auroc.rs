//! Misclassification-detection AUROC: exact rank statistic, the ROC curve,
//! pooling across images and per-class breakdown.
//!
//! cargo run --example detection_auroc

use seg_uncertainty::evaluation::{auroc, classwise_auroc, RankPool};
use seg_uncertainty::synth::{generate, SynthConfig};
use seg_uncertainty::uncertainty::averaged_entropy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // informativeness sweep: 0 is a coin flip, 1 separates perfectly
    println!("gamma   AUROC");
    for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let out = generate(&SynthConfig {
            informativeness: gamma,
            seed: 11,
            ..SynthConfig::default()
        })?;
        let a = auroc(&averaged_entropy(&out.stack), &out.target)?;
        println!("{gamma:<7.2} {a:.4}");
    }

    // pooled (micro) AUROC over several images equals the AUROC of the concatenation
    let mut pooled = RankPool::default();
    let mut per_image = Vec::new();
    for seed in 0..4 {
        let out = generate(&SynthConfig {
            informativeness: 0.5,
            seed,
            ..SynthConfig::default()
        })?;
        let map = averaged_entropy(&out.stack);
        let pool = RankPool::from_map(&map, &out.target)?;
        per_image.push(pool.auroc()?);
        pooled.merge(&pool);
        if seed == 0 {
            let per_class = classwise_auroc(&map, &out.target, &out.labels)?;
            for (c, a) in per_class.iter().enumerate() {
                println!(
                    "image 0 class {c}: {}",
                    a.map_or("undefined".into(), |a| format!("{a:.4}"))
                );
            }
        }
    }
    let macro_mean = per_image.iter().sum::<f64>() / per_image.len() as f64;
    println!(
        "micro AUROC {:.4}, macro AUROC {macro_mean:.4}",
        pooled.auroc()?
    );

    let roc = pooled.roc_curve()?;
    println!("ROC has {} points; a few of them (fpr, tpr):", roc.len());
    for &(fpr, tpr) in roc.iter().step_by((roc.len() / 6).max(1)) {
        println!("  {fpr:.3} {tpr:.3}");
    }
    Ok(())
}
