//! Turning a continuous map into a binary "probably wrong" mask: the
//! largest-difference rule versus a fixed pixel budget.
//!
//! cargo run --example dynamic_thresholds

use seg_uncertainty::evaluation::precision_recall;
use seg_uncertainty::synth::{generate, SynthConfig};
use seg_uncertainty::thresholding::{flag, ThresholdPolicy};
use seg_uncertainty::uncertainty::{entropy, normalize_unit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = generate(&SynthConfig {
        height: 128,
        width: 128,
        informativeness: 0.7,
        mis_rate: 0.12,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let map = normalize_unit(&entropy(&out.stack.predictions()[0]));

    let policies = [
        "largest-diff",
        "largest-diff:20",
        "max-frac:0.05",
        "max-frac:0.10",
        "max-frac:0.15",
    ];
    println!(
        "{:<18} {:>9} {:>9} {:>9} {:>9}",
        "policy", "t", "flagged", "prec", "recall"
    );
    for name in policies {
        let policy: ThresholdPolicy = name.parse()?;
        let t = policy.select(&map)?;
        let mask = flag(&map, t);
        let pr = precision_recall(&mask, &out.target)?;
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<18} {:>9.4} {:>9} {:>9} {:>9}",
            name,
            t,
            show(pr.pixel_fraction()),
            show(pr.precision()),
            show(pr.recall())
        );
    }
    // a pixel is flagged only when strictly above the threshold
    let mask = flag(&map, 1.0);
    println!("threshold 1.0 flags {} pixels", mask.num_flagged());
    Ok(())
}
