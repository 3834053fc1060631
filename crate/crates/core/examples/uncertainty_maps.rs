//! Every uncertainty metric on one synthetic MC-dropout stack, and how well
//! each separates the pixels the model got wrong.
//!
//! cargo run --example uncertainty_maps

use seg_uncertainty::evaluation::auroc;
use seg_uncertainty::synth::{generate, SynthConfig};
use seg_uncertainty::tensor_io::Scenario;
use seg_uncertainty::uncertainty::{Metric, Normalization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig {
        height: 96,
        width: 128,
        num_classes: 6,
        num_predictions: 8,
        scenario: Scenario::Drop,
        informativeness: 0.6,
        seed: 7,
        ..SynthConfig::default()
    };
    let out = generate(&config)?;
    println!(
        "{}x{} image, K={}, {} dropout passes, {:.1}% misclassified",
        config.height,
        config.width,
        config.num_classes,
        out.stack.len(),
        100.0 * out.realized_mis_rate()
    );
    println!(
        "{:<12} {:>10} {:>10} {:>8}",
        "metric", "mean(ok)", "mean(err)", "AUROC"
    );
    for metric in Metric::ALL {
        let raw = metric.compute(&out.stack, Some(&out.image))?;
        let map = Normalization::Unit.apply(raw);
        let (mut ok, mut err, mut n_ok, mut n_err) = (0.0, 0.0, 0, 0);
        for (&u, &m) in map.values().iter().zip(out.target.misclassified()) {
            if m {
                err += f64::from(u);
                n_err += 1;
            } else {
                ok += f64::from(u);
                n_ok += 1;
            }
        }
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>8.4}",
            metric.name(),
            ok / n_ok as f64,
            err / n_err as f64,
            auroc(&map, &out.target)?
        );
    }
    Ok(())
}
