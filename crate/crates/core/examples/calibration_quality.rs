//! Segmentation quality and calibration: mIoU, expected calibration error
//! with a reliability table, and the Brier score.
//!
//! cargo run --example calibration_quality

use seg_uncertainty::evaluation::{
    accumulate_confusion, argmax_with_confidence, brier, ece, EceAccumulator,
};
use seg_uncertainty::synth::{generate, SynthConfig};
use seg_uncertainty::uncertainty::average_probabilities;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = generate(&SynthConfig {
        num_classes: 4,
        num_predictions: 5,
        scenario: seg_uncertainty::tensor_io::Scenario::Noise,
        informativeness: 0.8,
        ignore_rate: 0.05,
        seed: 21,
        ..SynthConfig::default()
    })?;
    let mean = average_probabilities(&out.stack);
    let (pred, confidence) = argmax_with_confidence(&mean);

    let cm = accumulate_confusion(&pred, &out.labels)?;
    for (c, iou) in cm.iou_per_class().iter().enumerate() {
        println!(
            "IoU class {c}: {}",
            iou.map_or("absent".into(), |v| format!("{v:.4}"))
        );
    }
    println!("mIoU {:.4}", cm.miou()?.mean);

    let bins = 10;
    let mut table = vec![(0u64, 0u64, 0f64); bins];
    let mut acc = EceAccumulator::new(bins)?;
    for ((&c, &p), &g) in confidence
        .iter()
        .zip(pred.labels())
        .zip(out.labels.labels())
    {
        if g == out.labels.ignore_index() {
            continue;
        }
        let b = acc.bin_of(f64::from(c));
        acc.add(f64::from(c), p == g);
        table[b].0 += 1;
        table[b].1 += u64::from(p == g);
        table[b].2 += f64::from(c);
    }
    println!("bin  count  accuracy  confidence");
    for (b, &(n, ok, conf)) in table.iter().enumerate().filter(|(_, t)| t.0 > 0) {
        println!(
            "{b:>3} {n:>6} {:>9.3} {:>11.3}",
            ok as f64 / n as f64,
            conf / n as f64
        );
    }
    println!(
        "ECE({bins}) {:.4} (one-shot helper: {:.4})",
        acc.value()?,
        ece(&mean, &out.labels, bins)?
    );
    println!("Brier {:.4}", brier(&mean, &out.labels)?);
    Ok(())
}
