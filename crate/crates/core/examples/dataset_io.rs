//! Building a dataset by hand: `.npy` probability tensors, PNG label maps
//! and the JSON manifest tying them together, then loading it back.
//!
//! cargo run --example dataset_io

use seg_uncertainty::tensor_io::{
    save_label_map, save_probability_map, DatasetManifest, LabelMap, ManifestEntry, ProbabilityMap,
    Scenario,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = std::env::temp_dir().join(format!("segunc_dataset_io_{}", std::process::id()));
    std::fs::create_dir_all(&tmp)?;
    let (k, h, w) = (3, 4, 5);

    // class-major (K, H, W): every pixel leans towards class (row % 3)
    let n = h * w;
    let mut probs = vec![0.1f32; k * n];
    for p in 0..n {
        probs[(p / w % k) * n + p] = 0.8;
    }
    let mut labels: Vec<u16> = (0..n).map(|p| (p / w % k) as u16).collect();
    labels[0] = 255; // ignored
    labels[7] = 2; // one disagreement

    let mut prediction_paths = Vec::new();
    for m in 0..2 {
        let name = format!("img0_{m:02}.npy");
        save_probability_map(
            &ProbabilityMap::from_raw(probs.clone(), k, h, w)?,
            &tmp.join(&name),
        )?;
        prediction_paths.push(name);
    }
    save_label_map(
        &LabelMap::new(labels, h, w, 255, k)?,
        &tmp.join("img0_labels.png"),
    )?;

    let entry = ManifestEntry {
        image_id: "img0".into(),
        label_path: "img0_labels.png".into(),
        prediction_paths,
        scenario: Scenario::Drop,
        image_path: None,
        seed: Some(1),
    };
    let names = vec!["road".into(), "car".into(), "sky".into()];
    DatasetManifest::new(names, 255, vec![entry]).save(&tmp.join("manifest.json"))?;
    println!("{}", std::fs::read_to_string(tmp.join("manifest.json"))?);

    let manifest = DatasetManifest::load(&tmp.join("manifest.json"))?;
    let entry = &manifest.entries[0];
    let stack = manifest.load_stack(entry)?;
    let gt = manifest.load_labels(entry)?;
    println!(
        "loaded {} predictions of shape {:?}; {} of {} pixels valid",
        stack.len(),
        stack.predictions()[0].shape(),
        gt.num_valid(),
        gt.labels().len()
    );
    std::fs::remove_dir_all(&tmp)?;
    Ok(())
}
