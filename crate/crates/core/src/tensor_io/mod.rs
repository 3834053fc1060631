//! Reading and writing probability tensors, label maps, uncertainty maps and
//! dataset manifests.
//!
//! Probability tensors are `.npy` v1.0 files holding little-endian float32
//! values in C order with shape `(K, H, W)`. Label maps are single-channel
//! PNGs. Loaders are pure functions and the loaded values are immutable.

mod labels;
mod manifest;
mod maps;
pub mod npy;
mod uncertainty_map;

pub use labels::{load_label_map, save_label_map, LabelMap, DEFAULT_IGNORE_INDEX};
pub use manifest::{load_probability_stack, DatasetManifest, ManifestEntry};
pub use maps::{
    load_probability_map, renormalize, save_probability_map, PredictionStack, ProbabilityMap,
    Scenario, NORMALIZED_TOLERANCE, SUM_TOLERANCE,
};
pub use uncertainty_map::{load_uncertainty_map, save_uncertainty_map, UncertaintyMap};
