use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::{load_label_map, LabelMap, DEFAULT_IGNORE_INDEX};
use super::maps::{load_probability_map, PredictionStack, Scenario};
use crate::error::{Error, Result};

fn default_ignore_index() -> u16 {
    DEFAULT_IGNORE_INDEX
}

/// One image of a dataset: its labels and the prediction files of its stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub label_path: String,
    pub prediction_paths: Vec<String>,
    pub scenario: Scenario,
    /// Source image, needed only by the edge baseline and overlays on the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    /// RNG seed used by the exporter for stochastic scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// JSON index of a dataset. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    #[serde(default = "default_ignore_index")]
    pub ignore_index: u16,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(class_names: Vec<String>, ignore_index: u16, entries: Vec<ManifestEntry>) -> Self {
        Self {
            class_names,
            ignore_index,
            entries,
            base_dir: PathBuf::new(),
        }
    }

    /// Parses and validates a manifest; every referenced file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate(&path.display().to_string())?;
        Ok(manifest)
    }

    fn validate(&self, source: &str) -> Result<()> {
        let format = |reason: String| Error::Format {
            path: source.to_string(),
            reason,
        };
        if self.class_names.len() < 2 {
            return Err(format(format!(
                "need at least 2 classes, got {}",
                self.class_names.len()
            )));
        }
        if self.entries.is_empty() {
            return Err(format("manifest lists no images".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self
            .entries
            .iter()
            .find(|e| !seen.insert(e.image_id.as_str()))
        {
            return Err(format(format!(
                "image id `{}` appears more than once",
                dup.image_id
            )));
        }
        let mut missing = Vec::new();
        for entry in &self.entries {
            if entry.prediction_paths.is_empty() {
                return Err(format(format!(
                    "entry `{}` lists no prediction files",
                    entry.image_id
                )));
            }
            if entry.scenario == Scenario::Base && entry.prediction_paths.len() != 1 {
                return Err(format(format!(
                    "entry `{}` is a base scenario with {} prediction files",
                    entry.image_id,
                    entry.prediction_paths.len()
                )));
            }
            let files = std::iter::once(&entry.label_path)
                .chain(&entry.prediction_paths)
                .chain(entry.image_path.as_ref());
            for file in files {
                let resolved = self.resolve(file);
                if !resolved.is_file() {
                    missing.push(resolved.display().to_string());
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingFiles(missing))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn load_stack(&self, entry: &ManifestEntry) -> Result<PredictionStack> {
        let stack = load_probability_stack(entry, &self.base_dir)?;
        if stack.num_classes() != self.num_classes() {
            return Err(Error::Format {
                path: self
                    .resolve(&entry.prediction_paths[0])
                    .display()
                    .to_string(),
                reason: format!(
                    "{} classes in tensor, manifest names {}",
                    stack.num_classes(),
                    self.num_classes()
                ),
            });
        }
        Ok(stack)
    }

    pub fn load_labels(&self, entry: &ManifestEntry) -> Result<LabelMap> {
        load_label_map(
            &self.resolve(&entry.label_path),
            self.ignore_index,
            self.num_classes(),
        )
    }
}

/// Loads every prediction file of an entry, in manifest order.
pub fn load_probability_stack(entry: &ManifestEntry, base_dir: &Path) -> Result<PredictionStack> {
    let mut maps = Vec::with_capacity(entry.prediction_paths.len());
    for rel in &entry.prediction_paths {
        let path = base_dir.join(rel);
        let map = load_probability_map(&path)?;
        if let Some(first) = maps.first() {
            let first: &super::ProbabilityMap = first;
            if first.shape() != map.shape() {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    reason: format!(
                        "shape {:?} differs from first prediction {:?}",
                        map.shape(),
                        first.shape()
                    ),
                });
            }
        }
        maps.push(map);
    }
    PredictionStack::new(maps, entry.scenario)
}
