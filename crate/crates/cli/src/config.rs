use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use roadq::dataset::{DEFAULT_RUN_LENGTH_M, DEFAULT_TRAIN_FRACTION};
use roadq::model::TrainConfig;
use roadq::survey::Task;
use serde::{Deserialize, Serialize};

use crate::{data_err, usage, Result};

/// Which classifier `pipeline` trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Small CNN trained end to end on tile pixels.
    Cnn,
    /// Dense head on frozen trunk embeddings.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub class_balanced: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            l2: d.l2,
            class_balanced: d.class_balanced,
        }
    }
}

/// Everything a run depends on. Read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Tile edge in raster pixels: 64 or 224.
    pub tile_px: usize,
    /// Upsample 64 px tiles to 224 px after cutting.
    pub resize_to_224: bool,
    pub task: Task,
    pub max_gap_days: u32,
    pub run_length_m: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Named file locations (e.g. `roads`, `survey`, `raster`, `scene`).
    pub paths: BTreeMap<String, PathBuf>,
    pub classifier: ClassifierKind,
    pub head_layers: usize,
    pub head_hidden: usize,
    pub train: TrainSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile_px: 64,
            resize_to_224: false,
            task: Task::Binary,
            max_gap_days: 365,
            run_length_m: DEFAULT_RUN_LENGTH_M,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
            paths: BTreeMap::new(),
            classifier: ClassifierKind::Cnn,
            head_layers: 1,
            head_hidden: 64,
            train: TrainSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_px != 64 && self.tile_px != 224 {
            return Err(usage(format!(
                "--tile-px must be 64 or 224, got {}",
                self.tile_px
            )));
        }
        if self.resize_to_224 && self.tile_px != 64 {
            return Err(usage("--resize-to-224 needs --tile-px 64"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(usage(format!(
                "--train-fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if !(self.run_length_m > 0.0 && self.run_length_m.is_finite()) {
            return Err(usage(format!(
                "--run-length-m must be positive, got {}",
                self.run_length_m
            )));
        }
        if !(1..=2).contains(&self.head_layers) {
            return Err(usage(format!(
                "--head-layers must be 1 or 2, got {}",
                self.head_layers
            )));
        }
        if self.head_hidden == 0 {
            return Err(usage("head_hidden must be at least 1"));
        }
        self.train_config().validate().map_err(|e| usage(e.to_string()))
    }

    /// Edge of the stored tiles.
    pub fn stored_tile_px(&self) -> usize {
        if self.resize_to_224 {
            224
        } else {
            self.tile_px
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed,
            l2: self.train.l2,
            class_balanced: self.train.class_balanced,
        }
    }

    pub fn path(&self, name: &str) -> Option<&Path> {
        self.paths.get(name).map(PathBuf::as_path)
    }
}
