//! Labeled tiles, run segmentation, split planning and leakage checks.

mod augment;
mod leakage;
mod runs;
mod split;
mod store;
mod tiles;

pub use augment::{augment_tiles, flip_horizontal, rotate_quarter};
pub use leakage::{leakage_check, LeakageReport, OverlapViolation};
pub use runs::{segment_runs, Run, RunKey, DEFAULT_RUN_LENGTH_M};
pub use split::{
    heldout_splits, standard_split, Assignment, Side, SplitKind, SplitPlan, DEFAULT_TRAIN_FRACTION,
};
pub use store::{read_tile_dataset, write_tile_dataset, TileDataset, TileEntry, TILE_SCHEMA_VERSION};
pub use tiles::{
    extract_all, extract_tiles, length_weighted_iri, resize_tiles, LabeledTile, SkipReason, SkipReport, Span,
    TileExtraction,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("held-out splitting needs at least 2 roads, found {0}")]
    TooFewRoads(usize),
    #[error("tile {tile_id} references run {road_id}#{run_index}, which is not in the plan")]
    UnknownRun {
        tile_id: String,
        road_id: String,
        run_index: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tile dataset {path}: {message}")]
    Store { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
