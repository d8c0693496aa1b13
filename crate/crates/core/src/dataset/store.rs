//! Tile dataset on disk: a JSON manifest plus a packed pixel blob.
//!
//! For a dataset path `tiles.bin` the manifest lives at `tiles.json`; either
//! path may be passed to the readers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runs::Run;
use super::tiles::{LabeledTile, SkipReport, Span};
use super::DatasetError;
use crate::fsio::write_atomic;
use crate::geo::PixelBlock;
use crate::survey::{bin_iri, binarize, BinaryLabel, QualityClass};

pub const TILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TileDataset {
    /// Pixel size of the stored tiles (after any resize).
    pub tile_px: usize,
    /// Pixel size at which tiles were cut from the raster.
    pub source_tile_px: usize,
    pub run_length_m: f64,
    pub runs: Vec<Run>,
    pub tiles: Vec<LabeledTile>,
    pub skips: SkipReport,
    /// Configuration and seed that produced the dataset.
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub tile_id: String,
    pub road_id: String,
    pub run_index: usize,
    pub chainage_start: f64,
    pub chainage_end: f64,
    pub iri_label: f64,
    pub class_label: QualityClass,
    pub binary_label: BinaryLabel,
    pub offset: u64,
    pub length: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    blob: String,
    tile_px: usize,
    source_tile_px: usize,
    run_length_m: f64,
    skips: SkipReport,
    provenance: serde_json::Value,
    runs: Vec<Run>,
    tiles: Vec<TileEntry>,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("json"))
}

fn store_err(path: &Path, message: impl Into<String>) -> DatasetError {
    DatasetError::Store {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes blob and manifest, each atomically; returns the manifest path.
pub fn write_tile_dataset(path: &Path, ds: &TileDataset) -> Result<PathBuf, DatasetError> {
    let (blob_path, manifest_path) = paths(path);
    let tile_bytes = ds.tile_px * ds.tile_px * 3;
    let mut blob = Vec::with_capacity(ds.tiles.len() * tile_bytes);
    let mut entries = Vec::with_capacity(ds.tiles.len());
    for t in &ds.tiles {
        if t.pixels.size != ds.tile_px {
            return Err(store_err(
                path,
                format!(
                    "tile {} is {} px, dataset is {} px",
                    t.tile_id, t.pixels.size, ds.tile_px
                ),
            ));
        }
        entries.push(TileEntry {
            tile_id: t.tile_id.clone(),
            road_id: t.road_id.clone(),
            run_index: t.run_index,
            chainage_start: t.span.start,
            chainage_end: t.span.end,
            iri_label: t.iri_label,
            class_label: t.class_label,
            binary_label: t.binary_label,
            offset: blob.len() as u64,
            length: tile_bytes as u64,
        });
        blob.extend_from_slice(&t.pixels.data);
    }
    let manifest = Manifest {
        schema_version: TILE_SCHEMA_VERSION,
        blob: blob_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tile_px: ds.tile_px,
        source_tile_px: ds.source_tile_px,
        run_length_m: ds.run_length_m,
        skips: ds.skips,
        provenance: ds.provenance.clone(),
        runs: ds.runs.clone(),
        tiles: entries,
    };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| store_err(path, e.to_string()))?;
    text.push(b'\n');
    write_atomic(&blob_path, &blob)?;
    write_atomic(&manifest_path, &text)?;
    Ok(manifest_path)
}

pub fn read_tile_dataset(path: &Path) -> Result<TileDataset, DatasetError> {
    let (_, manifest_path) = paths(path);
    let text = std::fs::read(&manifest_path)
        .map_err(|e| store_err(&manifest_path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| store_err(&manifest_path, e.to_string()))?;
    if manifest.schema_version != TILE_SCHEMA_VERSION {
        return Err(store_err(
            &manifest_path,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    let blob_path = manifest_path.with_file_name(&manifest.blob);
    let blob = std::fs::read(&blob_path)
        .map_err(|e| store_err(&blob_path, format!("cannot read pixel blob: {e}")))?;
    let tile_bytes = (manifest.tile_px * manifest.tile_px * 3) as u64;
    let mut tiles = Vec::with_capacity(manifest.tiles.len());
    for (i, e) in manifest.tiles.into_iter().enumerate() {
        let bad = |m: String| store_err(&manifest_path, format!("tile {} ({}): {m}", i + 1, e.tile_id));
        if e.length != tile_bytes {
            return Err(bad(format!("length {} != {tile_bytes}", e.length)));
        }
        let end = e
            .offset
            .checked_add(e.length)
            .filter(|&end| end <= blob.len() as u64);
        let Some(end) = end else {
            return Err(bad("pixel range past the end of the blob".into()));
        };
        if e.chainage_start.partial_cmp(&e.chainage_end) != Some(std::cmp::Ordering::Less) {
            return Err(bad("empty chainage span".into()));
        }
        let class = bin_iri(e.iri_label).map_err(|err| bad(err.to_string()))?;
        let binary = binarize(e.iri_label).map_err(|err| bad(err.to_string()))?;
        if class != e.class_label || binary != e.binary_label {
            return Err(bad("class labels disagree with iri_label".into()));
        }
        tiles.push(LabeledTile {
            tile_id: e.tile_id,
            road_id: e.road_id,
            run_index: e.run_index,
            span: Span::new(e.chainage_start, e.chainage_end),
            iri_label: e.iri_label,
            class_label: e.class_label,
            binary_label: e.binary_label,
            pixels: PixelBlock::new(manifest.tile_px, blob[e.offset as usize..end as usize].to_vec()),
        });
    }
    Ok(TileDataset {
        tile_px: manifest.tile_px,
        source_tile_px: manifest.source_tile_px,
        run_length_m: manifest.run_length_m,
        runs: manifest.runs,
        tiles,
        skips: manifest.skips,
        provenance: manifest.provenance,
    })
}
