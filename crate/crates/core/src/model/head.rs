//! Dense heads over fixed per-tile embeddings.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::arch::{ArchitectureSpec, InputKind};
use super::net::{forward as net_forward, load_input, Trace};
use super::train::{init_model, train, TrainConfig, TrainOutcome};
use super::{ClassifierModel, Input, ModelError};
use crate::geo::PixelBlock;

/// Backbone name recorded for embeddings produced by [`embed_tiles`].
pub const EMBEDDING_BACKBONE: &str = "frozen-cnn-trunk";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub backbone_name: String,
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(backbone_name: impl Into<String>, dim: usize) -> Self {
        Self {
            backbone_name: backbone_name.into(),
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, tile_id: impl Into<String>, row: Vec<f64>) -> Result<(), ModelError> {
        let tile_id = tile_id.into();
        if row.len() != self.dim {
            return Err(ModelError::InvalidEmbedding(format!(
                "{tile_id}: {} values, expected {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidEmbedding(format!(
                "{tile_id}: non-finite value"
            )));
        }
        self.rows.insert(tile_id, row);
        Ok(())
    }

    pub fn get(&self, tile_id: &str) -> Option<&[f64]> {
        self.rows.get(tile_id).map(Vec::as_slice)
    }

    /// Rows in tile-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Reads `tile_id,e0,e1,...` CSV.
pub fn read_embeddings<R: Read>(reader: R, backbone_name: &str) -> Result<EmbeddingSet, ModelError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ModelError::InvalidEmbedding(e.to_string()))?
        .clone();
    if headers.get(0) != Some("tile_id") {
        return Err(ModelError::InvalidEmbedding(
            "first column must be tile_id".into(),
        ));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("e{i}") {
            return Err(ModelError::InvalidEmbedding(format!(
                "column {} must be e{i}, found {h}",
                i + 1
            )));
        }
    }
    let mut set = EmbeddingSet::new(backbone_name, headers.len() - 1);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::InvalidEmbedding(format!("line {}: {e}", line + 2)))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::InvalidEmbedding(format!("line {}: {e}", line + 2)))?;
        set.insert(&rec[0], row)?;
    }
    Ok(set)
}

pub fn write_embeddings<W: Write>(set: &EmbeddingSet, writer: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| ModelError::Io(std::io::Error::other(e));
    let mut header = vec!["tile_id".to_string()];
    header.extend((0..set.dim).map(|i| format!("e{i}")));
    w.write_record(&header).map_err(to_io)?;
    for (id, row) in set.iter() {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Embeds tiles with the convolutional trunk of `model`: the spatial mean
/// of every channel after each conv block, concatenated.
pub fn embed_tiles<'a>(
    model: &ClassifierModel,
    tiles: &[(&'a str, &'a PixelBlock)],
) -> Result<EmbeddingSet, ModelError> {
    if !matches!(model.arch.input, InputKind::Image { .. }) {
        return Err(ModelError::InvalidArchitecture(
            "embedding needs an image model".into(),
        ));
    }
    let dim: usize = model.arch.conv_blocks.iter().map(|b| b.filters).sum();
    let layout = model.layout();
    let rows: Vec<Result<Vec<f64>, ModelError>> = tiles
        .par_iter()
        .enumerate()
        .map_init(Trace::default, |trace, (index, (_, px))| {
            if !load_input(&model.arch, &Input::from(*px), &mut trace.input) {
                return Err(ModelError::ShapeMismatch {
                    index,
                    expected: format!("{:?}", model.arch.input),
                });
            }
            net_forward::<ChaCha8Rng>(&model.arch, &layout, model.parameters(), trace, None);
            let mut row = Vec::with_capacity(dim);
            for c in &trace.convs {
                let plane = c.out_side * c.out_side;
                row.extend(
                    c.out
                        .chunks_exact(plane)
                        .map(|ch| ch.iter().sum::<f64>() / plane as f64),
                );
            }
            Ok(row)
        })
        .collect();
    let mut set = EmbeddingSet::new(EMBEDDING_BACKBONE, dim);
    for ((id, _), row) in tiles.iter().zip(rows) {
        set.insert(*id, row?)?;
    }
    Ok(set)
}

/// Trains a dense head on fixed embeddings.
///
/// Features are standardized with the training-set mean and spread while
/// fitting; the transform is folded into the first layer afterwards, so the
/// returned model consumes raw embedding rows.
pub fn train_head(
    emb: &EmbeddingSet,
    labels: &[(String, usize)],
    head_layers: usize,
    hidden_units: usize,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if !(1..=2).contains(&head_layers) {
        return Err(ModelError::InvalidArchitecture(format!(
            "head_layers must be 1 or 2, got {head_layers}"
        )));
    }
    let rows: Vec<&[f64]> = labels
        .iter()
        .map(|(id, _)| {
            emb.get(id)
                .ok_or_else(|| ModelError::MissingEmbedding(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let dim = emb.dim();
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; dim];
    for r in &rows {
        for ((s, v), m) in scale.iter_mut().zip(*r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let inputs: Vec<Input> = standardized.iter().map(|r| Input::Vector(r)).collect();
    let y: Vec<usize> = labels.iter().map(|(_, l)| *l).collect();

    let arch = ArchitectureSpec::dense_head(dim, head_layers, hidden_units, num_classes);
    let init = init_model(&arch, cfg.seed)?;
    let mut out = train(&init, &inputs, &y, cfg)?;

    // fold (x - mean) / scale into the first dense layer
    let first = out.model.layout().layers[0].clone();
    let params = out.model.parameters_mut();
    for j in 0..first.fan_out {
        let row = first.weight_offset + j * first.fan_in;
        let mut shift = 0.0;
        for d in 0..dim {
            params[row + d] /= scale[d];
            shift += params[row + d] * mean[d];
        }
        params[first.bias_offset + j] -= shift;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut set = EmbeddingSet::new("b", 3);
        set.insert("a/1", vec![0.1, -2.5e-7, 3.0]).unwrap();
        set.insert("a/0", vec![1.0 / 3.0, 0.0, f64::MAX]).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        assert!(buf.starts_with(b"tile_id,e0,e1,e2\n"));
        assert_eq!(read_embeddings(&buf[..], "b").unwrap(), set);
    }

    #[test]
    fn rows_must_match_dim() {
        let mut set = EmbeddingSet::new("b", 2);
        assert!(set.insert("x", vec![1.0]).is_err());
        assert!(set.insert("x", vec![1.0, f64::NAN]).is_err());
        assert!(read_embeddings(&b"tile_id,e0,e2\nx,1,2\n"[..], "b").is_err());
    }
}
