use serde::{Deserialize, Serialize};

use super::ModelError;

/// One convolution block: `filters` 3×3 same-padded kernels, ReLU, then a
/// `pool`×`pool` max pool with stride `pool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

impl ConvBlock {
    pub fn new(filters: usize) -> Self {
        Self {
            filters,
            kernel: 3,
            pool: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputKind {
    /// Square RGB tiles of `size` pixels.
    Image { size: usize, channels: usize },
    /// Fixed-length feature vectors, e.g. imported embeddings.
    Vector { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input: InputKind,
    pub conv_blocks: Vec<ConvBlock>,
    /// Width of the hidden dense layer; 0 means logits come straight from
    /// the flattened features.
    pub hidden_units: usize,
    /// Inverted dropout after the hidden dense layer.
    pub dropout_rate: f64,
    pub num_classes: usize,
}

pub const DEFAULT_CONV_FILTERS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_HIDDEN_UNITS: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.5;

impl ArchitectureSpec {
    /// The default tile classifier: three conv blocks (16, 32, 64 filters),
    /// a 128-unit hidden layer and dropout 0.5.
    pub fn native_cnn(input_size: usize, num_classes: usize) -> Self {
        Self {
            input: InputKind::Image {
                size: input_size,
                channels: 3,
            },
            conv_blocks: DEFAULT_CONV_FILTERS.iter().map(|&f| ConvBlock::new(f)).collect(),
            hidden_units: DEFAULT_HIDDEN_UNITS,
            dropout_rate: DEFAULT_DROPOUT,
            num_classes,
        }
    }

    /// Dense-only head over `dim`-wide vectors with one (logistic) or two
    /// dense layers.
    pub fn dense_head(dim: usize, head_layers: usize, hidden_units: usize, num_classes: usize) -> Self {
        Self {
            input: InputKind::Vector { dim },
            conv_blocks: Vec::new(),
            hidden_units: if head_layers >= 2 { hidden_units } else { 0 },
            dropout_rate: if head_layers >= 2 { DEFAULT_DROPOUT } else { 0.0 },
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |m: String| Err(ModelError::InvalidArchitecture(m));
        if !matches!(self.num_classes, 2 | 5) {
            return invalid(format!("num_classes must be 2 or 5, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return invalid(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        match self.input {
            InputKind::Image { size, channels } => {
                if size == 0 || channels == 0 {
                    return invalid("image input must be non-empty".into());
                }
                if self.conv_blocks.is_empty() {
                    return invalid("image models need at least one conv block".into());
                }
                let mut spatial = size;
                for (i, b) in self.conv_blocks.iter().enumerate() {
                    if b.filters == 0 || b.kernel % 2 == 0 || b.pool == 0 {
                        return invalid(format!(
                            "conv block {i}: filters must be positive, kernel odd, pool positive"
                        ));
                    }
                    spatial /= b.pool;
                    if spatial < 1 {
                        return invalid(format!(
                            "pooling collapses {size} px input below 1 px at block {i}"
                        ));
                    }
                }
            }
            InputKind::Vector { dim } => {
                if dim == 0 {
                    return invalid("vector input must be non-empty".into());
                }
                if !self.conv_blocks.is_empty() {
                    return invalid("vector input cannot feed conv blocks".into());
                }
            }
        }
        Ok(())
    }

    /// Spatial side length after all pools (1 for vector inputs).
    pub fn final_spatial(&self) -> usize {
        match self.input {
            InputKind::Image { size, .. } => self.conv_blocks.iter().fold(size, |s, b| s / b.pool),
            InputKind::Vector { .. } => 1,
        }
    }

    /// Number of scalars entering the dense layers.
    pub fn flat_features(&self) -> usize {
        match self.input {
            InputKind::Image { .. } => {
                let s = self.final_spatial();
                self.conv_blocks.last().map_or(0, |b| b.filters) * s * s
            }
            InputKind::Vector { dim } => dim,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind: LayerKind, fan_in: usize, fan_out: usize| {
            let weights = fan_in * fan_out;
            layers.push(LayerParams {
                name,
                kind,
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + weights,
            });
            offset += weights + fan_out;
        };
        if let InputKind::Image { channels, .. } = self.input {
            let mut in_ch = channels;
            for (i, b) in self.conv_blocks.iter().enumerate() {
                push(
                    format!("conv{i}"),
                    LayerKind::Conv(*b),
                    in_ch * b.kernel * b.kernel,
                    b.filters,
                );
                in_ch = b.filters;
            }
        }
        let mut width = self.flat_features();
        if self.hidden_units > 0 {
            push("hidden".into(), LayerKind::Dense, width, self.hidden_units);
            width = self.hidden_units;
        }
        push("output".into(), LayerKind::Dense, width, self.num_classes);
        ParamLayout {
            layers,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvBlock),
    Dense,
}

/// Location of one layer's weights and biases in the flat parameter vector.
/// Weights are `[fan_out][fan_in]` row-major; for conv layers `fan_in` is
/// `in_channels * k * k` ordered channel, row, column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParams {
    pub name: String,
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerParams {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: Vec<LayerParams>,
    pub total: usize,
}

impl ParamLayout {
    /// Range of a named slice such as `conv0.weight` or `output.bias`.
    pub fn slice(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let (layer, part) = name.rsplit_once('.')?;
        let l = self.layers.iter().find(|l| l.name == layer)?;
        match part {
            "weight" => Some(l.weights()),
            "bias" => Some(l.biases()),
            _ => None,
        }
    }

    pub fn is_bias(&self, index: usize) -> bool {
        self.layers.iter().any(|l| l.biases().contains(&index))
    }
}
