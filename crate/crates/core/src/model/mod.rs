//! Small convolutional classifiers and dense heads, trained from scratch in
//! 64-bit floats.

mod arch;
mod gradcheck;
mod head;
mod io;
mod net;
mod train;

use thiserror::Error;

use crate::geo::PixelBlock;

pub use arch::{
    ArchitectureSpec, ConvBlock, InputKind, LayerKind, LayerParams, ParamLayout, DEFAULT_CONV_FILTERS,
    DEFAULT_DROPOUT, DEFAULT_HIDDEN_UNITS,
};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPSILON, MIN_CHECKED_PARAMS};
pub use head::{
    embed_tiles, read_embeddings, train_head, write_embeddings, EmbeddingSet, EMBEDDING_BACKBONE,
};
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    argmax, forward, init_model, loss_and_gradient, predict, train, Prediction, TrainConfig, TrainOutcome,
    DIVERGENCE_LOSS,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("input {index} does not match the model input ({expected})")]
    ShapeMismatch { index: usize, expected: String },
    #[error("label {label} of example {index} is not below {num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{inputs} inputs but {labels} labels")]
    LengthMismatch { inputs: usize, labels: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class ({0})")]
    DegenerateLabels(usize),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("no embedding for tile {0}")]
    MissingEmbedding(String),
    #[error("invalid embedding data: {0}")]
    InvalidEmbedding(String),
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One example fed to a model.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    /// Interleaved RGB bytes of a `size`×`size` tile.
    Pixels {
        size: usize,
        data: &'a [u8],
    },
    Vector(&'a [f64]),
}

impl<'a> From<&'a PixelBlock> for Input<'a> {
    fn from(b: &'a PixelBlock) -> Self {
        Input::Pixels {
            size: b.size,
            data: &b.data,
        }
    }
}

impl<'a> From<&'a [f64]> for Input<'a> {
    fn from(v: &'a [f64]) -> Self {
        Input::Vector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub arch: ArchitectureSpec,
    parameters: Vec<f64>,
    pub trained_epochs: usize,
    pub seed: u64,
    /// Free-form record of the configuration that produced the model.
    pub provenance: serde_json::Value,
}

impl ClassifierModel {
    /// Checks the parameter count against the architecture and that every
    /// value is finite.
    pub fn new(
        arch: ArchitectureSpec,
        parameters: Vec<f64>,
        trained_epochs: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        let expected = arch.layout().total;
        if parameters.len() != expected {
            return Err(ModelError::InvalidArchitecture(format!(
                "architecture needs {expected} parameters, got {}",
                parameters.len()
            )));
        }
        if let Some(i) = parameters.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::InvalidArchitecture(format!(
                "parameter {i} is not finite"
            )));
        }
        Ok(Self {
            arch,
            parameters,
            trained_epochs,
            seed,
            provenance: serde_json::Value::Null,
        })
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn layout(&self) -> ParamLayout {
        self.arch.layout()
    }

    /// Named parameter slice, e.g. `hidden.weight`.
    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout().slice(name).map(|r| &self.parameters[r])
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.parameters
    }
}
