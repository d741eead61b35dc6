//! Event-camera pose toolkit: event streams, TORE volumes, a frame-to-event
//! simulator, mask gating, heatmap triangulation and evaluation metrics.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod event;
pub mod gating;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod pnm;
pub mod pose;
pub mod sim;
pub mod tensor;
pub mod tore;

use thiserror::Error;

/// Any library failure, with the process exit code it maps to.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(#[from] config::ConfigError),
    #[error("events: {0}")]
    Event(#[from] event::EventError),
    #[error("tore: {0}")]
    Tore(#[from] tore::ToreError),
    #[error("tensor: {0}")]
    Tensor(#[from] tensor::TensorError),
    #[error("mask: {0}")]
    Mask(#[from] mask::MaskError),
    #[error("image: {0}")]
    Pnm(#[from] pnm::PnmError),
    #[error("simulator: {0}")]
    Sim(#[from] sim::SimError),
    #[error("labels: {0}")]
    Label(#[from] sim::labels::LabelError),
    #[error("pose: {0}")]
    Pose(#[from] pose::PoseError),
    #[error("gating: {0}")]
    Gating(#[from] gating::GatingError),
    #[error("metrics: {0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(String),
    #[error("internal: {0}")]
    Internal(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::Sim(sim::SimError::InvalidParam(_)) => EXIT_CONFIG,
            Error::Tore(tore::ToreError::InvalidTau(_) | tore::ToreError::InvalidDepth(_)) => {
                EXIT_CONFIG
            }
            Error::Gating(gating::GatingError::InvalidBeta(_)) => EXIT_CONFIG,
            Error::Metrics(
                metrics::MetricsError::InvalidAlpha(_)
                | metrics::MetricsError::InvalidProbability(_),
            ) => EXIT_CONFIG,
            Error::Tore(tore::ToreError::ValueOutOfRange { .. })
            | Error::Sim(sim::SimError::Internal(_)) => EXIT_INTERNAL,
            Error::Internal(_) => EXIT_INTERNAL,
            Error::Context { source, .. } => source.exit_code(),
            _ => EXIT_DATA,
        }
    }

    pub fn context(self, what: impl Into<String>) -> Self {
        Error::Context {
            context: what.into(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
