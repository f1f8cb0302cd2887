use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular (pivot {pivot} vanished)")]
    Singular { pivot: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("CFL condition violated: dt = {dt} exceeds the stability bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("training diverged: MSE {mse:e} exceeds 1e6 with learning rate {learning_rate}")]
    Divergence { learning_rate: f64, mse: f64 },

    #[error("invalid permutation for hidden layer of width {width}: {perm:?}")]
    InvalidPermutation { width: usize, perm: Vec<usize> },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
