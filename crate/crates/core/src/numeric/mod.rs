//! Dense matrices, reverse-mode differentiation and the Adam rule.

mod adam;
mod gradcheck;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use matrix::{Matrix, SparseRows};
pub use tape::{Gradients, Tape, Var};


/// Errors from matrix arithmetic and the tape.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{len} values cannot fill a {rows}x{cols} matrix")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("column range {start}..{end} outside {cols} columns")]
    ColumnRange { start: usize, end: usize, cols: usize },
    #[error("row index {index} outside {rows} rows")]
    RowIndex { index: usize, rows: usize },
    #[error("variable {index} does not belong to this tape ({len} nodes)")]
    UnknownVar { index: usize, len: usize },
    #[error("loss must be 1x1, got {}x{}", shape.0, shape.1)]
    NonScalarLoss { shape: (usize, usize) },
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("{targets} targets for {rows} logit rows")]
    TargetCount { rows: usize, targets: usize },
    #[error("target class {class} outside {classes} classes")]
    TargetClass { class: usize, classes: usize },
    #[error("gradient reversal strength must be finite and >= 0, got {0}")]
    InvalidReversal(f64),
    #[error("finite-difference step must be > 0, got {0}")]
    InvalidStep(f64),
}
