use thiserror::Error;

/// Errors raised across the crate. Tensor coordinates are reported 1-based,
/// with the background channel numbered `C + 1`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative entry at (class {class}, row {row}, col {col})")]
    NegativeEntry { class: usize, row: usize, col: usize },

    #[error("location ({row}, {col}) sums to {sum}, expected 1")]
    UnnormalizedLocation { row: usize, col: usize, sum: f64 },

    #[error("non-finite input value")]
    NonFiniteInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} outside 1..={num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("subset is empty")]
    EmptySubset,

    #[error("label set order {order} exceeds the configured maximum {max}")]
    SubsetOrderExceeded { order: usize, max: usize },

    #[error("brute-force enumeration of {size} assignments exceeds the limit {limit}")]
    EnumerationTooLarge { size: f64, limit: f64 },

    #[error("label set has zero probability; gradient undefined")]
    ZeroProbability,

    #[error("label set is empty")]
    EmptyLabelSet,

    #[error("maximum probability of class {label} is zero")]
    MaxIsZero { label: usize },

    #[error("tensor must have a single location")]
    ShapeNotSingleton,

    #[error("glyph of size {glyph} does not fit a {height}x{width} canvas")]
    GlyphTooLargeForCanvas { glyph: usize, height: usize, width: usize },

    #[error("input {height}x{width} is too small for the model")]
    InputTooSmall { height: usize, width: usize },

    #[error("sample {index} has zero probability under the model")]
    ZeroProbabilitySample { index: usize },

    #[error("objective diverged at epoch {epoch}: {value} exceeds 10x initial {initial}")]
    DivergedObjective { epoch: usize, value: f64, initial: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
