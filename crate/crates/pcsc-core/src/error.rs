use thiserror::Error;

/// Errors reported by the core pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operation received an empty point set.
    #[error("point set is empty")]
    EmptyPointSet,

    /// A coordinate was NaN or infinite.
    #[error("point set contains a non-finite coordinate")]
    NonFiniteCoordinate,

    /// A sample or neighbor count exceeds the number of available points.
    #[error("requested {requested} points but only {available} are available")]
    CountExceedsPoints { requested: usize, available: usize },

    /// Voxel cell size must be strictly positive.
    #[error("voxel cell size must be > 0, got {0}")]
    InvalidVoxelCell(f64),

    /// All points coincide, so the cloud cannot be scale-normalized.
    #[error("degenerate cloud: all points identical, cannot normalize")]
    DegenerateCloud,

    /// A cloud does not have the point count the model expects.
    #[error("expected a cloud of {expected} points, got {actual}")]
    WrongPointCount { expected: usize, actual: usize },

    /// Background removal suppressed every point of the scene.
    #[error("background removal left no points; sample should be skipped")]
    BackgroundRemovedEverything,

    /// Background removal was requested but no reference scan was supplied.
    #[error("background removal enabled but no reference scan given")]
    MissingReference,

    /// Tensor shapes do not line up with the configured architecture.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A configuration invariant was violated.
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    /// A class has too few samples for a stratified split.
    #[error("class {class} has only {count} samples; at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// Evaluation was asked to run over an empty test set.
    #[error("test set is empty")]
    EmptyTestSet,

    /// A label is outside the configured class range.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
