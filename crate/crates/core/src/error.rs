use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("leg index {index} out of range for a model with {count} legs")]
    InvalidLeg { index: usize, count: usize },

    #[error("shape vector has {got} entries, model has {expected} legs")]
    ShapeArity { expected: usize, got: usize },

    #[error("at least one stance leg is required")]
    EmptyStance,

    #[error("{count} simultaneous stance legs are not supported (at most 2)")]
    TooManyStanceLegs { count: usize },

    #[error("singular shape at ({}, {}): |grad F| = {grad_norm:e}", point[0], point[1])]
    SingularShape { point: [f64; 2], grad_norm: f64 },

    #[error("stance pairs overlap on leg {leg}")]
    StanceOverlap { leg: usize },

    #[error("non-finite body velocity at phase {tau}")]
    NonFiniteVelocity { tau: f64 },

    #[error("closed contour did not close within arc length {max_length}")]
    OpenContour { max_length: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
