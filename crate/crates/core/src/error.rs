use thiserror::Error;

/// Errors produced by the geometric pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("at least one line segment is required")]
    EmptyLines,
    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },
    #[error("supervision mask selects no pixels")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("sample point ({x}, {y}) lies outside the field")]
    OutOfBounds { x: f64, y: f64 },
    #[error("projection maps the point to infinity (|w| = {w:e})")]
    DegenerateProjection { w: f64 },
    #[error("homography is singular")]
    SingularHomography,
    #[error("the two lines are identical")]
    IdenticalLines,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("no model reached the required support")]
    NoModel,
    #[error("image must be at least 2x2, got {width}x{height}")]
    TooSmallImage { width: usize, height: usize },
    #[error("{empty} of {total} warped images produced no line segments")]
    InsufficientSignal { empty: usize, total: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
