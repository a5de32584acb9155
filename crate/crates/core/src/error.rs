use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Pre-projection depth is at (or behind) the camera plane.
    #[error("degenerate depth {depth:e} (point at or behind the camera plane)")]
    DegenerateDepth { depth: f64 },
    #[error("invalid inverse depth {value}")]
    InvalidDepth { value: f64 },
    #[error("sample at pixel ({u:.3}, {v:.3}) lies outside the interpolation domain")]
    OutOfBounds { u: f64, v: f64 },
    #[error("invalid patch pattern: {0}")]
    InvalidPattern(&'static str),
    #[error("invalid image: {0}")]
    InvalidImage(&'static str),
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
    #[error("no residual is inside the image bounds")]
    EmptyProblem,
    #[error("Hessian is not positive definite at damping {damping:e}")]
    SingularHessian { damping: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("scene infeasible: anchor {anchor} leaves the view of frame {frame}")]
    AnchorOutOfView { anchor: usize, frame: usize },
    #[error("scene infeasible: {0}")]
    SpecInfeasible(&'static str),
}
