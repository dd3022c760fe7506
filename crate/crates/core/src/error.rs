use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("extent {extent} along axis {axis} is not a multiple of h = {h}")]
    NonDivisibleExtent { axis: usize, extent: f64, h: f64 },
    #[error("invalid box: lo {lo:?} must be strictly below hi {hi:?}")]
    InvalidBox { lo: [f64; 3], hi: [f64; 3] },
    #[error("invalid spacing h = {0}")]
    InvalidSpacing(f64),
    #[error("node index {index} out of range (grid has {len} nodes)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("inner box is not strictly contained in the grid box")]
    InnerNotContained,
    #[error("inner box contains no grid node")]
    EmptyMask,
    #[error("field has {got} values, grid expects {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFiniteValue(usize),
    #[error("conductivity {value} at node {node} is not above the ellipticity floor")]
    NotElliptic { node: usize, value: f64 },
    #[error("time step {tau} exceeds the CFL bound {tau_max}")]
    CflViolation { tau: f64, tau_max: f64 },
    #[error("time horizon {t_final} is not a multiple of tau = {tau}")]
    NonDivisibleHorizon { t_final: f64, tau: f64 },
    #[error("non-finite wavefield detected at step {step}")]
    NonFiniteState { step: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("data mismatch: {0}")]
    DataMismatch(String),
    #[error("line search failed at iteration {iteration}: step fell below 1e-12")]
    LineSearchFailure { iteration: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no admissible value found below cap {cap}")]
    NotFoundBelowCap { cap: f64 },
    #[error("degenerate sweep: boundary-data norm {0:e} below 1e-14")]
    DegenerateSweep(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that come out of the numerics rather than from
    /// inconsistent inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState { .. }
                | Error::LineSearchFailure { .. }
                | Error::NotFoundBelowCap { .. }
                | Error::DegenerateSweep(_)
        )
    }
}
