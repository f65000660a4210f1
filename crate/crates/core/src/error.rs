use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    /// The Kahan map has a pole at this point: `det(I - eps f'(x))` vanished.
    #[error("singular step: |delta| = {delta:.3e} below threshold {threshold:.3e}")]
    SingularStep { delta: f64, threshold: f64 },

    #[error("denominator of {what} vanishes (value {value:.3e})")]
    DenominatorZero { what: &'static str, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("Clebsch condition violated: residual {residual:.3e} exceeds {tolerance:.3e}")]
    ClebschCondition { residual: f64, tolerance: f64 },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("no real root: {0}")]
    NoRealRoot(String),

    #[error("unsupported for system {system}: {what}")]
    Unsupported { system: String, what: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("window of {window} rows is too short for {observables} observables (need at least {needed})")]
    WindowTooShort {
        window: usize,
        observables: usize,
        needed: usize,
    },

    #[error("orbit stopped at a pole at step {0}")]
    PoleInWindow(usize),

    #[error("expected a one-dimensional null space, found dimension {0}")]
    NullDimension(usize),

    #[error("pivot coefficient degenerate in window {window} (|c| = {value:.3e})")]
    PivotDegenerate { window: usize, value: f64 },

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("malformed polynomial: {0}")]
    MalformedPolynomial(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
