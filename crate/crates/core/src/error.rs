use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A field or input contained NaN or infinite values.
    #[error("data integrity: {0}")]
    NonFinite(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or unsupported specification data.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The closed-form nonlinear substep would blow up; retry with a smaller step.
    #[error("step size too large at t = {t}: {detail}")]
    StepSize { t: f64, detail: String },

    /// The solver produced non-finite values; `last_valid_time` is the last good snapshot.
    #[error("solver aborted at t = {last_valid_time}: {detail}")]
    Aborted { last_valid_time: f64, detail: String },

    /// A requested time window is not covered by the available samples.
    #[error("range error: {0}")]
    Range(String),

    /// The requested diagnostic does not apply to this nonlinearity or potential.
    #[error("scope error: {0}")]
    Scope(String),

    /// A truncation level left nothing behind.
    #[error("level error: {0}")]
    Level(String),

    #[error("fit error: {0}")]
    Fit(String),
}

pub(crate) fn ensure_finite(values: &[num_complex::Complex64], what: &str) -> Result<()> {
    match values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}: entry {i} is not finite"))),
        None => Ok(()),
    }
}
