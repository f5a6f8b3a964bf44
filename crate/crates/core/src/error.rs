use thiserror::Error;

/// Failures raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed configuration at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("curvature {curvature:.3e} at Q = {q:.6} is below tolerance {tolerance:.1e}; the Kramers prefactor is invalid this close to a bifurcation")]
    BifurcationProximity { q: f64, curvature: f64, tolerance: f64 },

    #[error("switching channel {channel} does not exist in the {regime} regime")]
    MissingChannel { channel: String, regime: String },

    #[error("grid half-width {q_max} gives U(Q_max)/D = {ratio:.3}, below the required {required}")]
    SupportTooSmall { q_max: f64, ratio: f64, required: f64 },

    #[error("eigenvalue refinement does not converge: {diagnostics}")]
    ConvergenceFailure { diagnostics: String },

    #[error("time step {dt} violates dt * max|U''| = {product:.4} > {limit}")]
    StepTooLarge { dt: f64, product: f64, limit: f64 },

    #[error("trajectory {trajectory} became non-finite at step {step} (Q = {q})")]
    NonFinite { trajectory: u64, step: u64, q: f64 },

    #[error("no autocorrelation values fall in the fit window [{lo}, {hi}]")]
    FitWindowEmpty { lo: f64, hi: f64 },

    #[error("Newton iteration did not reach residual {tolerance:.1e} (best {residual:.3e}) near ({q:.6}, {p:.6})")]
    NewtonFailure { q: f64, p: f64, residual: f64, tolerance: f64 },

    #[error("adiabatic branch P(Q) is lost at Q = {q} (discriminant {discriminant:.3e})")]
    BranchLost { q: f64, discriminant: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {value}"),
        })
    }
}
