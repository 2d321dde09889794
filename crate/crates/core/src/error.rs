use thiserror::Error;

/// Residual samples `(tau, residual)` recorded while marching towards a
/// steady state.
pub type ResidualHistory = Vec<(f64, f64)>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("omega = {omega} lies outside the open band (-{band_edge}, {band_edge})")]
    OutOfBand { omega: f64, band_edge: f64 },

    #[error("degenerate expansion: {0}")]
    Degenerate(String),

    #[error("Bose-Einstein occupation undefined: beta0 * (omega - mu) = {exponent} is not positive")]
    Domain { exponent: f64 },

    #[error("step size {step:e} fell below the minimum at tau = {tau}; state = {state:?}")]
    Stiffness { tau: f64, step: f64, state: Vec<f64> },

    #[error("particle number drifted by {drift:e} at tau = {tau}")]
    Conservation { tau: f64, drift: f64 },

    #[error("occupation of mode {mode} became negative ({value:e}) at tau = {tau}")]
    Positivity { tau: f64, mode: usize, value: f64 },

    #[error("no steady state reached by tau = {tau_max}: {reason}")]
    Convergence {
        tau_max: f64,
        reason: String,
        history: ResidualHistory,
    },

    #[error("KL divergence undefined: approximant has no positive occupation")]
    UndefinedDivergence,

    #[error("lattice too small for a continuum diagnostic (L = {0})")]
    SmallLattice(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
