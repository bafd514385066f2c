use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge for {integrand} (estimate {estimate}, error {error:e})")]
    Quadrature {
        integrand: String,
        estimate: f64,
        error: f64,
    },

    #[error("log-MGF evaluated outside its finiteness region at upsilon = {upsilon}")]
    OutsideFiniteness { upsilon: f64 },

    #[error("tail condition unsatisfiable for rho_a = {rho_a}: {detail}")]
    TailUnsatisfiable { rho_a: f64, detail: &'static str },

    #[error("score function needs m0 < 0 < m1, got m0 = {m0}, m1 = {m1}")]
    DriftSign { m0: f64, m1: f64 },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(&'static str),

    #[error("detector update undefined: {0}")]
    DetectorUpdate(&'static str),

    #[error("episode generated at theta = {episode} but policy has theta = {policy}")]
    ThetaMismatch { episode: f64, policy: f64 },

    #[error("Q estimates missing or wrong length (expected {expected}, got {got})")]
    QEstimates { expected: usize, got: usize },

    #[error("too many rejected steps: {rejected} of {total}")]
    TooManyRejections { rejected: u64, total: u64 },

    #[error("need at least {need} inputs, got {got}")]
    TooFewInputs { need: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no covariance estimate for run length N = {0}")]
    MissingRunLength(u64),

    #[error("singular matrix in linear solve")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
