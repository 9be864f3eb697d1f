use thiserror::Error;

/// Errors raised by the kernel solver, the controller construction and the simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid too coarse: {what} needs at least {min} points, got {got}")]
    GridTooCoarse {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("transport speed {name} is not positive at x = {x} (value {value})")]
    NonPositiveSpeed {
        name: &'static str,
        x: f64,
        value: f64,
    },

    #[error("coefficient {name} is not finite at x = {x}")]
    NonFiniteCoefficient { name: &'static str, x: f64 },

    #[error("hyperbolicity violated at x = {x}: speeds ({lambda1}, {lambda2}) must be (+, -)")]
    HyperbolicityViolation { x: f64, lambda1: f64, lambda2: f64 },

    #[error("equilibrium violated: {0}")]
    NotAnEquilibrium(String),

    #[error("reflection coefficient |q| = {q} is below {q_min}; use the q = 0 branch")]
    QNearZero { q: f64, q_min: f64 },

    #[error("successive approximations did not converge in {max_iter} sweeps (last increment {last_increment:e})")]
    NoConvergence { max_iter: usize, last_increment: f64 },

    #[error("extension rates must be positive and distinct (d1 = {d1}, d2 = {d2})")]
    DegenerateRates { d1: f64, d2: f64 },

    #[error("numerical blow-up at t = {t}: norm {norm:e} exceeds guard {limit:e}")]
    UnstableStep { t: f64, norm: f64, limit: f64 },

    #[error("state left the hyperbolicity region at t = {t}, x = {x}: speeds ({lambda1}, {lambda2})")]
    HyperbolicitySignChange {
        t: f64,
        x: f64,
        lambda1: f64,
        lambda2: f64,
    },

    #[error("denominator {value} below K1/2 = {bound} at x = {x}")]
    SmallDenominator { x: f64, value: f64, bound: f64 },

    #[error("non-positive norm sample at t = {t}")]
    NonPositiveNorm { t: f64 },

    #[error("linearization mismatch at x = {x}: C{entry} is {formula} by formula, {numeric} by differences")]
    LinearizationMismatch {
        x: f64,
        entry: &'static str,
        formula: f64,
        numeric: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
