use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(
        "value {value} does not fit a {total_bits}-bit format with {frac_bits} fractional bits"
    )]
    RangeOverflow {
        value: f64,
        total_bits: u32,
        frac_bits: u32,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation not supported for this region and norm: {0}")]
    NormMismatch(String),

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("bias moves grid point {index} by {deviation}, more than delta0 = {delta0}")]
    BiasOutOfBounds {
        index: u64,
        deviation: f64,
        delta0: f64,
    },

    #[error("enumeration of {requested} tuples exceeds the budget of {cap}")]
    EnumerationBudget { requested: u128, cap: u128 },

    #[error("exception masses differ ({mu} vs {nu}); the distributions are not comparable")]
    ExceptionMassMismatch { mu: f64, nu: f64 },

    #[error("location kind not supported here: {0}")]
    UnsupportedLocation(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("rounding cell side {side} must exceed 2*delta_t = {twice_delta_t}")]
    DegenerateGrid { side: f64, twice_delta_t: f64 },

    #[error("fixpoint diverged after {iterations} iterations (last shift bound {last_shift})")]
    Divergence { iterations: usize, last_shift: f64 },

    #[error(
        "grid too coarse: consecutive slope {slope} exceeds k = {k} between u = {u} and v = {v}"
    )]
    GridTooCoarse { u: f64, v: f64, slope: f64, k: f64 },
}
