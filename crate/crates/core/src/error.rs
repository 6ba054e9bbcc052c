use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A pivot of the LDLᵀ factorization vanished (or is not finite).
    #[error("zero or non-finite pivot {value:e} at column {index}")]
    ZeroPivot { index: usize, value: f64 },

    #[error("sparsity pattern differs from the one used for symbolic analysis")]
    PatternMismatch,

    #[error("ordering failed: {0}")]
    Ordering(String),

    /// Barrier evaluated outside its domain `ξ < r`.
    #[error("barrier domain violated at index {index}")]
    Domain { index: usize },

    #[error("riccati iteration did not converge in {iterations} iterations (residual {residual:e})")]
    RiccatiDivergence { iterations: usize, residual: f64 },

    #[error("no feasible active set found")]
    Infeasible,

    #[error("problem size {size} exceeds the brute-force budget of {budget}")]
    BudgetExceeded { size: usize, budget: usize },

    #[error("numerical failure at iteration {iteration}: {source}")]
    Numerical {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
