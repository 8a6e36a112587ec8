use thiserror::Error;

/// Errors surfaced by the library. Numeric checks that merely *flag* a result
/// (resonance detection) do not error; they mark the `EvalRecord` untrusted.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular denominator in {context}: |{factor}| = {magnitude:.3e} (threshold {threshold:.3e})")]
    SingularDenominator {
        context: &'static str,
        factor: String,
        magnitude: f64,
        threshold: f64,
    },

    #[error("chain length L = {l} exceeds the dense-operator limit L <= {max}")]
    DimensionLimit { l: usize, max: usize },

    #[error("parameters are not generic: {0}")]
    NotGeneric(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("Newton iteration failed after {iters} steps (best residual {best:.3e})")]
    NewtonDidNotConverge { iters: usize, best: f64 },

    #[error("Jacobian singular during Newton iteration")]
    SingularJacobian,

    #[error("Bethe vector vanishes; eigenvector residual undefined")]
    ZeroVector,

    #[error("kernel constant is resonant: {0}")]
    Resonance(String),

    #[error("homogeneous extrapolation unstable: extrapolants differ by {rel:.3e} (limit {limit:.3e})")]
    ExtrapolationUnstable { rel: f64, limit: f64 },

    #[error("quadrature not converged: doubling the node count moved the result by {rel:.3e}")]
    QuadratureNotConverged { rel: f64 },

    #[error("{what} supports n <= {max}, got n = {n}")]
    UnsupportedOrder {
        what: &'static str,
        n: usize,
        max: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
