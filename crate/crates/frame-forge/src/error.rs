use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty node set")]
    EmptyNodeSet,

    #[error("divergent exponent: t = {t} must exceed the dimension {dim}")]
    DivergentExponent { t: f64, dim: usize },

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("envelope violated by atom {atom} at grid point {point}: |f| = {value:.6e} > {bound:.6e}")]
    EnvelopeViolation {
        atom: usize,
        point: usize,
        value: f64,
        bound: f64,
    },

    #[error("zero family")]
    ZeroFamily,

    #[error("spectral gap violated: eigenvalue {eigenvalue:.6e} lies in (0, {gap:.6e})")]
    SpectralGapViolated { eigenvalue: f64, gap: f64 },

    #[error("insufficient radial range: {annuli} nonempty annuli, at least 3 are needed")]
    InsufficientRadialRange { annuli: usize },

    #[error("not a covering: grid point {point} lies in no region")]
    NotACovering { point: usize },

    #[error("empty quilt")]
    EmptyQuilt,

    #[error("empty sampling set")]
    EmptySamplingSet,

    #[error("incommensurate lattice: {0}")]
    IncommensurateLattice(String),

    #[error("singular fiber at frequency index {fiber:?} of generator system {system}: smallest singular value {sigma_min:.3e}")]
    SingularFiber {
        system: usize,
        fiber: Vec<usize>,
        sigma_min: f64,
    },

    #[error("rank-deficient system: smallest singular value {sigma_min:.3e} is below the threshold {threshold:.3e}")]
    RankDeficient { sigma_min: f64, threshold: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
