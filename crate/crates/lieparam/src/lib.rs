//! Exact-arithmetic invariants of parametrized spectra through complete
//! differential graded Lie algebras.
//!
//! The pipeline runs entirely over `ℚ` in nilpotent quotients: free complete
//! Lie algebras are truncated at a bracket-length cap, so every series
//! (Baker-Campbell-Hausdorff, exponential, the Lawrence-Sullivan differential)
//! is a finite sum and every identity is checked as an exact equality of
//! rational coefficients.
//!
//! Module map:
//!
//! * [`exactla`] — sparse exact linear algebra: ranks, kernels, homology of
//!   chain-complex slices.
//! * [`freelie`] — the weight-truncated tensor algebra, graded commutators,
//!   BCH, exp/log, and bracket expression trees.
//! * [`cdgl`] — free cdgl presentations, Maurer-Cartan calculus, gauge
//!   action, the Lawrence-Sullivan interval, simplex models and models of
//!   finite simplicial sets.
//! * [`retractive`] — free retractive cdgl's over a base: splitting, linear
//!   part, loop and suspension models, the fiber functor and its adjoint.
//! * [`spectra`] — free spectra of retractive models, reductions and stable
//!   homology.
//! * [`ulmod`] — complete modules over the completed enveloping algebra:
//!   semifree resolutions, Ext, diagonal tensor product, base change.
//! * [`psi`] — the module-valued functor on spectra together with its
//!   suspension, sphere, smash-product and homotopy-group identities.
//! * [`report`] — job configuration and deterministic report emission for
//!   the command-line surface.

pub mod exactla;
pub mod freelie;
pub mod cdgl;
pub mod retractive;
pub mod spectra;
pub mod ulmod;
pub mod psi;
pub mod report;

/// Crate-wide error type. Variant names follow the operation contracts.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("degree error: {0}")]
    DegreeError(String),
    #[error("constant term error: {0}")]
    ConstantTermError(String),
    #[error("not a Maurer-Cartan element: {0}")]
    NotMaurerCartan(String),
    #[error("dimension unsupported: {0}")]
    DimensionUnsupported(String),
    #[error("window edge: {0}")]
    WindowEdge(String),
    #[error("not free: {0}")]
    NotFree(String),
    #[error("stage limit: {0}")]
    StageLimit(String),
    #[error("base mismatch: {0}")]
    BaseMismatch(String),
    #[error("presentation error: {0}")]
    PresentationError(String),
    #[error("not connected: {0}")]
    NotConnected(String),
    #[error("solve failure: {0}")]
    SolveFailure(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("certificate failure: {0}")]
    CertificateFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A truncation or staging state that accompanies a result instead of
/// silently narrowing it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Caveat {
    /// Homology at the edge of the degree window: the incoming or outgoing
    /// boundary was truncated, so the reported dimension is a bound only.
    WindowEdge { degree: i32 },
    /// A colimit that did not reach two consecutive isomorphisms within the
    /// configured number of levels.
    NotStabilized { degree: i32, levels: usize },
    /// A staged construction stopped at its stage limit before certifying.
    StageLimit { stages: usize },
    /// Simplex models of dimension at least two are solved weight by weight;
    /// compatibility with codegeneracies is not certified.
    CodegeneracyUnverified { dimension: usize },
}

impl std::fmt::Display for Caveat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Caveat::WindowEdge { degree } => write!(f, "window edge at degree {degree}"),
            Caveat::NotStabilized { degree, levels } => {
                write!(f, "not stabilized in degree {degree} within {levels} levels")
            }
            Caveat::StageLimit { stages } => write!(f, "stage limit reached after {stages} stages"),
            Caveat::CodegeneracyUnverified { dimension } => {
                write!(f, "codegeneracy compatibility unverified for dimension {dimension}")
            }
        }
    }
}
