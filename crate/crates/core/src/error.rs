use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("logarithm argument vanishes at zbar = {zbar}, z = {z}")]
    BranchPoint { zbar: Complex64, z: Complex64 },
    #[error("point zbar = {zbar}, z = {z} lies outside the chart domain")]
    ChartDomain { zbar: Complex64, z: Complex64 },
    #[error("trajectory left the chart: |z| = {modulus:e} exceeds {limit:e}")]
    ChartOverflow { modulus: f64, limit: f64 },
    #[error("finite-difference stencil of width {step:e} leaves the chart domain")]
    StepTooLarge { step: f64 },
    #[error("invalid weight {weight} for {kind}: {reason}")]
    InvalidWeight {
        kind: &'static str,
        weight: f64,
        reason: &'static str,
    },
    #[error("invalid spin: 2j = {two_j} must be a positive integer")]
    InvalidSpin { two_j: f64 },
    #[error("{what} is incompatible with the phase space")]
    IncompatibleAlgebra { what: String },
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("Hamiltonian has a non-linear term; the linear flow solver does not apply")]
    NotLinear,
    #[error("Möbius denominator vanishes at s = {s} (caustic)")]
    MoebiusPole { s: f64 },
    #[error("integrator failed at s = {s}: {reason}")]
    IntegratorFailure { s: f64, reason: &'static str },
    #[error("no convergence after {iterations} iterations (last defect {defect:e})")]
    NoConvergence { iterations: usize, defect: f64 },
    #[error("Newton iteration found distinct roots {first} and {second}")]
    MultipleSolutionsSuspected { first: Complex64, second: Complex64 },
    #[error("Jacobi Wronskian is degenerate ({wronskian:e}); conjugate point")]
    DegenerateWronskian { wronskian: f64 },
    #[error("quadrature unresolved: refinement changed the result by {change:e}")]
    QuadratureUnresolved { change: f64 },
    #[error("prefactor bracket vanishes near tau = {tau}")]
    CausticPrefactor { tau: f64 },
    #[error("operation requires the flat phase space")]
    NotFlat,
    #[error("coherent state truncated too severely: discarded norm {tail:e}")]
    TruncationTooSevere { tail: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable identifier, used in result records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BranchPoint { .. } => "branch_point",
            Error::ChartDomain { .. } => "chart_domain",
            Error::ChartOverflow { .. } => "chart_overflow",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::InvalidWeight { .. } => "invalid_weight",
            Error::InvalidSpin { .. } => "invalid_spin",
            Error::IncompatibleAlgebra { .. } => "incompatible_algebra",
            Error::UnknownGenerator(_) => "unknown_generator",
            Error::NotLinear => "not_linear",
            Error::MoebiusPole { .. } => "moebius_pole",
            Error::IntegratorFailure { .. } => "integrator_failure",
            Error::NoConvergence { .. } => "no_convergence",
            Error::MultipleSolutionsSuspected { .. } => "multiple_solutions_suspected",
            Error::DegenerateWronskian { .. } => "degenerate_wronskian",
            Error::QuadratureUnresolved { .. } => "quadrature_unresolved",
            Error::CausticPrefactor { .. } => "caustic_prefactor",
            Error::NotFlat => "not_flat",
            Error::TruncationTooSevere { .. } => "truncation_too_severe",
            Error::InvalidInput(_) => "invalid_input",
        }
    }
}
