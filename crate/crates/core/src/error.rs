use thiserror::Error;

/// Errors raised by the phase-space, QFI and oracle engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix or vector contains a non-finite entry")]
    NonFinite,

    #[error("covariance violates the uncertainty relation (smallest symplectic eigenvalue {min_symplectic})")]
    NotPhysical { min_symplectic: f64 },

    #[error("trace formula discriminant is negative beyond rounding ({discriminant})")]
    TraceFormulaBranch { discriminant: f64 },

    #[error("spectrum of iΩσ has an imaginary residue of {residue}")]
    ComplexSpectrum { residue: f64 },

    #[error("operands use different quadrature orderings")]
    OrderingMismatch,

    #[error("matrix is not symplectic (defect {defect})")]
    NotSymplectic { defect: f64 },

    #[error("squeezing strength {value} is too large for double precision")]
    ParameterTooLarge { value: f64 },

    #[error("invalid value {value} for {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("thermal occupation must be non-negative, got {value}")]
    NegativeOccupation { value: f64 },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("fidelity denominator degenerate ({value})")]
    DenominatorDegenerate { value: f64 },

    #[error("fidelity {value} exceeds 1 beyond rounding")]
    FidelityOvershoot { value: f64 },

    #[error("Fock truncation deficit {deficit} exceeds the oracle threshold")]
    TruncationTooSevere { deficit: f64 },

    #[error("value not converged (previous {previous}, last {last})")]
    NotConverged { previous: f64, last: f64 },

    #[error("closed-form QFI is singular for (near) pure states (|C|-1 = {det_minus_one}, min Λ = {min_symplectic})")]
    PureStateSingularity {
        det_minus_one: f64,
        min_symplectic: f64,
    },

    #[error("finite-difference step {step} outside the allowed range")]
    StepOutOfRange { step: f64 },

    #[error("finite-difference stencil leaves the parameter domain")]
    StepOutOfDomain,

    #[error("limiting case does not apply: {0}")]
    CaseMismatch(String),

    #[error("table is flat (spread {spread:.3e})")]
    FlatTable { spread: f64 },

    #[error("table needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("likelihood has no interior maximum in the search interval")]
    NoInteriorMaximum,

    #[error("QFI evaluated to {value}, below the rounding floor")]
    NegativeQfi { value: f64 },

    #[error("matrix is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short snake_case identifier, used in table flag columns.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite => "non_finite",
            Error::NotPhysical { .. } => "not_physical",
            Error::TraceFormulaBranch { .. } => "trace_formula_branch",
            Error::ComplexSpectrum { .. } => "complex_spectrum",
            Error::OrderingMismatch => "ordering_mismatch",
            Error::NotSymplectic { .. } => "not_symplectic",
            Error::ParameterTooLarge { .. } => "parameter_too_large",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NegativeOccupation { .. } => "negative_occupation",
            Error::UnknownParameter(_) => "unknown_parameter",
            Error::DenominatorDegenerate { .. } => "denominator_degenerate",
            Error::FidelityOvershoot { .. } => "fidelity_overshoot",
            Error::TruncationTooSevere { .. } => "truncation_too_severe",
            Error::NotConverged { .. } => "not_converged",
            Error::PureStateSingularity { .. } => "pure_state_singularity",
            Error::StepOutOfRange { .. } => "step_out_of_range",
            Error::StepOutOfDomain => "step_out_of_domain",
            Error::CaseMismatch(_) => "case_mismatch",
            Error::FlatTable { .. } => "flat_table",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::NoInteriorMaximum => "no_interior_maximum",
            Error::NegativeQfi { .. } => "negative_qfi",
            Error::Singular => "singular",
        }
    }
}
