use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dipole amplitudes are defined from a P1/2 sublevel, got {0}")]
    NotUpperLevel(String),

    #[error("both lasers drive the {0} transition")]
    SameTransition(&'static str),

    #[error("steady-state system is singular (pivot ratio {pivot_ratio:.3e}); the stationary manifold is degenerate")]
    SingularSystem { pivot_ratio: f64 },

    #[error("steady-state residual {residual:.3e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },

    #[error("density matrix is not physical: {reason}")]
    NonPhysical { reason: String },

    #[error("integrator could not meet tolerance at t = {t_us} us (step {step:.3e})")]
    StepFailure { t_us: f64, step: f64 },

    #[error("fringe design matrix is rank deficient")]
    DegenerateGrid,

    #[error("correlation phase undefined: contrast {contrast:.3e} below floor {floor:.3e}")]
    UndefinedPhase { contrast: f64, floor: f64 },

    #[error("at psi = {psi} rad: {source}")]
    AtPsi { psi: f64, source: Box<Error> },

    #[error("at red detuning {detuning_r_mhz} MHz: {source}")]
    AtDetuning { detuning_r_mhz: f64, source: Box<Error> },

    #[error("model evaluation failed at the initial point: {0}")]
    BadInitial(Box<Error>),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Strips location wrappers such as [`Error::AtPsi`].
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPsi { source, .. } | Error::AtDetuning { source, .. } => source.root(),
            Error::BadInitial(inner) => inner.root(),
            other => other,
        }
    }

    /// True for failures of the numerical machinery rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularSystem { .. }
                | Error::ResidualTooLarge { .. }
                | Error::NonPhysical { .. }
                | Error::StepFailure { .. }
                | Error::DegenerateGrid
        )
    }
}
