use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration or geometry value is out of its admissible range.
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: &'static str },

    #[error("molecules do not fit in the cell: nearest O-O distance {min_distance:.4} below {threshold}")]
    Placement { min_distance: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Constraint iteration exhausted its budget.
    #[error(
        "constraint non-convergence in group {group} after {iterations} iterations (max residual {max_residual:e})"
    )]
    NonConvergence { group: usize, iterations: usize, max_residual: f64 },

    /// The linearized constraint system has no unique solution.
    #[error("degenerate constraint geometry in group {group}: singular linear system")]
    Singular { group: usize },

    #[error("overlapping sites {site_a} and {site_b} in bead {bead} (r = {distance:e})")]
    Overlap { site_a: usize, site_b: usize, bead: usize, distance: f64 },

    /// The state left the finite numbers, typically after a blow-up.
    #[error("state became non-finite")]
    NonFinite,

    #[error("pair distance is zero")]
    ZeroDistance,

    #[error("a trace needs at least two rows to fit a regression, found {0}")]
    TraceTooShort(usize),
}

impl Error {
    /// True for failures of the constraint solvers, which integrators report
    /// as a failed step rather than a hard error.
    pub fn is_constraint_failure(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::Singular { .. })
    }

    /// True for failures that end a trajectory (constraint failure, site
    /// overlap, non-finite state) as opposed to invalid input.
    pub fn is_step_failure(&self) -> bool {
        self.is_constraint_failure() || matches!(self, Error::Overlap { .. } | Error::ZeroDistance | Error::NonFinite)
    }
}
