//! Command implementations behind the `liquid-s4` binary.

pub mod commands;
pub mod config;
pub mod seqio;

/// Failure classes, each with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// A check failed or a computation broke down numerically.
    Verification(String),
    /// Bad flags, configuration or arguments.
    Usage(String),
    /// Reading or writing files, including malformed input files.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Verification(_) => 1,
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Verification(m) | Self::Usage(m) | Self::Io(m) => f.write_str(m),
        }
    }
}

impl From<liquid_s4::Error> for CliError {
    fn from(e: liquid_s4::Error) -> Self {
        use liquid_s4::Error as E;
        match e {
            E::InvalidDimension(_)
            | E::InvalidRange(_)
            | E::InvalidOrder { .. }
            | E::SizeGuard(_)
            | E::Config(_)
            | E::BudgetExceeded { .. } => Self::Usage(e.to_string()),
            E::Decomposition { .. }
            | E::Discretization(_)
            | E::Pole { .. }
            | E::WoodburySingularity { .. }
            | E::DivergedState { .. } => Self::Verification(e.to_string()),
        }
    }
}
