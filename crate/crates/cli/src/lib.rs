//! Experiment runner for the monoflow solvers: config ingestion,
//! presets, batch sweeps, and CSV/JSON artifact emission.

pub mod config;
pub mod runner;

/// Top-level failure classes, mapped onto process exit codes:
/// validation failures exit 2, numerical failures exit 3.
#[derive(Debug)]
pub enum CliError {
    /// One message per violated constraint.
    Validation(Vec<String>),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msgs) => {
                writeln!(f, "configuration rejected:")?;
                for m in msgs {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
