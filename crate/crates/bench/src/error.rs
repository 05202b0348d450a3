use crate::config::ConfigErrors;
use crate::io::IoError;

/// Failure of a bench command, with the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Usage(String),
    #[error("low-confidence analysis: {0}")]
    LowConfidence(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: twistbench_core::Error,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

impl BenchError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(twistbench_core::Error) -> Self {
        let context = context.into();
        move |source| BenchError::Core { context, source }
    }

    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            BenchError::Config(_) | BenchError::Usage(_) => "config",
            BenchError::LowConfidence(_) => "low-confidence",
            BenchError::Core { source, .. } if is_numerical(source) => "numerical",
            BenchError::Core { .. } => "analysis",
            BenchError::Io(_) => "io",
        }
    }

    /// 0 ok, 1 config, 2 low confidence, 3 numerical or sampling guard,
    /// 4 any other analysis or file failure.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 1,
            "low-confidence" => 2,
            "numerical" => 3,
            _ => 4,
        }
    }
}

fn is_numerical(e: &twistbench_core::Error) -> bool {
    use twistbench_core::Error::*;
    matches!(
        e,
        Sampling(_)
            | WindowTooSmall { .. }
            | FringeUndersampling { .. }
            | IllConditioned(_)
            | FitFailure(_)
            | UndefinedPhase { .. }
            | InvalidGrid(_)
    )
}
