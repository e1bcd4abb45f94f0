use thiserror::Error;

/// Errors produced by the deblurring library.
#[derive(Debug, Error)]
pub enum DeblurError {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric integrity failure: {0}")]
    Numeric(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<DeblurError>,
    },
}

pub type Result<T> = std::result::Result<T, DeblurError>;

impl DeblurError {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        DeblurError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        DeblurError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &DeblurError {
        match self {
            DeblurError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), DeblurError::Config { .. })
    }
}

pub(crate) fn ensure_same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(DeblurError::Dimension(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
