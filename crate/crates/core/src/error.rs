use thiserror::Error;

pub type Result<T, E = FacdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FacdError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("feature `{feature}` has no observed values")]
    FeatureEmpty { feature: String },

    #[error("paired data mismatch: {0}")]
    PairedData(String),

    #[error("empty spectrum: {0}")]
    EmptySpectrum(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: conflicting duplicate for subject `{subject}`, time {time}, feature `{feature}`")]
    Conflict {
        row: usize,
        subject: String,
        time: f64,
        feature: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FacdError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FacdError {
    /// Errors caused by the caller's data or configuration, as opposed to
    /// internal numerical breakdowns.
    pub fn is_user_error(&self) -> bool {
        match self {
            FacdError::Numerical(_) => false,
            FacdError::Stage { source, .. } => source.is_user_error(),
            _ => true,
        }
    }

    /// The innermost error with stage labels peeled off.
    pub fn root(&self) -> &FacdError {
        match self {
            FacdError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| FacdError::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
