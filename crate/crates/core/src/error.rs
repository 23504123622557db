use thiserror::Error;

/// Errors surfaced by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("spectral hit: H - E·I is numerically singular (smallest singular value {sigma_min:.3e})")]
    SpectralHit { sigma_min: f64 },

    #[error("path enumeration exceeded the frontier cap of {cap} nodes")]
    FrontierOverflow { cap: u64 },

    #[error(
        "no good circle found: best minimum |det(F(z) - t)|^(1/l) was {best:.3e}; \
         shrink the t-range or refine the circle grid"
    )]
    NoGoodCircle { best: f64 },

    #[error("transfer cocycle aborted: {flagged} of {steps} steps had a near-singular W")]
    SingularWeight { flagged: usize, steps: usize },

    #[error("surrogate construction failed: {0}")]
    Surrogate(String),

    #[error("invalid input:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    /// Tags an error with the module that raised it.
    pub fn within(self, module: &'static str) -> Self {
        LabError::Module {
            module,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
