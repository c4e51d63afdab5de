use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("solver blew up at step {step} ({scheme})")]
    BlowUp { scheme: String, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stencil of width {width} does not fit a periodic grid of {nx} points")]
    StencilTooWide { width: usize, nx: usize },

    #[error("{available} time levels available, at least {required} required")]
    InsufficientLevels { available: usize, required: usize },

    #[error("library column `{term}` is identically zero")]
    ZeroColumn { term: String },

    #[error("design matrix is rank deficient: {count} singular values below {threshold:e} (smallest {smallest:e})")]
    RankDeficient {
        count: usize,
        threshold: f64,
        smallest: f64,
    },

    #[error("every candidate initial condition produced an unstable simulation")]
    AllParticlesUnstable,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
