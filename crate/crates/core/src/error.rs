use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("point is not in the capped simplex: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),

    #[error("flip rule does not match scaling: {0}")]
    ModeMismatch(String),

    #[error("class {class}: {source}")]
    Class {
        class: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn for_class(self, class: &str) -> Self {
        Error::Class {
            class: class.to_string(),
            source: Box::new(self),
        }
    }
}
