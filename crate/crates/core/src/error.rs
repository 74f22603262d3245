use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// An operation was called with inputs outside its contract.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The inputs are individually valid but the requested setup is not.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// A mathematical function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
