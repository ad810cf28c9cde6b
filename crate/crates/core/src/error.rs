use thiserror::Error;

/// Configuration parse or validation failure, tagged with the offending field path.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}", join(path, message))]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The dotted field path, when the error concerns a specific field.
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Invalid { path, .. } | ConfigError::Io { path, .. } => path,
        }
    }
}

fn join(path: &str, message: &str) -> String {
    if path.is_empty() {
        message.to_owned()
    } else {
        format!("{path} {message}")
    }
}
