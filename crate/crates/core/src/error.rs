use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown agent {0}")]
    UnknownAgent(usize),

    #[error("agent {0} is not running")]
    AgentNotRunning(usize),

    #[error("scene setup: {0}")]
    Scene(String),

    #[error("graph definition{}: {msg}", line_suffix(*.line))]
    Graph { line: Option<usize>, msg: String },

    #[error("config{}: `{key}` {msg}", line_suffix(*.line))]
    Config {
        line: Option<usize>,
        key: String,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" (line {l})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
