//! Wire frames. One JSON object per line on the adapter's standard streams.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: &str = "dcheck-adapter/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Hello,
    Train,
    Score,
    Free,
    Shutdown,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Hello => "hello",
            Command::Train => "train",
            Command::Score => "score",
            Command::Free => "free",
            Command::Shutdown => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub cmd: Command,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// Anything an adapter writes back. Exactly one of `result`, `error` or
/// `progress` is present; `progress` frames are heartbeats and do not
/// complete the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Value>,
}

impl Response {
    pub fn result(id: &str, result: Value) -> Self {
        Response {
            id: id.into(),
            result: Some(result),
            error: None,
            progress: None,
        }
    }

    pub fn error(id: &str, code: &str, message: impl Into<String>) -> Self {
        Response {
            id: id.into(),
            result: None,
            error: Some(ErrorBody {
                code: code.into(),
                message: message.into(),
            }),
            progress: None,
        }
    }

    pub fn progress(id: &str, progress: Value) -> Self {
        Response {
            id: id.into(),
            result: None,
            error: None,
            progress: Some(progress),
        }
    }

    pub fn is_heartbeat(&self) -> bool {
        self.progress.is_some() && self.result.is_none() && self.error.is_none()
    }
}

/// Training example on the wire. `input: null` is the null input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteExample {
    pub input: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPayload {
    pub examples: Vec<RemoteExample>,
    #[serde(default)]
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePayload {
    pub model_id: String,
    pub input: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub protocol: String,
    pub capabilities: Vec<String>,
}

/// Error codes adapters are expected to use.
pub mod codes {
    pub const EMPTY_TRAINING_SET: &str = "empty_training_set";
    pub const UNKNOWN_MODEL: &str = "unknown_model";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const BAD_CONFIG: &str = "bad_config";
    pub const OOM: &str = "oom";
}
