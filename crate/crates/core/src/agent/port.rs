use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::AgentError;

/// One completion request: the rendered prompt plus the structured inputs
/// it was rendered from, so offline ports can act on the data directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortRequest {
    pub template_id: String,
    pub prompt: String,
    pub variables: BTreeMap<String, serde_json::Value>,
    /// JSON schema the reply must satisfy.
    pub schema: serde_json::Value,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport misconfigured: {0}")]
    Config(String),
}

/// A text-completion backend. Replies are untrusted; callers validate them.
pub trait LlmPort {
    fn complete(&self, request: &PortRequest) -> Result<String, PortError>;
}

/// Replays canned replies in order; errors once they run out.
#[derive(Debug, Default)]
pub struct ScriptedPort {
    replies: RefCell<VecDeque<Result<String, PortError>>>,
    seen: RefCell<Vec<PortRequest>>,
}

impl ScriptedPort {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: RefCell::new(replies.into_iter().map(|s| Ok(s.into())).collect()),
            seen: RefCell::default(),
        }
    }

    pub fn push_error(&self, e: PortError) {
        self.replies.borrow_mut().push_back(Err(e));
    }

    pub fn requests(&self) -> Vec<PortRequest> {
        self.seen.borrow().clone()
    }
}

impl LlmPort for ScriptedPort {
    fn complete(&self, request: &PortRequest) -> Result<String, PortError> {
        self.seen.borrow_mut().push(request.clone());
        self.replies
            .borrow_mut()
            .pop_front()
            .unwrap_or_else(|| Err(PortError::Transport("no scripted reply left".into())))
    }
}

pub const MAX_RETRIES: usize = 2;

static NETWORK_REQUESTS: AtomicUsize = AtomicUsize::new(0);

/// Requests any network-backed port in this process has attempted.
pub fn network_requests() -> usize {
    NETWORK_REQUESTS.load(Ordering::SeqCst)
}

/// Called by network-backed ports before every request they send.
pub fn record_network_request() {
    NETWORK_REQUESTS.fetch_add(1, Ordering::SeqCst);
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Audit record of one port call. Bodies are stored as hashes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCallRecord {
    pub template_id: String,
    pub attempt: usize,
    pub request_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_sha256: Option<String>,
    pub outcome: String,
}

/// Failure of the reply validator; both kinds are retried. Once retries run
/// out `Invalid` becomes a protocol error and `Semantic` is returned as is.
#[derive(Debug)]
pub enum Rejection {
    Invalid(String),
    Semantic(AgentError),
}

impl From<String> for Rejection {
    fn from(s: String) -> Self {
        Rejection::Invalid(s)
    }
}

/// Sends `request`, retrying up to [`MAX_RETRIES`] times with the previous
/// rejection appended to the prompt. When retries run out, a final
/// transport or semantic error is returned as is; a final schema rejection
/// goes through `on_exhausted`.
pub(crate) fn call_validated<T>(
    port: &dyn LlmPort,
    request: PortRequest,
    log: &mut Vec<PortCallRecord>,
    mut validate: impl FnMut(&str) -> Result<T, Rejection>,
    on_exhausted: impl FnOnce(String, usize) -> AgentError,
) -> Result<T, AgentError> {
    let mut req = request;
    let base_prompt = req.prompt.clone();
    let mut last = String::new();
    let mut last_error = None;
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            req.prompt = format!(
                "{base_prompt}\n\nYour previous reply was rejected: {last}\n\
                 Reply again with a single JSON document that satisfies the schema."
            );
        }
        let request_sha256 = sha256_hex(
            serde_json::to_string(&req)
                .expect("request serializes")
                .as_bytes(),
        );
        let mut record = PortCallRecord {
            template_id: req.template_id.clone(),
            attempt,
            request_sha256,
            response_sha256: None,
            outcome: String::new(),
        };
        let reply = match port.complete(&req) {
            Ok(r) => r,
            Err(e) => {
                record.outcome = format!("transport error: {e}");
                log.push(record);
                last = e.to_string();
                if matches!(e, PortError::Config(_)) {
                    return Err(AgentError::Port(e));
                }
                last_error = Some(AgentError::Port(e));
                continue;
            }
        };
        record.response_sha256 = Some(sha256_hex(reply.as_bytes()));
        match validate(&reply) {
            Ok(v) => {
                record.outcome = "accepted".into();
                log.push(record);
                return Ok(v);
            }
            Err(Rejection::Invalid(reason)) => {
                record.outcome = format!("rejected: {reason}");
                log.push(record);
                last = reason;
                last_error = None;
            }
            Err(Rejection::Semantic(e)) => {
                record.outcome = format!("rejected: {e}");
                log.push(record);
                last = e.to_string();
                last_error = Some(e);
            }
        }
    }
    Err(last_error.unwrap_or_else(|| on_exhausted(last, MAX_RETRIES + 1)))
}

/// Extracts the JSON document from a reply, tolerating a surrounding
/// markdown code fence.
pub fn strip_fence(reply: &str) -> &str {
    let t = reply.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}
