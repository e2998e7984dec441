//! Chat-completions transport behind [`LlmPort`].

use std::time::Duration;

use dyadic_core::agent::{record_network_request, sha256_hex, LlmPort, PortError, PortRequest};
use serde_json::{json, Value};

pub const ENDPOINT_VAR: &str = "DYADIC_LLM_ENDPOINT";
pub const API_KEY_VAR: &str = "DYADIC_LLM_API_KEY";
pub const MODEL_VAR: &str = "DYADIC_LLM_MODEL";
pub const TIMEOUT_VAR: &str = "DYADIC_LLM_TIMEOUT_S";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpSettings {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
}

impl HttpSettings {
    /// Reads the settings through `lookup`, which maps a variable name to
    /// its value. Nothing touches the network here.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, PortError> {
        let required = |name: &str| -> Result<String, PortError> {
            match lookup(name) {
                Some(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
                _ => Err(PortError::Config(format!("environment variable {name} is not set"))),
            }
        };
        let endpoint = required(ENDPOINT_VAR)?;
        let api_key = required(API_KEY_VAR)?;
        let model = required(MODEL_VAR)?;
        let timeout = match lookup(TIMEOUT_VAR) {
            None => DEFAULT_TIMEOUT,
            Some(v) => match v.trim().parse::<f64>() {
                Ok(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
                _ => return Err(PortError::Config(format!("{TIMEOUT_VAR} must be a positive number of seconds, got `{v}`"))),
            },
        };
        Ok(Self {
            endpoint,
            api_key,
            model,
            timeout,
        })
    }

    pub fn from_env() -> Result<Self, PortError> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }
}

/// Blocking chat-completions client. Each request carries the rendered
/// prompt as the user message and the reply schema in a system message.
pub struct HttpPort {
    settings: HttpSettings,
    agent: ureq::Agent,
    verbose: bool,
}

impl HttpPort {
    pub fn new(settings: HttpSettings) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(settings.timeout).build();
        Self {
            settings,
            agent,
            verbose: false,
        }
    }

    /// Logs full request and reply bodies instead of their hashes.
    pub fn with_verbose(mut self, verbose: bool) -> Self {
        self.verbose = verbose;
        self
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    pub fn request_body(&self, request: &PortRequest) -> Value {
        let schema = serde_json::to_string(&request.schema).expect("schema serializes");
        json!({
            "model": self.settings.model,
            "temperature": 0,
            "response_format": { "type": "json_object" },
            "messages": [
                {
                    "role": "system",
                    "content": format!(
                        "Reply with a single JSON document and nothing else. \
                         It must satisfy this JSON schema:\n{schema}"
                    ),
                },
                { "role": "user", "content": request.prompt },
            ],
        })
    }
}

/// The first choice's message content of a chat-completions reply.
fn reply_content(body: &str) -> Result<String, PortError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| PortError::Transport(format!("reply is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| PortError::Transport("reply has no `choices[0].message.content` string".into()))
}

impl LlmPort for HttpPort {
    fn complete(&self, request: &PortRequest) -> Result<String, PortError> {
        let body = self.request_body(request);
        let text = body.to_string();
        if self.verbose {
            log::info!("{} request body: {text}", request.template_id);
        } else {
            log::info!("{} request sha256 {}", request.template_id, sha256_hex(text.as_bytes()));
        }
        record_network_request();
        let response = self
            .agent
            .post(&self.settings.endpoint)
            .set("Authorization", &format!("Bearer {}", self.settings.api_key))
            .set("Content-Type", "application/json")
            .send_string(&text);
        let reply = match response {
            Ok(r) => r
                .into_string()
                .map_err(|e| PortError::Transport(format!("reading reply: {e}")))?,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(PortError::Status {
                    status,
                    body: body.chars().take(512).collect(),
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(PortError::Transport(t.to_string())),
        };
        if self.verbose {
            log::info!("{} reply body: {reply}", request.template_id);
        } else {
            log::info!("{} reply sha256 {}", request.template_id, sha256_hex(reply.as_bytes()));
        }
        reply_content(&reply)
    }
}
