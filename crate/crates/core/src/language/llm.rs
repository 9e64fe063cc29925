//! Chat-completion backed instruction parser.
//!
//! The endpoint is any server speaking the common `/chat/completions` JSON
//! wire format. Configuration comes from `SEMSAFE_LLM_URL`,
//! `SEMSAFE_LLM_MODEL` and `SEMSAFE_LLM_KEY`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{LimitDefaults, ParseOutcome, RobotCapabilities, SafetyConfig, TemplateConfig};

/// Versioned system prompt; placeholders are filled by [`render_prompt`].
pub const PROMPT_TEMPLATE: &str = include_str!("../../assets/parser_prompt_v1.txt");
pub const PROMPT_VERSION: &str = "v1";

/// Number of re-asks after a malformed reply.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(c: impl Into<String>) -> Self {
        Self { role: "system".into(), content: c.into() }
    }
    pub fn user(c: impl Into<String>) -> Self {
        Self { role: "user".into(), content: c.into() }
    }
    pub fn assistant(c: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: c.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

/// One chat-completion round trip returning the assistant text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("SEMSAFE_LLM_URL").ok().filter(|s| !s.is_empty())?;
        let model = std::env::var("SEMSAFE_LLM_MODEL").unwrap_or_else(|_| "gpt-4o".into());
        let key = std::env::var("SEMSAFE_LLM_KEY").ok().filter(|s| !s.is_empty());
        Some(Self { url, model, key, timeout: Duration::from_secs(30) })
    }

    fn completions_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Blocking HTTP transport with bearer authentication.
pub struct HttpChat {
    cfg: EndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(cfg: EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        Ok(Self { cfg, client })
    }
}

impl ChatTransport for HttpChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": 0.0,
        });
        let mut req = self.client.post(self.cfg.completions_url()).json(&body);
        if let Some(key) = &self.cfg.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Unavailable(format!("HTTP {status}")));
        }
        let v: Value = resp.json().map_err(|e| TransportError::BadResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::BadResponse("missing choices[0].message.content".into()))
    }
}

pub fn render_prompt(caps: &RobotCapabilities, defaults: &LimitDefaults) -> String {
    let fmt = |v: f64| format!("{v:.2}");
    PROMPT_TEMPLATE
        .replace("{capabilities}", &caps.description)
        .replace("{near_buffer}", &fmt(defaults.near_buffer))
        .replace("{intent_vel}", &fmt(defaults.vel_fraction * caps.v_max))
        .replace("{pace_vel}", &fmt(defaults.vel_fraction * caps.v_max))
        .replace("{intent_omega}", &fmt(defaults.omega_fraction * caps.omega_max))
        .replace("{v_max}", &fmt(caps.v_max))
        .replace("{omega_max}", &fmt(caps.omega_max))
}

/// Interpretation of one model reply.
#[derive(Debug)]
enum Reply {
    Config(SafetyConfig),
    Clarify(String),
    Malformed(String),
}

/// Pulls the first JSON object out of a reply, tolerating code fences and
/// surrounding prose.
pub fn extract_json_object(text: &str) -> Option<Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str::<Value>(&text[start..=end]).ok().filter(Value::is_object)
}

fn interpret(text: &str, instruction: &str, caps: &RobotCapabilities) -> Reply {
    let Some(v) = extract_json_object(text) else {
        return Reply::Malformed("reply is not a JSON object".into());
    };
    if let Some(q) = v.get("clarify") {
        return match q.as_str() {
            Some(q) if !q.trim().is_empty() => Reply::Clarify(q.trim().to_string()),
            _ => Reply::Malformed("clarify must be a non-empty string".into()),
        };
    }
    let t: TemplateConfig = match serde_json::from_value(v) {
        Ok(t) => t,
        Err(e) => return Reply::Malformed(format!("does not match template: {e}")),
    };
    match SafetyConfig::from_template(&t, instruction).and_then(|c| c.validate(caps).map(|_| c)) {
        Ok(c) => Reply::Config(c),
        Err(e) => Reply::Malformed(e.to_string()),
    }
}

/// Language-model parser over any [`ChatTransport`].
pub struct LlmParser<T> {
    transport: T,
    caps: RobotCapabilities,
    system_prompt: String,
}

impl<T: ChatTransport> LlmParser<T> {
    pub fn new(transport: T, caps: RobotCapabilities, defaults: LimitDefaults) -> Self {
        let system_prompt = render_prompt(&caps, &defaults);
        Self { transport, caps, system_prompt }
    }

    pub fn parse(&self, instruction: &str) -> ParseOutcome {
        if instruction.trim().is_empty() {
            return ParseOutcome::Rejected { reason: "empty instruction".into() };
        }
        let messages = vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(format!("Instruction: {}", instruction.trim())),
        ];
        self.run(messages, instruction)
    }

    /// Re-parses after a single clarification exchange.
    pub fn clarify(&self, instruction: &str, question: &str, answer: &str) -> ParseOutcome {
        let messages = vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(format!("Instruction: {}", instruction.trim())),
            ChatMessage::assistant(serde_json::json!({ "clarify": question }).to_string()),
            ChatMessage::user(format!("Answer: {}", answer.trim())),
        ];
        self.run(messages, &format!("{} ({})", instruction.trim(), answer.trim()))
    }

    fn run(&self, mut messages: Vec<ChatMessage>, source: &str) -> ParseOutcome {
        for _attempt in 0..=MAX_RETRIES {
            let text = match self.transport.complete(&messages) {
                Ok(t) => t,
                Err(TransportError::Unavailable(_)) => {
                    return ParseOutcome::Rejected { reason: "endpoint unavailable".into() }
                }
                Err(TransportError::BadResponse(e)) => {
                    messages.push(ChatMessage::user(format!(
                        "The previous reply could not be read ({e}). Reply with one JSON object only."
                    )));
                    continue;
                }
            };
            match interpret(&text, source, &self.caps) {
                Reply::Config(config) => return ParseOutcome::Parsed { config },
                Reply::Clarify(question) => return ParseOutcome::Clarify { question },
                Reply::Malformed(why) => {
                    messages.push(ChatMessage::assistant(text));
                    messages.push(ChatMessage::user(format!(
                        "That reply was invalid: {why}. Reply with exactly one JSON object following the template."
                    )));
                }
            }
        }
        ParseOutcome::Rejected { reason: "unparseable".into() }
    }
}

pub fn parse_llm<T: ChatTransport>(instruction: &str, transport: T, caps: RobotCapabilities) -> ParseOutcome {
    LlmParser::new(transport, caps, LimitDefaults::default()).parse(instruction)
}
