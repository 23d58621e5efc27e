//! OpenAI-compatible chat-completions binding.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::conversation::{ChatMessage, Role, Round};
use crate::env::grid::Direction;
use crate::env::textcraft::TextCraft;
use crate::env::EnvId;
use crate::policy::Summarizer;

static BRACKET_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\[\]\n]{1,32}\]").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatEndpoint {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub api_key_env: String,
    /// Extra attempts after a 429 or 5xx answer.
    pub max_retries: u32,
}

impl Default for ChatEndpoint {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: String::new(),
            temperature: 0.8,
            timeout_secs: 60.0,
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Blocking client; cheap to clone and safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct ChatClient {
    endpoint: ChatEndpoint,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(endpoint: ChatEndpoint) -> Result<Self, AgentError> {
        if !(endpoint.timeout_secs > 0.0) {
            return Err(AgentError::Config("timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(Self { endpoint, http })
    }

    pub fn endpoint(&self) -> &ChatEndpoint {
        &self.endpoint
    }

    /// Raw completion text for `messages`.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        match messages.first() {
            Some(m) if m.role == Role::System => {}
            _ => {
                return Err(AgentError::Protocol(
                    "request must start with a system message".into(),
                ))
            }
        }
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let body = CompletionRequest {
            model: &self.endpoint.model,
            messages,
            temperature: self.endpoint.temperature,
        };
        let key = std::env::var(&self.endpoint.api_key_env).ok();
        let mut attempt = 0;
        loop {
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &key {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .map_err(|e| AgentError::Transport(format!("{url}: {e}")))?;
            let status = resp.status();
            if status.is_success() {
                let text = resp
                    .text()
                    .map_err(|e| AgentError::Transport(format!("{url}: {e}")))?;
                let parsed: CompletionResponse = serde_json::from_str(&text)
                    .map_err(|e| AgentError::Protocol(format!("malformed completion body: {e}")))?;
                return parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| AgentError::Protocol("completion has no message content".into()));
            }
            let retryable = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
            if !retryable || attempt >= self.endpoint.max_retries {
                return Err(AgentError::Transport(format!("{url}: HTTP {status}")));
            }
            std::thread::sleep(Duration::from_millis(200 << attempt.min(5)));
            attempt += 1;
        }
    }

    /// Completion followed by environment-specific action extraction.
    pub fn act(&self, env: EnvId, messages: &[ChatMessage]) -> Result<String, AgentError> {
        Ok(extract_action(env, &self.complete(messages)?))
    }
}

/// Pulls the action out of free-form model output.
///
/// Bracket grammars take the last bracketed token, Maze takes the last
/// direction word, and TextCraft takes the last line that parses as a
/// command. The trimmed raw text is returned when nothing matches.
pub fn extract_action(env: EnvId, text: &str) -> String {
    let found = match env {
        EnvId::G2048 | EnvId::Hangman | EnvId::RushHour | EnvId::FrozenLake => BRACKET_RE
            .find_iter(text)
            .last()
            .map(|m| m.as_str().to_string())
            .or_else(|| {
                (env == EnvId::FrozenLake)
                    .then(|| Direction::parse_last(text).map(|d| format!("[{}]", d.name())))
                    .flatten()
            }),
        EnvId::Maze => Direction::parse_last(text).map(|d| d.name().to_string()),
        EnvId::TextCraft => text
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| TextCraft::parse(l).is_some())
            .map(str::to_string),
    };
    found.unwrap_or_else(|| text.trim().to_string())
}

/// Summarizer backed by the same endpoint as the acting agent.
#[derive(Debug, Clone)]
pub struct ChatSummarizer {
    client: ChatClient,
}

impl ChatSummarizer {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl Summarizer for ChatSummarizer {
    fn summarize(&self, previous: &[String], rounds: &[&Round]) -> Result<String, String> {
        let mut body = String::new();
        if !previous.is_empty() {
            body.push_str(&crate::conversation::summary_block(previous));
            body.push('\n');
        }
        for r in rounds {
            body.push_str(&format!(
                "Round {}\nObservation:\n{}\nAction: {}\n\n",
                r.index,
                r.observation(),
                r.action()
            ));
        }
        let messages = [
            ChatMessage {
                role: Role::System,
                content: "Compress the interaction below into a short summary that keeps every fact needed to continue the task. Reply with the summary only.".into(),
            },
            ChatMessage {
                role: Role::User,
                content: body,
            },
        ];
        self.client
            .complete(&messages)
            .map(|s| s.trim().to_string())
            .map_err(|e| e.to_string())
    }
}
