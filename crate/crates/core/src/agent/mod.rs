//! Action-producing agents and the episode loop.
//!
//! Two bindings exist: a scripted inertial agent, which imitates actions
//! visible in its context with a probability that grows with the number of
//! visible rounds, and a chat-completions endpoint.

pub mod chat;
pub mod runner;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{ConversationError, Message, Tag};
use crate::env::EnvError;
use crate::policy::PolicyError;
use crate::rng::SeededRng;

pub use chat::{extract_action, ChatClient, ChatEndpoint, ChatSummarizer};
pub use runner::{
    build_prompt, env_label, replay, run_batch, run_episode, scaled_steps, BatchCell,
    BatchConfig, BatchResult, ContextView, EpisodeOptions, EpisodeRecord, StepEntry,
};

#[derive(Debug, Error)]
pub enum AgentError {
    /// The endpoint could not be reached, timed out, or answered with an
    /// error status. Episodes that hit this are aborted, never scored.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
}

impl AgentError {
    pub fn is_transport(&self) -> bool {
        matches!(self, AgentError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePolicy {
    /// Shortest-path hint when the environment has a solver, else heuristic.
    Planner,
    Random,
    Heuristic,
}

impl FromStr for BasePolicy {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "planner" => Ok(Self::Planner),
            "random" => Ok(Self::Random),
            "heuristic" => Ok(Self::Heuristic),
            other => Err(AgentError::Config(format!("unknown base policy `{other}`"))),
        }
    }
}

impl fmt::Display for BasePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Planner => "planner",
            Self::Random => "random",
            Self::Heuristic => "heuristic",
        })
    }
}

/// Imitation probability `p(n) = p_max * (1 - exp(-lambda * n))` over the
/// number `n` of completed rounds visible in the context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaModel {
    pub p_max: f64,
    pub lambda: f64,
    pub base: BasePolicy,
}

impl Default for InertiaModel {
    fn default() -> Self {
        Self {
            p_max: 0.9,
            lambda: 0.3,
            base: BasePolicy::Planner,
        }
    }
}

impl InertiaModel {
    pub fn validated(self) -> Result<Self, AgentError> {
        if !(0.0..=1.0).contains(&self.p_max) {
            return Err(AgentError::Config("p_max must lie in [0, 1]".into()));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(AgentError::Config("lambda must be positive".into()));
        }
        Ok(self)
    }

    pub fn imitation_probability(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.p_max * (1.0 - (-self.lambda * n as f64).exp())
    }
}

/// Actions the environment can suggest for the current state.
#[derive(Debug, Clone, Default)]
pub struct BaseActions {
    pub hint: Option<String>,
    pub heuristic: Option<String>,
    pub space: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedDecision {
    pub action: String,
    pub imitated: bool,
}

/// One scripted decision over an assembled context.
///
/// Exactly two draws are taken from `rng` per call whatever the outcome, so
/// runs that differ only in context stay aligned on the random stream.
pub fn scripted_act(
    context: &[Message],
    model: &InertiaModel,
    base: &BaseActions,
    rng: &mut SeededRng,
) -> ScriptedDecision {
    let u: f64 = rng.gen();
    let pick = rng.gen_range(0..base.space.len().max(1));
    let actions: Vec<&str> = context
        .iter()
        .filter(|m| m.tag == Tag::Action)
        .map(|m| m.content.as_str())
        .collect();
    if u < model.imitation_probability(actions.len()) {
        if let Some(action) = copy_target(&actions) {
            return ScriptedDecision {
                action: action.to_string(),
                imitated: true,
            };
        }
    }
    let random = base.space.get(pick).cloned().unwrap_or_default();
    let action = match model.base {
        BasePolicy::Planner => base.hint.clone().or_else(|| base.heuristic.clone()),
        BasePolicy::Heuristic => base.heuristic.clone().or_else(|| base.hint.clone()),
        BasePolicy::Random => None,
    }
    .unwrap_or(random);
    ScriptedDecision {
        action,
        imitated: false,
    }
}

/// The action at the same position in the previous cycle of the trailing
/// repetition, or the most recent action when the tail is not periodic.
///
/// A period `P` is accepted when the last `2P` actions satisfy
/// `a[k] == a[k - P]`; the shortest such period wins.
pub fn copy_target<'a>(actions: &[&'a str]) -> Option<&'a str> {
    let n = actions.len();
    for p in 1..=n / 2 {
        if (n - p..n).all(|k| actions[k] == actions[k - p]) {
            return Some(actions[n - p]);
        }
    }
    actions.last().copied()
}

/// How actions are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentBinding {
    Scripted(InertiaModel),
    ChatEndpoint(ChatEndpoint),
}

impl Default for AgentBinding {
    fn default() -> Self {
        Self::Scripted(InertiaModel::default())
    }
}

impl AgentBinding {
    pub fn scripted(p_max: f64, lambda: f64, base: BasePolicy) -> Result<Self, AgentError> {
        Ok(Self::Scripted(
            InertiaModel {
                p_max,
                lambda,
                base,
            }
            .validated()?,
        ))
    }
}

/// `scripted[:p_max=..,lambda=..,base=..]` or
/// `chat:url=..,model=..[,temperature=..,timeout=..,api_key_env=..,retries=..]`.
impl FromStr for AgentBinding {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| AgentError::Config(format!("expected key=value, got `{part}`")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let num = |k: &str, v: &str| {
            v.parse::<f64>()
                .map_err(|_| AgentError::Config(format!("`{k}` must be a number")))
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "scripted" => {
                let mut m = InertiaModel::default();
                for (k, v) in &kv {
                    match k.as_str() {
                        "p_max" => m.p_max = num(k, v)?,
                        "lambda" => m.lambda = num(k, v)?,
                        "base" => m.base = v.parse()?,
                        _ => return Err(AgentError::Config(format!("unknown scripted key `{k}`"))),
                    }
                }
                Ok(Self::Scripted(m.validated()?))
            }
            "chat" => {
                let mut e = ChatEndpoint::default();
                for (k, v) in &kv {
                    match k.as_str() {
                        "url" => e.base_url.clone_from(v),
                        "model" => e.model.clone_from(v),
                        "temperature" => e.temperature = num(k, v)?,
                        "timeout" => e.timeout_secs = num(k, v)?,
                        "api_key_env" => e.api_key_env.clone_from(v),
                        "retries" => e.max_retries = num(k, v)? as u32,
                        _ => return Err(AgentError::Config(format!("unknown chat key `{k}`"))),
                    }
                }
                if e.model.is_empty() {
                    return Err(AgentError::Config("chat agent needs model=<name>".into()));
                }
                Ok(Self::ChatEndpoint(e))
            }
            other => Err(AgentError::Config(format!("unknown agent kind `{other}`"))),
        }
    }
}

impl fmt::Display for AgentBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Scripted(m) => write!(
                f,
                "scripted:p_max={},lambda={},base={}",
                m.p_max, m.lambda, m.base
            ),
            Self::ChatEndpoint(e) => write!(
                f,
                "chat:url={},model={},temperature={},timeout={},api_key_env={},retries={}",
                e.base_url, e.model, e.temperature, e.timeout_secs, e.api_key_env, e.max_retries
            ),
        }
    }
}
