//! Preference pairs from dual-context rollouts.
//!
//! At every turn the agent is asked twice over the same history: once with a
//! long context and once with a short one. The long-context action is the one
//! executed, so both views share a single environment trajectory. Pairs take
//! the short context as the prompt, the short-context action as chosen and
//! the long-context action as rejected. Environment rewards are never used.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    scripted_act, AgentBinding, AgentError, BaseActions, BasePolicy, ChatClient,
};
use crate::conversation::{to_chat, ChatMessage, Conversation, Message};
use crate::env::{EnvSpec, Environment};
use crate::policy::{PolicyConfig, PolicyState};
use crate::rng::{derive, SeededRng};

/// Episodes are simulated in fixed-size blocks so the emitted pairs do not
/// depend on the worker count.
const EPISODE_BLOCK: usize = 32;

#[derive(Debug, Error)]
pub enum CplError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("malformed dataset line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Context size in rounds; `Unbounded` keeps the whole history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ContextSize {
    Rounds(usize),
    Unbounded,
}

impl ContextSize {
    pub fn policy(self) -> PolicyConfig {
        match self {
            Self::Rounds(w) => PolicyConfig::Window { size: w },
            Self::Unbounded => PolicyConfig::Long,
        }
    }
}

impl fmt::Display for ContextSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rounds(n) => write!(f, "{n}"),
            Self::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for ContextSize {
    type Err = CplError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "long" | "∞" => Ok(Self::Unbounded),
            n => n
                .parse()
                .map(Self::Rounds)
                .map_err(|_| CplError::Config(format!("context size `{s}` is not a count or `inf`"))),
        }
    }
}

impl Serialize for ContextSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Rounds(n) => s.serialize_u64(*n as u64),
            Self::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ContextSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Self::Rounds(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CplConfig {
    /// Short context (prompt and chosen action).
    pub chosen_rounds: ContextSize,
    /// Long context (rejected and executed action).
    pub rejected_rounds: ContextSize,
    /// Minimum turn at which pairs are sampled.
    pub k: usize,
    /// Drop pairs whose two actions coincide.
    pub dedup: bool,
    pub target_pairs: usize,
    pub max_pairs_per_episode: usize,
    /// Upper bound on simulated episodes per environment.
    pub max_episodes: usize,
}

impl Default for CplConfig {
    fn default() -> Self {
        Self {
            chosen_rounds: ContextSize::Rounds(6),
            rejected_rounds: ContextSize::Unbounded,
            k: 20,
            dedup: true,
            target_pairs: 1000,
            max_pairs_per_episode: 5,
            max_episodes: 20_000,
        }
    }
}

impl CplConfig {
    pub fn validated(self) -> Result<Self, CplError> {
        if self.chosen_rounds == ContextSize::Unbounded {
            return Err(CplError::Config("the chosen context must be bounded".into()));
        }
        if matches!(self.chosen_rounds, ContextSize::Rounds(0))
            || matches!(self.rejected_rounds, ContextSize::Rounds(0))
        {
            return Err(CplError::Config("context sizes must be >= 1".into()));
        }
        if self.chosen_rounds >= self.rejected_rounds {
            return Err(CplError::Config(
                "the chosen context must be shorter than the rejected one".into(),
            ));
        }
        if self.k < 1 {
            return Err(CplError::Config("K must be >= 1".into()));
        }
        if self.max_pairs_per_episode == 0 {
            return Err(CplError::Config("per-episode pair cap must be >= 1".into()));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub env: EnvSpec,
    pub episode: usize,
    pub agent_seed: u64,
    pub turn: usize,
    /// Visible rounds, including the current one.
    pub long_context_size: usize,
    pub short_context_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<ChatMessage>,
    pub chosen: String,
    pub rejected: String,
    pub meta: PairMeta,
}

/// Recommended settings for the downstream preference trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSettings {
    pub loss: String,
    pub beta: f64,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub learning_rate: f64,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            loss: "dpo".into(),
            beta: 0.01,
            lora_rank: 16,
            lora_alpha: 16,
            learning_rate: 5e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: String,
    pub config: CplConfig,
    pub envs: Vec<EnvSpec>,
    pub agent: String,
    pub seed: u64,
    pub trainer: TrainerSettings,
}

impl DatasetHeader {
    pub fn new(config: &CplConfig, envs: &[EnvSpec], agent: &AgentBinding, seed: u64) -> Self {
        Self {
            format: "cpl-pairs".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            envs: envs.to_vec(),
            agent: agent.to_string(),
            seed,
            trainer: TrainerSettings::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

/// One dual-context episode: the executed history and the pairs it yielded.
#[derive(Debug, Clone)]
pub struct CollectedEpisode {
    pub episode: usize,
    pub env: EnvSpec,
    pub agent_seed: u64,
    pub conversation: Conversation,
    pub pairs: Vec<PreferencePair>,
}

enum Actor {
    Scripted(crate::agent::InertiaModel),
    Chat(ChatClient),
}

impl Actor {
    fn new(agent: &AgentBinding) -> Result<Self, AgentError> {
        Ok(match agent {
            AgentBinding::Scripted(m) => Actor::Scripted(m.validated()?),
            AgentBinding::ChatEndpoint(e) => Actor::Chat(ChatClient::new(e.clone())?),
        })
    }

    fn act(
        &self,
        env: &Environment,
        prompt: &[Message],
        rng: &mut SeededRng,
    ) -> Result<String, AgentError> {
        match self {
            Actor::Scripted(model) => {
                let (hint, heuristic) = match model.base {
                    BasePolicy::Random => (None, None),
                    BasePolicy::Planner => match env.optimal_hint() {
                        Some(h) => (Some(h), None),
                        None => (None, env.heuristic_action()),
                    },
                    BasePolicy::Heuristic => (None, env.heuristic_action()),
                };
                let base = BaseActions {
                    hint,
                    heuristic,
                    space: env.action_space(),
                };
                Ok(scripted_act(prompt, model, &base, rng).action)
            }
            Actor::Chat(client) => client.act(env.id(), &to_chat(prompt)),
        }
    }
}

/// Completed rounds visible at turn `t` for a context of the given size.
pub fn visible_history(size: ContextSize, t: usize) -> BTreeSet<usize> {
    size.policy()
        .visible_rounds(&PolicyState::default(), t)
        .into_iter()
        .filter(|&i| i < t)
        .collect()
}

/// Runs one dual-context episode. Each turn draws the long-context action
/// and then the short-context action from the same seeded stream, so turn
/// `t` consumes a fixed block of draws whatever the contexts contain.
pub fn collect_episode(
    spec: &EnvSpec,
    agent: &AgentBinding,
    cfg: &CplConfig,
    episode: usize,
    agent_seed: u64,
) -> Result<CollectedEpisode, CplError> {
    let actor = Actor::new(agent)?;
    let mut env = spec.build().map_err(AgentError::from)?;
    let mut conv = Conversation::new(env.system_prompt(), env.goal());
    let mut rng = SeededRng::seed_from_u64(agent_seed);
    let mut pairs = Vec::new();
    while !env.is_done() {
        let t = conv.len() + 1;
        let observation = env.observation().to_string();
        let long_visible = visible_history(cfg.rejected_rounds, t);
        let short_visible = visible_history(cfg.chosen_rounds, t);
        let long_prompt = conv.assemble_prompt(&long_visible, &observation).map_err(AgentError::from)?;
        let short_prompt = conv.assemble_prompt(&short_visible, &observation).map_err(AgentError::from)?;
        let a_long = actor.act(&env, &long_prompt, &mut rng)?;
        let a_short = actor.act(&env, &short_prompt, &mut rng)?;
        let keep = t >= cfg.k
            && long_visible.len() > short_visible.len()
            && !(cfg.dedup && a_long == a_short)
            && pairs.len() < cfg.max_pairs_per_episode;
        if keep {
            pairs.push(PreferencePair {
                prompt: to_chat(&short_prompt),
                chosen: a_short,
                rejected: a_long.clone(),
                meta: PairMeta {
                    env: spec.clone(),
                    episode,
                    agent_seed,
                    turn: t,
                    long_context_size: long_visible.len() + 1,
                    short_context_size: short_visible.len() + 1,
                },
            });
        }
        env.step(&a_long).map_err(AgentError::from)?;
        let stored = if a_long.is_empty() {
            crate::agent::runner::EMPTY_ACTION
        } else {
            a_long.as_str()
        };
        conv = conv.append_round(observation, stored).map_err(AgentError::from)?;
    }
    Ok(CollectedEpisode {
        episode,
        env: spec.clone(),
        agent_seed,
        conversation: conv,
        pairs,
    })
}

/// Episodes for one environment, in index order, until `target_pairs` are
/// available or `max_episodes` have run. The returned pairs are exactly the
/// first `target_pairs` in (episode, turn) order.
pub fn collect_env(
    spec: &EnvSpec,
    agent: &AgentBinding,
    cfg: &CplConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<CollectedEpisode>, CplError> {
    let cfg = cfg.clone().validated()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CplError::Config(e.to_string()))?;
    let mut episodes = Vec::new();
    let mut total = 0;
    let mut next = 0;
    while total < cfg.target_pairs && next < cfg.max_episodes {
        let end = (next + EPISODE_BLOCK).min(cfg.max_episodes);
        let block: Vec<Result<CollectedEpisode, CplError>> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|e| {
                    let env_spec = spec.clone().with_seed(derive(seed, 1, e as u64));
                    collect_episode(&env_spec, agent, &cfg, e, derive(seed, 2, e as u64))
                })
                .collect()
        });
        for ep in block {
            let mut ep = ep?;
            if total >= cfg.target_pairs {
                break;
            }
            ep.pairs.truncate(cfg.target_pairs - total);
            total += ep.pairs.len();
            episodes.push(ep);
        }
        next = end;
    }
    Ok(episodes)
}

/// Pairs for every environment, concatenated in the given environment order.
pub fn collect_pairs(
    envs: &[EnvSpec],
    agent: &AgentBinding,
    cfg: &CplConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<PreferencePair>, CplError> {
    let mut out = Vec::new();
    for spec in envs {
        for ep in collect_env(spec, agent, cfg, seed, jobs)? {
            out.extend(ep.pairs);
        }
    }
    Ok(out)
}

/// Header line followed by one JSON object per pair.
pub fn export_dataset<W: Write>(
    header: &DatasetHeader,
    pairs: &[PreferencePair],
    mut w: W,
) -> Result<(), CplError> {
    let line = HeaderLine {
        header: header.clone(),
    };
    serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for p in pairs {
        serde_json::to_writer(&mut w, p).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_dataset_file(
    header: &DatasetHeader,
    pairs: &[PreferencePair],
    path: &Path,
) -> Result<(), CplError> {
    let file = std::fs::File::create(path)?;
    export_dataset(header, pairs, std::io::BufWriter::new(file))
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(DatasetHeader, Vec<PreferencePair>), CplError> {
    let mut header = None;
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| CplError::Format {
            line: i + 1,
            reason: e.to_string(),
        };
        if header.is_none() {
            let h: HeaderLine = serde_json::from_str(&line).map_err(bad)?;
            header = Some(h.header);
        } else {
            pairs.push(serde_json::from_str(&line).map_err(bad)?);
        }
    }
    let header = header.ok_or(CplError::Format {
        line: 0,
        reason: "missing header line".into(),
    })?;
    Ok((header, pairs))
}
