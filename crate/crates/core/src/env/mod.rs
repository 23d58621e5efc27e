//! Deterministic, seedable text environments.
//!
//! Every environment is built from an [`EnvSpec`] and wrapped in an
//! [`Environment`] that owns episode bookkeeping: the step limit, the
//! invalid-action streak limit, and terminal reward assignment. The game
//! types themselves only implement dynamics through the [`Game`] trait.

pub mod frozen_lake;
pub mod game2048;
pub mod grid;
pub mod hangman;
pub mod maze;
pub mod rush_hour;
pub mod textcraft;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

/// Consecutive invalid actions after which an episode is terminated.
pub const INVALID_ACTION_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment spec `{spec}`: {reason}")]
    Spec { spec: String, reason: String },
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("episode already finished")]
    EpisodeDone,
}

impl EnvError {
    fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvId {
    Maze,
    FrozenLake,
    G2048,
    Hangman,
    RushHour,
    TextCraft,
}

impl EnvId {
    pub const ALL: [EnvId; 6] = [
        EnvId::Maze,
        EnvId::FrozenLake,
        EnvId::G2048,
        EnvId::Hangman,
        EnvId::RushHour,
        EnvId::TextCraft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Maze => "maze",
            EnvId::FrozenLake => "frozenlake",
            EnvId::G2048 => "2048",
            EnvId::Hangman => "hangman",
            EnvId::RushHour => "rushhour",
            EnvId::TextCraft => "textcraft",
        }
    }

    pub fn default_max_steps(self) -> usize {
        match self {
            EnvId::Maze => 60,
            EnvId::FrozenLake => 40,
            EnvId::G2048 => 60,
            EnvId::Hangman => 40,
            EnvId::RushHour => 50,
            EnvId::TextCraft => 80,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "maze" | "mz" => Ok(EnvId::Maze),
            "frozenlake" | "fl" => Ok(EnvId::FrozenLake),
            "2048" | "g2048" | "game2048" => Ok(EnvId::G2048),
            "hangman" | "hm" => Ok(EnvId::Hangman),
            "rushhour" | "rh" => Ok(EnvId::RushHour),
            "textcraft" | "tc" => Ok(EnvId::TextCraft),
            _ => Err(EnvError::Spec {
                spec: s.to_string(),
                reason: "unknown environment".into(),
            }),
        }
    }
}

/// `<env>:<seed>[:knob=value,...]`. The `max_steps` knob overrides the
/// per-environment default step limit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EnvSpec {
    pub id: EnvId,
    pub seed: u64,
    pub max_steps: usize,
    pub knobs: BTreeMap<String, String>,
}

impl EnvSpec {
    pub fn new(id: EnvId, seed: u64) -> Self {
        Self {
            id,
            seed,
            max_steps: id.default_max_steps(),
            knobs: BTreeMap::new(),
        }
    }

    pub fn with_knob(mut self, key: &str, value: impl ToString) -> Self {
        self.knobs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub(crate) fn knob<T: FromStr>(&self, key: &str, default: T) -> Result<T, EnvError> {
        match self.knobs.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| EnvError::config(format!("knob `{key}` has invalid value `{v}`"))),
        }
    }

    pub(crate) fn knob_str<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.knobs.get(key).map(String::as_str).unwrap_or(default)
    }

    /// Builds the environment and returns it with its initial observation.
    pub fn reset(&self) -> Result<(String, Environment), EnvError> {
        let env = self.build()?;
        Ok((env.observation().to_string(), env))
    }

    pub fn build(&self) -> Result<Environment, EnvError> {
        if self.max_steps == 0 {
            return Err(EnvError::config("max_steps must be positive"));
        }
        let mut rng = SeededRng::seed_from_u64(crate::rng::derive(self.seed, self.id as u64, 0));
        let game: Box<dyn Game> = match self.id {
            EnvId::Maze => Box::new(maze::Maze::generate(self, &mut rng)?),
            EnvId::FrozenLake => Box::new(frozen_lake::FrozenLake::generate(self, &mut rng)?),
            EnvId::G2048 => Box::new(game2048::Game2048::generate(self, rng)?),
            EnvId::Hangman => Box::new(hangman::Hangman::generate(self, &mut rng)?),
            EnvId::RushHour => Box::new(rush_hour::RushHour::generate(self, &mut rng)?),
            EnvId::TextCraft => Box::new(textcraft::TextCraft::generate(self, &mut rng)?),
        };
        Ok(Environment::new(self.clone(), game))
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.seed)?;
        let mut knobs: Vec<String> = self.knobs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        if self.max_steps != self.id.default_max_steps() {
            knobs.push(format!("max_steps={}", self.max_steps));
            knobs.sort();
        }
        if !knobs.is_empty() {
            write!(f, ":{}", knobs.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for EnvSpec {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| EnvError::Spec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = s.trim().splitn(3, ':');
        let id: EnvId = parts.next().unwrap_or("").parse()?;
        let seed = match parts.next() {
            Some(seed) => seed.parse().map_err(|_| bad("seed must be an unsigned integer"))?,
            None => 0,
        };
        let mut spec = EnvSpec::new(id, seed);
        if let Some(knobs) = parts.next() {
            for kv in knobs.split(',').filter(|kv| !kv.is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad("knobs must be key=value"))?;
                let (k, v) = (k.trim(), v.trim());
                if k == "max_steps" {
                    spec.max_steps = v.parse().map_err(|_| bad("max_steps must be an integer"))?;
                } else {
                    spec.knobs.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(spec)
    }
}

impl TryFrom<String> for EnvSpec {
    type Error = EnvError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EnvSpec> for String {
    fn from(s: EnvSpec) -> String {
        s.to_string()
    }
}

/// Result of applying one action to a game.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Unparseable or illegal action; the message is corrective feedback.
    Invalid(String),
    Continue(String),
    Goal(String),
    Failure(String),
}

/// Environment dynamics. Episode bookkeeping lives in [`Environment`].
pub trait Game: Send + Sync {
    /// Environment-specific instructions used as the system prompt.
    fn instructions(&self) -> String;
    /// Task statement used as the goal message.
    fn goal(&self) -> String;
    /// Current state rendering, including the action-space description.
    fn render(&self) -> String;
    fn apply(&mut self, action: &str) -> Outcome;
    /// Reward in `[0, 1]` for an episode that ends without reaching the goal.
    fn partial_reward(&self) -> f64;
    /// One action on a shortest solution, when a solver exists.
    fn optimal_hint(&self) -> Option<String> {
        None
    }
    /// Deterministic best-effort action; defaults to the optimal hint.
    fn heuristic_action(&self) -> Option<String> {
        self.optimal_hint()
    }
    /// Candidate actions for a uniformly random policy.
    fn action_space(&self) -> Vec<String>;
    /// Agent position for grid environments.
    fn position(&self) -> Option<(usize, usize)> {
        None
    }
    fn clone_box(&self) -> Box<dyn Game>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    Failure,
    StepLimit,
    InvalidActionLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: String,
    /// Nonzero only on the final step.
    pub reward: f64,
    pub done: bool,
    pub termination: Option<Termination>,
}

/// One episode of one environment: dynamics plus limits.
pub struct Environment {
    spec: EnvSpec,
    game: Box<dyn Game>,
    steps: usize,
    invalid_streak: usize,
    done: bool,
    observation: String,
}

impl Clone for Environment {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            game: self.game.clone_box(),
            steps: self.steps,
            invalid_streak: self.invalid_streak,
            done: self.done,
            observation: self.observation.clone(),
        }
    }
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("spec", &self.spec.to_string())
            .field("steps", &self.steps)
            .field("done", &self.done)
            .finish()
    }
}

impl Environment {
    pub fn new(spec: EnvSpec, game: Box<dyn Game>) -> Self {
        let observation = game.render();
        Self {
            spec,
            game,
            steps: 0,
            invalid_streak: 0,
            done: false,
            observation,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn id(&self) -> EnvId {
        self.spec.id
    }

    pub fn max_steps(&self) -> usize {
        self.spec.max_steps
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Latest observation (initial rendering before the first step).
    pub fn observation(&self) -> &str {
        &self.observation
    }

    pub fn system_prompt(&self) -> String {
        self.game.instructions()
    }

    pub fn goal(&self) -> String {
        self.game.goal()
    }

    pub fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    pub fn optimal_hint(&self) -> Option<String> {
        if self.done {
            return None;
        }
        self.game.optimal_hint()
    }

    pub fn heuristic_action(&self) -> Option<String> {
        self.game.heuristic_action()
    }

    pub fn action_space(&self) -> Vec<String> {
        self.game.action_space()
    }

    pub fn position(&self) -> Option<(usize, usize)> {
        self.game.position()
    }

    pub fn partial_reward(&self) -> f64 {
        self.game.partial_reward()
    }

    pub fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.steps += 1;
        let outcome = self.game.apply(action);
        let (feedback, mut termination) = match outcome {
            Outcome::Invalid(msg) => {
                self.invalid_streak += 1;
                let t = (self.invalid_streak >= INVALID_ACTION_LIMIT)
                    .then_some(Termination::InvalidActionLimit);
                (format!("Invalid action: {msg}"), t)
            }
            Outcome::Continue(msg) => {
                self.invalid_streak = 0;
                (msg, None)
            }
            Outcome::Goal(msg) => {
                self.invalid_streak = 0;
                (msg, Some(Termination::Goal))
            }
            Outcome::Failure(msg) => {
                self.invalid_streak = 0;
                (msg, Some(Termination::Failure))
            }
        };
        if termination.is_none() && self.steps >= self.spec.max_steps {
            termination = Some(Termination::StepLimit);
        }
        let reward = match termination {
            None => 0.0,
            Some(Termination::Goal) => 1.0,
            Some(_) => self.game.partial_reward().clamp(0.0, 1.0),
        };
        self.done = termination.is_some();
        let mut observation = feedback;
        if !observation.is_empty() {
            observation.push('\n');
        }
        observation.push_str(&self.game.render());
        self.observation = observation.clone();
        Ok(StepResult {
            observation,
            reward,
            done: self.done,
            termination,
        })
    }
}

/// Last case-insensitive whole-word match of one of `words` in `text`.
pub(crate) fn last_keyword<'a>(text: &str, words: &[&'a str]) -> Option<&'a str> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut best: Option<(usize, &'a str)> = None;
    for &w in words {
        for (pos, _) in lower.match_indices(w) {
            let before_ok = pos == 0 || !bytes[pos - 1].is_ascii_alphanumeric();
            let end = pos + w.len();
            let after_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
            if before_ok && after_ok && best.is_none_or(|(p, _)| pos > p) {
                best = Some((pos, w));
            }
        }
    }
    best.map(|(_, w)| w)
}
