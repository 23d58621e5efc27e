//! Round-level context policies: Long, Window, Clip and Summary.
//!
//! Clip and Summary follow the trimming recurrence
//!
//! ```text
//! C_t = {t-L+1 ..= t}        if |C_{t-1}| + 1 == H
//!       C_{t-1} ∪ {t}        otherwise
//! ```
//!
//! where `PolicyState::retained` stores `C_{t-1}` between turns. The rounds
//! visible while generating turn `t` are `C_t`, plus round `t` itself when a
//! clearing with `L = 0` would otherwise leave the context empty.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{Conversation, Round};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy spec `{0}` (expected long | window-<W> | clip-<H>to<L> | sum-<H>to<L>)")]
    Parse(String),
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("summary policy requires a summarizer")]
    MissingSummarizer,
    #[error("summarizer failed: {0}")]
    Summarizer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyConfig {
    Long,
    Window { size: usize },
    Clip { threshold: usize, retain: usize },
    Summary { threshold: usize, retain: usize },
}

impl PolicyConfig {
    pub fn window(size: usize) -> Result<Self, PolicyError> {
        Self::Window { size }.validated()
    }

    pub fn clip(threshold: usize, retain: usize) -> Result<Self, PolicyError> {
        Self::Clip { threshold, retain }.validated()
    }

    pub fn summary(threshold: usize, retain: usize) -> Result<Self, PolicyError> {
        Self::Summary { threshold, retain }.validated()
    }

    pub fn validated(self) -> Result<Self, PolicyError> {
        match self {
            Self::Long => Ok(self),
            Self::Window { size } if size >= 1 => Ok(self),
            Self::Window { .. } => Err(PolicyError::Config("window size must be >= 1".into())),
            Self::Clip { threshold, retain } | Self::Summary { threshold, retain } => {
                if threshold < 2 {
                    Err(PolicyError::Config("clearing threshold H must be >= 2".into()))
                } else if retain >= threshold {
                    Err(PolicyError::Config("retention L must satisfy L < H".into()))
                } else {
                    Ok(self)
                }
            }
        }
    }

    fn clearing(self) -> Option<(usize, usize)> {
        match self {
            Self::Clip { threshold, retain } | Self::Summary { threshold, retain } => {
                Some((threshold, retain))
            }
            _ => None,
        }
    }

    pub fn is_summary(self) -> bool {
        matches!(self, Self::Summary { .. })
    }

    /// History rounds in context at turn `t` (the trimmed context `C_t`).
    /// For Clip/Summary with `L = 0` this is empty on clearing turns.
    pub fn trimmed_context(self, state: &PolicyState, t: usize) -> Vec<usize> {
        assert!(t >= 1, "turns are 1-based");
        match self {
            Self::Long => (1..=t).collect(),
            Self::Window { size } => (t.saturating_sub(size) + 1..=t).collect(),
            Self::Clip { threshold, retain } | Self::Summary { threshold, retain } => {
                if state.retained.len() + 1 == threshold {
                    (t + 1 - retain..=t).collect()
                } else {
                    let mut v = state.retained.clone();
                    v.push(t);
                    v
                }
            }
        }
    }

    /// Rounds visible while generating turn `t`; always contains `t`.
    pub fn visible_rounds(self, state: &PolicyState, t: usize) -> BTreeSet<usize> {
        let mut set: BTreeSet<usize> = self.trimmed_context(state, t).into_iter().collect();
        set.insert(t);
        set
    }

    /// Visibility mask over rounds `1..=t` (index `i - 1` for round `i`).
    pub fn build_mask(self, state: &PolicyState, t: usize) -> Vec<bool> {
        let visible = self.visible_rounds(state, t);
        (1..=t).map(|i| visible.contains(&i)).collect()
    }

    /// Advances the state once round `t` has completed.
    ///
    /// For Summary, when the next turn will clear, the context that is about
    /// to be dropped (prior summaries plus the retained rounds) is compressed
    /// into one new summary. `conv` must contain round `t`.
    pub fn update_after_round(
        self,
        state: &PolicyState,
        t: usize,
        conv: &Conversation,
        summarizer: Option<&dyn Summarizer>,
    ) -> Result<PolicyState, PolicyError> {
        if self.is_summary() && summarizer.is_none() {
            return Err(PolicyError::MissingSummarizer);
        }
        let mut next = PolicyState {
            retained: self.trimmed_context(state, t),
            summaries: state.summaries.clone(),
        };
        if let (Some(summarizer), Some((threshold, _))) = (summarizer, self.clearing()) {
            if self.is_summary() && next.retained.len() + 1 == threshold {
                let rounds: Vec<&Round> =
                    next.retained.iter().filter_map(|&i| conv.round(i)).collect();
                let text = summarizer
                    .summarize(&next.summaries, &rounds)
                    .map_err(PolicyError::Summarizer)?;
                next.summaries.push(text);
            }
        }
        Ok(next)
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Long => write!(f, "long"),
            Self::Window { size } => write!(f, "window-{size}"),
            Self::Clip { threshold, retain } => write!(f, "clip-{threshold}to{retain}"),
            Self::Summary { threshold, retain } => write!(f, "sum-{threshold}to{retain}"),
        }
    }
}

impl FromStr for PolicyConfig {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let parse_err = || PolicyError::Parse(s.to_string());
        let hl = |rest: &str| -> Result<(usize, usize), PolicyError> {
            let (h, l) = rest.split_once("to").ok_or_else(parse_err)?;
            Ok((
                h.parse().map_err(|_| parse_err())?,
                l.parse().map_err(|_| parse_err())?,
            ))
        };
        let cfg = if lower == "long" {
            Self::Long
        } else if let Some(w) = lower.strip_prefix("window-") {
            Self::Window {
                size: w.parse().map_err(|_| parse_err())?,
            }
        } else if let Some(rest) = lower.strip_prefix("clip-") {
            let (threshold, retain) = hl(rest)?;
            Self::Clip { threshold, retain }
        } else if let Some(rest) = lower.strip_prefix("sum-") {
            let (threshold, retain) = hl(rest)?;
            Self::Summary { threshold, retain }
        } else {
            return Err(parse_err());
        };
        cfg.validated()
    }
}

impl TryFrom<String> for PolicyConfig {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyConfig> for String {
    fn from(p: PolicyConfig) -> String {
        p.to_string()
    }
}

/// Per-episode policy state, single owner.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyState {
    /// Trimmed context after the last completed round, ascending.
    pub retained: Vec<usize>,
    /// Summary texts, oldest first (Summary policy only).
    pub summaries: Vec<String>,
}

/// Compresses a context into one summary text.
pub trait Summarizer: Send + Sync {
    fn summarize(&self, previous: &[String], rounds: &[&Round]) -> Result<String, String>;
}

/// Deterministic summarizer: concatenates round actions (and the tail of the
/// last observation), truncated to `max_chars`.
#[derive(Debug, Clone)]
pub struct TruncatingSummarizer {
    pub max_chars: usize,
}

impl Default for TruncatingSummarizer {
    fn default() -> Self {
        Self { max_chars: 240 }
    }
}

impl Summarizer for TruncatingSummarizer {
    fn summarize(&self, _previous: &[String], rounds: &[&Round]) -> Result<String, String> {
        let (Some(first), Some(last)) = (rounds.first(), rounds.last()) else {
            return Ok("no interaction yet".to_string());
        };
        let actions: Vec<&str> = rounds.iter().map(|r| r.action()).collect();
        let mut text = format!(
            "rounds {}-{}: actions {}; last observation: {}",
            first.index,
            last.index,
            actions.join(", "),
            last.observation().replace('\n', " ")
        );
        if text.chars().count() > self.max_chars {
            text = text.chars().take(self.max_chars).collect();
        }
        Ok(text)
    }
}
