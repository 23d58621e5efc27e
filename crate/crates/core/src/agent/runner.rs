//! Observe, assemble, act, step, update: the episode loop and batch runner.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scripted_act, AgentBinding, AgentError, BaseActions, BasePolicy, ChatClient, ChatSummarizer};
use crate::conversation::{to_chat, Conversation, Message, Tag};
use crate::env::{EnvSpec, Environment, Termination};
use crate::policy::{PolicyConfig, PolicyError, PolicyState, Summarizer, TruncatingSummarizer};
use crate::rng::{derive, SeededRng};
use crate::stats::MeanSem;

/// Placeholder stored in the history when an agent returns an empty action.
pub const EMPTY_ACTION: &str = "(empty response)";

/// How the prompt for each turn is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextView {
    /// Assemble only the visible rounds.
    #[default]
    Trimmed,
    /// Serialize the whole history and drop messages hidden by the mask.
    Masked,
}

#[derive(Clone, Default)]
pub struct EpisodeOptions {
    /// Rounds pre-seeded into the history before the first live turn. Only
    /// the observations and actions are used; system prompt and goal come
    /// from the environment.
    pub init: Option<Conversation>,
    pub view: ContextView,
    /// Overrides the default summarizer for Summary policies.
    pub summarizer: Option<Arc<dyn Summarizer>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub turn: usize,
    /// Rounds visible while generating this turn, including the turn itself.
    pub visible_rounds: usize,
    pub action: String,
    /// Whether the scripted agent copied a visible action; absent for chat agents.
    pub imitated: Option<bool>,
    pub reward: f64,
    /// Agent position after the step, for grid environments.
    pub position: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub env: EnvSpec,
    pub policy: PolicyConfig,
    pub agent: String,
    pub agent_seed: u64,
    pub init_rounds: usize,
    pub start_position: Option<(usize, usize)>,
    pub steps: Vec<StepEntry>,
    pub final_reward: f64,
    pub termination: Option<Termination>,
}

impl EpisodeRecord {
    /// Positions visited, starting with the initial one.
    pub fn trajectory(&self) -> Vec<(usize, usize)> {
        self.start_position
            .into_iter()
            .chain(self.steps.iter().filter_map(|s| s.position))
            .collect()
    }
}

enum Actor {
    Scripted(super::InertiaModel),
    Chat(ChatClient),
}

/// Runs one episode to termination.
pub fn run_episode(
    spec: &EnvSpec,
    policy: PolicyConfig,
    agent: &AgentBinding,
    agent_seed: u64,
    options: &EpisodeOptions,
) -> Result<EpisodeRecord, AgentError> {
    let actor = match agent {
        AgentBinding::Scripted(m) => Actor::Scripted(m.validated()?),
        AgentBinding::ChatEndpoint(e) => Actor::Chat(ChatClient::new(e.clone())?),
    };
    let summarizer: Option<Arc<dyn Summarizer>> = match (&options.summarizer, &actor) {
        _ if !policy.is_summary() => None,
        (Some(s), _) => Some(s.clone()),
        (None, Actor::Scripted(_)) => Some(Arc::new(TruncatingSummarizer::default())),
        (None, Actor::Chat(c)) => Some(Arc::new(ChatSummarizer::new(c.clone()))),
    };
    let policy_err = |e: PolicyError| match (&actor, e) {
        (Actor::Chat(_), PolicyError::Summarizer(msg)) => AgentError::Transport(msg),
        (_, e) => AgentError::Policy(e),
    };

    let mut env = spec.build()?;
    let mut conv = Conversation::new(env.system_prompt(), env.goal());
    let mut state = PolicyState::default();
    let init_rounds = options.init.as_ref().map_or(0, |c| c.len());
    for round in options.init.iter().flat_map(|c| c.rounds.iter()) {
        conv = conv.append_round(round.observation(), round.action())?;
        state = policy
            .update_after_round(&state, conv.len(), &conv, summarizer.as_deref())
            .map_err(policy_err)?;
    }

    let mut rng = SeededRng::seed_from_u64(agent_seed);
    let start_position = env.position();
    let mut steps = Vec::new();
    let mut final_reward = 0.0;
    let mut termination = None;
    while !env.is_done() {
        let t = conv.len() + 1;
        let observation = env.observation().to_string();
        let visible = policy.visible_rounds(&state, t);
        let prompt = build_prompt(&conv, policy, &state, t, &observation, options.view)?;
        let (action, imitated) = match &actor {
            Actor::Scripted(model) => {
                let base = base_actions(&env, model.base);
                let d = scripted_act(&prompt, model, &base, &mut rng);
                (d.action, Some(d.imitated))
            }
            Actor::Chat(client) => (client.act(env.id(), &to_chat(&prompt))?, None),
        };
        let result = env.step(&action)?;
        let stored = if action.is_empty() { EMPTY_ACTION } else { action.as_str() };
        conv = conv.append_round(observation, stored)?;
        state = policy
            .update_after_round(&state, t, &conv, summarizer.as_deref())
            .map_err(policy_err)?;
        steps.push(StepEntry {
            turn: t,
            visible_rounds: visible.len(),
            action,
            imitated,
            reward: result.reward,
            position: env.position(),
        });
        if result.done {
            final_reward = result.reward;
            termination = result.termination;
        }
    }
    Ok(EpisodeRecord {
        env: spec.clone(),
        policy,
        agent: agent.to_string(),
        agent_seed,
        init_rounds,
        start_position,
        steps,
        final_reward,
        termination,
    })
}

/// Prompt for turn `t` under either view. Both views yield identical
/// message lists; the masked view exists to check that claim.
pub fn build_prompt(
    conv: &Conversation,
    policy: PolicyConfig,
    state: &PolicyState,
    t: usize,
    observation: &str,
    view: ContextView,
) -> Result<Vec<Message>, AgentError> {
    match view {
        ContextView::Trimmed => {
            let completed: BTreeSet<usize> = policy
                .visible_rounds(state, t)
                .into_iter()
                .filter(|&i| i < t)
                .collect();
            Ok(conv.assemble_prompt_with_summaries(&completed, &state.summaries, observation)?)
        }
        ContextView::Masked => {
            let mask = policy.build_mask(state, t);
            let mut out: Vec<Message> = conv
                .masked_messages(&mask[..t - 1], observation)
                .into_iter()
                .filter_map(|(m, visible)| visible.then_some(m))
                .collect();
            if !state.summaries.is_empty() {
                let block = crate::conversation::summary_block(&state.summaries);
                out.insert(2, Message::tagged(Tag::Summary, block));
            }
            Ok(out)
        }
    }
}

fn base_actions(env: &Environment, base: BasePolicy) -> BaseActions {
    let (hint, heuristic) = match base {
        BasePolicy::Random => (None, None),
        BasePolicy::Planner => match env.optimal_hint() {
            Some(h) => (Some(h), None),
            None => (None, env.heuristic_action()),
        },
        BasePolicy::Heuristic => (None, env.heuristic_action()),
    };
    BaseActions {
        hint,
        heuristic,
        space: env.action_space(),
    }
}

/// Re-executes the recorded actions on a fresh environment and reports
/// whether every reward, position and the termination reproduce exactly.
pub fn replay(record: &EpisodeRecord) -> Result<bool, AgentError> {
    let mut env = record.env.build()?;
    if env.position() != record.start_position {
        return Ok(false);
    }
    let mut termination = None;
    for entry in &record.steps {
        if env.is_done() {
            return Ok(false);
        }
        let r = env.step(&entry.action)?;
        if r.reward != entry.reward || env.position() != entry.position {
            return Ok(false);
        }
        termination = r.termination;
    }
    Ok(env.is_done() && termination == record.termination)
}

/// Grid of (environment, policy) cells evaluated over paired seeds.
#[derive(Clone)]
pub struct BatchConfig {
    pub envs: Vec<EnvSpec>,
    pub policies: Vec<PolicyConfig>,
    pub agent: AgentBinding,
    pub episodes: usize,
    /// Multiplier on each spec's step limit, in `(0, 2]`.
    pub step_mult: f64,
    pub seed: u64,
    pub jobs: usize,
    /// Keep each spec's own seed for every episode instead of deriving one.
    pub fixed_env_seed: bool,
    pub options: EpisodeOptions,
}

impl BatchConfig {
    pub fn new(envs: Vec<EnvSpec>, policies: Vec<PolicyConfig>, agent: AgentBinding) -> Self {
        Self {
            envs,
            policies,
            agent,
            episodes: 1,
            step_mult: 1.0,
            seed: 0,
            jobs: 1,
            fixed_env_seed: false,
            options: EpisodeOptions::default(),
        }
    }

    /// Spec and agent seed for episode `e`. Both depend only on the base seed
    /// and the episode index, so every policy sees the same environments and
    /// random streams.
    pub fn episode_seeds(&self, spec: &EnvSpec, e: usize) -> (EnvSpec, u64) {
        let env_seed = if self.fixed_env_seed {
            spec.seed
        } else {
            derive(self.seed, 1, e as u64)
        };
        let steps = scaled_steps(spec.max_steps, self.step_mult);
        (
            spec.clone().with_seed(env_seed).with_max_steps(steps),
            derive(self.seed, 2, e as u64),
        )
    }
}

/// `round(mult * max_steps)`, at least one step.
pub fn scaled_steps(max_steps: usize, mult: f64) -> usize {
    ((mult * max_steps as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCell {
    pub env: String,
    pub policy: PolicyConfig,
    /// Completed (non-aborted) episodes.
    pub episodes: usize,
    pub mean: f64,
    pub sem: f64,
    pub aborted: usize,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub cells: Vec<BatchCell>,
    /// Completed episode records per cell, in episode order.
    pub records: Vec<Vec<EpisodeRecord>>,
}

impl BatchResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["env", "policy", "episodes", "mean", "sem", "aborted"])?;
        for c in &self.cells {
            out.write_record([
                c.env.clone(),
                c.policy.to_string(),
                c.episodes.to_string(),
                format!("{:.6}", c.mean),
                format!("{:.6}", c.sem),
                c.aborted.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn cell(&self, env: &str, policy: PolicyConfig) -> Option<&BatchCell> {
        self.cells.iter().find(|c| c.env == env && c.policy == policy)
    }
}

/// Label used for an environment in result tables: the id plus any knobs.
pub fn env_label(spec: &EnvSpec) -> String {
    if spec.knobs.is_empty() {
        spec.id.to_string()
    } else {
        let knobs: Vec<String> = spec.knobs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}:{}", spec.id, knobs.join(","))
    }
}

/// Runs every cell on a pool of `jobs` workers. Results are assembled by
/// (cell, episode) index, never by completion order. Transport failures
/// abort only their episode; any other error fails the batch.
pub fn run_batch(cfg: &BatchConfig) -> Result<BatchResult, AgentError> {
    if !(cfg.step_mult > 0.0 && cfg.step_mult <= 2.0) {
        return Err(AgentError::Config("step multiplier must lie in (0, 2]".into()));
    }
    if cfg.jobs == 0 {
        return Err(AgentError::Config("jobs must be >= 1".into()));
    }
    let mut tasks = Vec::new();
    for (ei, spec) in cfg.envs.iter().enumerate() {
        for (pi, &policy) in cfg.policies.iter().enumerate() {
            for e in 0..cfg.episodes {
                tasks.push((ei, pi, policy, spec, e));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| AgentError::Config(e.to_string()))?;
    let outcomes: Vec<Result<EpisodeRecord, AgentError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(_, _, policy, spec, e)| {
                let (spec, agent_seed) = cfg.episode_seeds(spec, e);
                run_episode(&spec, policy, &cfg.agent, agent_seed, &cfg.options)
            })
            .collect()
    });

    let n_cells = cfg.envs.len() * cfg.policies.len();
    let mut records: Vec<Vec<EpisodeRecord>> = vec![Vec::new(); n_cells];
    let mut aborted = vec![0usize; n_cells];
    for (&(ei, pi, ..), outcome) in tasks.iter().zip(outcomes) {
        let cell = ei * cfg.policies.len() + pi;
        match outcome {
            Ok(r) => records[cell].push(r),
            Err(e) if e.is_transport() => aborted[cell] += 1,
            Err(e) => return Err(e),
        }
    }
    let mut cells = Vec::with_capacity(n_cells);
    for (ei, spec) in cfg.envs.iter().enumerate() {
        for (pi, &policy) in cfg.policies.iter().enumerate() {
            let cell = ei * cfg.policies.len() + pi;
            let rewards: Vec<f64> = records[cell].iter().map(|r| r.final_reward).collect();
            let stats = MeanSem::of(&rewards);
            cells.push(BatchCell {
                env: env_label(spec),
                policy,
                episodes: stats.n,
                mean: stats.mean,
                sem: stats.sem,
                aborted: aborted[cell],
            });
        }
    }
    Ok(BatchResult { cells, records })
}
