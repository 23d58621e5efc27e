//! Named experiment suites that write CSV tables and a manifest.
//!
//! Every suite is a pure function of its name, seed and overrides, so the
//! manifest written next to the outputs is enough to regenerate them byte for
//! byte. Worker count never affects output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    run_batch, AgentBinding, AgentError, BatchConfig, BatchResult, EpisodeOptions, InertiaModel,
};
use crate::attention::{synthetic_record, trend_curve, AttentionError, SyntheticShape, DEFAULT_BAND};
use crate::conversation::{Conversation, ConversationError};
use crate::cost::{simulate_ops, speedup, speedup_closed_form, CostError};
use crate::env::{EnvError, EnvId, EnvSpec};
use crate::policy::PolicyConfig;
use crate::rng::{derive, SeededRng};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("invalid override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    MainGrid,
    #[serde(rename = "ablation_H")]
    AblationH,
    #[serde(rename = "ablation_L")]
    AblationL,
    ClipVsWindow,
    Scaling,
    InitContextCaseStudy,
    AttentionTrend,
    CostBench,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 8] = [
        SuiteKind::MainGrid,
        SuiteKind::AblationH,
        SuiteKind::AblationL,
        SuiteKind::ClipVsWindow,
        SuiteKind::Scaling,
        SuiteKind::InitContextCaseStudy,
        SuiteKind::AttentionTrend,
        SuiteKind::CostBench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::MainGrid => "main_grid",
            SuiteKind::AblationH => "ablation_H",
            SuiteKind::AblationL => "ablation_L",
            SuiteKind::ClipVsWindow => "clip_vs_window",
            SuiteKind::Scaling => "scaling",
            SuiteKind::InitContextCaseStudy => "init_context_case_study",
            SuiteKind::AttentionTrend => "attention_trend",
            SuiteKind::CostBench => "cost_bench",
        }
    }

    /// Override keys this suite accepts.
    fn keys(self) -> &'static [&'static str] {
        match self {
            SuiteKind::MainGrid => &["envs", "policies", "agent", "episodes", "step_mult", "p_max"],
            SuiteKind::AblationH => &["envs", "values", "retain", "agent", "episodes", "p_max"],
            SuiteKind::AblationL => &["envs", "values", "agent", "episodes", "p_max"],
            SuiteKind::ClipVsWindow => &["envs", "values", "agent", "episodes", "p_max"],
            SuiteKind::Scaling => &["envs", "policies", "multipliers", "agent", "episodes", "p_max"],
            SuiteKind::InitContextCaseStudy => &["maze_seed", "policies", "agent", "episodes", "p_max"],
            SuiteKind::AttentionTrend => &["turns", "p_max", "lambda", "band"],
            SuiteKind::CostBench => &["policies", "turns", "max_w"],
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = SuiteError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().replace('-', "_").to_ascii_lowercase();
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| SuiteError::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub suite: SuiteKind,
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
}

impl SuiteSpec {
    pub fn new(suite: SuiteKind) -> Self {
        Self {
            suite,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, SuiteError>
    where
        T::Err: fmt::Display,
    {
        match self.overrides.get(key) {
            None => Ok(default),
            Some(v) => v.trim().parse().map_err(|e: T::Err| bad(key, e)),
        }
    }

    fn list<T: FromStr>(&self, key: &str, sep: char, default: Vec<T>) -> Result<Vec<T>, SuiteError>
    where
        T::Err: fmt::Display,
    {
        match self.overrides.get(key) {
            None => Ok(default),
            Some(v) => {
                let items: Vec<T> = v
                    .split(sep)
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|e: T::Err| bad(key, e)))
                    .collect::<Result<_, _>>()?;
                if items.is_empty() {
                    return Err(bad(key, "list is empty"));
                }
                Ok(items)
            }
        }
    }

    fn pairs(&self, key: &str, default: Vec<(usize, usize)>) -> Result<Vec<(usize, usize)>, SuiteError> {
        let raw: Vec<String> = self.list(key, ',', Vec::new())?;
        if raw.is_empty() {
            return Ok(default);
        }
        raw.iter()
            .map(|p| {
                let (a, b) = p.split_once(':').ok_or_else(|| bad(key, "expected a:b"))?;
                Ok((
                    a.trim().parse().map_err(|e| bad(key, e))?,
                    b.trim().parse().map_err(|e| bad(key, e))?,
                ))
            })
            .collect()
    }

    fn envs(&self, default: Vec<EnvId>) -> Result<Vec<EnvSpec>, SuiteError> {
        let default = default.into_iter().map(|id| EnvSpec::new(id, 0)).collect();
        self.list("envs", ';', default)
    }

    fn policies(&self, default: &[&str]) -> Result<Vec<PolicyConfig>, SuiteError> {
        let default = default.iter().map(|p| p.parse().expect("built-in policy")).collect();
        self.list("policies", ',', default)
    }

    /// Agent override, with `p_max` applied on top for scripted agents.
    fn agent(&self, default_p_max: f64) -> Result<AgentBinding, SuiteError> {
        let mut agent = match self.overrides.get("agent") {
            Some(a) => a.parse().map_err(|e| bad("agent", e))?,
            None => AgentBinding::Scripted(InertiaModel {
                p_max: default_p_max,
                ..InertiaModel::default()
            }),
        };
        if let (AgentBinding::Scripted(m), Some(_)) = (&mut agent, self.overrides.get("p_max")) {
            m.p_max = self.get("p_max", m.p_max)?;
            *m = m.validated()?;
        }
        Ok(agent)
    }

    fn check_keys(&self) -> Result<(), SuiteError> {
        let allowed = self.suite.keys();
        for key in self.overrides.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(bad(
                    key,
                    format!("not used by {} (accepted: {})", self.suite, allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

fn bad(key: &str, reason: impl fmt::Display) -> SuiteError {
    SuiteError::Override {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub spec: SuiteSpec,
    pub seed: u64,
    /// Output files relative to the output directory, sorted.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, SuiteError> {
        let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Collects named outputs in memory before anything touches the disk.
#[derive(Default)]
struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), SuiteError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        self.files.insert(name.to_string(), bytes);
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Runs a suite and writes its files plus `manifest.json` into `out_dir`.
/// Returns the manifest.
pub fn run_suite(spec: &SuiteSpec, seed: u64, jobs: usize, out_dir: &Path) -> Result<Manifest, SuiteError> {
    spec.check_keys()?;
    let mut out = Outputs::default();
    match spec.suite {
        SuiteKind::MainGrid => main_grid(spec, seed, jobs, &mut out)?,
        SuiteKind::AblationH => ablation_h(spec, seed, jobs, &mut out)?,
        SuiteKind::AblationL => ablation_l(spec, seed, jobs, &mut out)?,
        SuiteKind::ClipVsWindow => clip_vs_window(spec, seed, jobs, &mut out)?,
        SuiteKind::Scaling => scaling(spec, seed, jobs, &mut out)?,
        SuiteKind::InitContextCaseStudy => case_study(spec, seed, jobs, &mut out)?,
        SuiteKind::AttentionTrend => attention_trend(spec, seed, &mut out)?,
        SuiteKind::CostBench => cost_bench(spec, &mut out)?,
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SuiteError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    for (name, bytes) in &out.files {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
    }
    let manifest = Manifest {
        format: "inertia-suite".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        seed,
        files: out.files.keys().cloned().collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}

/// Re-runs the suite recorded in a manifest into `out_dir`.
pub fn rerun_manifest(manifest_path: &Path, jobs: usize, out_dir: &Path) -> Result<Manifest, SuiteError> {
    let m = Manifest::read(manifest_path)?;
    run_suite(&m.spec, m.seed, jobs, out_dir)
}

fn batch(
    envs: Vec<EnvSpec>,
    policies: Vec<PolicyConfig>,
    agent: AgentBinding,
    episodes: usize,
    seed: u64,
    jobs: usize,
) -> BatchConfig {
    let mut cfg = BatchConfig::new(envs, policies, agent);
    cfg.episodes = episodes;
    cfg.seed = seed;
    cfg.jobs = jobs;
    cfg
}

fn results_csv(out: &mut Outputs, name: &str, res: &BatchResult) -> Result<(), SuiteError> {
    let mut buf = Vec::new();
    res.write_csv(&mut buf)?;
    out.raw(name, buf);
    Ok(())
}

/// Wide table: one row per policy (with leading label columns), one column
/// per environment, plus the row average.
fn pivot(
    res: &BatchResult,
    envs: &[EnvSpec],
    rows: &[(Vec<String>, PolicyConfig)],
) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(labels, policy)| {
            let means: Vec<f64> = envs
                .iter()
                .map(|e| {
                    res.cell(&crate::agent::env_label(e), *policy)
                        .map_or(f64::NAN, |c| c.mean)
                })
                .collect();
            let avg = means.iter().sum::<f64>() / means.len() as f64;
            labels
                .iter()
                .cloned()
                .chain(std::iter::once(policy.to_string()))
                .chain(means.iter().map(|&m| f6(m)))
                .chain(std::iter::once(f6(avg)))
                .collect()
        })
        .collect()
}

fn pivot_header(labels: &[&str], envs: &[EnvSpec]) -> Vec<String> {
    labels
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("policy".to_string()))
        .chain(envs.iter().map(crate::agent::env_label))
        .chain(std::iter::once("average".to_string()))
        .collect()
}

fn write_pivot(
    out: &mut Outputs,
    name: &str,
    labels: &[&str],
    envs: &[EnvSpec],
    rows: Vec<Vec<String>>,
) -> Result<(), SuiteError> {
    let header = pivot_header(labels, envs);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &header, rows)
}

fn main_grid(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let envs = spec.envs(EnvId::ALL.to_vec())?;
    let policies = spec.policies(&["long", "window-6", "clip-12to1", "sum-12to1"])?;
    let mut cfg = batch(envs.clone(), policies.clone(), spec.agent(0.9)?, spec.get("episodes", 32)?, seed, jobs);
    cfg.step_mult = spec.get("step_mult", 1.0)?;
    let res = run_batch(&cfg)?;
    results_csv(out, "results.csv", &res)?;
    let rows: Vec<(Vec<String>, PolicyConfig)> = policies.iter().map(|&p| (vec![], p)).collect();
    write_pivot(out, "main_grid.csv", &[], &envs, pivot(&res, &envs, &rows))
}

fn ablation_h(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let envs = spec.envs(vec![EnvId::Maze, EnvId::FrozenLake])?;
    let hs: Vec<usize> = spec.list("values", ',', vec![2, 3, 6, 12])?;
    let retain: usize = spec.get("retain", 1)?;
    let rows = hs
        .iter()
        .map(|&h| {
            let p = PolicyConfig::clip(h, retain).map_err(|e| bad("values", e))?;
            Ok((vec![h.to_string(), retain.to_string()], p))
        })
        .collect::<Result<Vec<_>, SuiteError>>()?;
    grid_suite(spec, seed, jobs, out, envs, rows, "ablation_H.csv", &["H", "L"])
}

fn ablation_l(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let envs = spec.envs(vec![EnvId::Maze, EnvId::FrozenLake])?;
    let lh = spec.pairs("values", vec![(1, 12), (3, 12), (6, 12), (11, 12)])?;
    let rows = lh
        .iter()
        .map(|&(l, h)| {
            let p = PolicyConfig::clip(h, l).map_err(|e| bad("values", e))?;
            Ok((vec![l.to_string(), h.to_string()], p))
        })
        .collect::<Result<Vec<_>, SuiteError>>()?;
    grid_suite(spec, seed, jobs, out, envs, rows, "ablation_L.csv", &["L", "H"])
}

/// Clip with `L = 1, H = S - 1` against Window `W` for each `(S, W)`, where
/// `S = L + H`.
fn clip_vs_window(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let envs = spec.envs(vec![EnvId::Maze, EnvId::FrozenLake])?;
    let sw = spec.pairs("values", vec![(7, 3), (11, 5), (13, 6), (15, 7)])?;
    let mut rows = Vec::new();
    for &(s, w) in &sw {
        let labels = vec![s.to_string(), w.to_string()];
        let clip = s
            .checked_sub(1)
            .ok_or_else(|| bad("values", "L+H must be >= 3"))
            .and_then(|h| PolicyConfig::clip(h, 1).map_err(|e| bad("values", e)))?;
        let window = PolicyConfig::window(w).map_err(|e| bad("values", e))?;
        rows.push((labels.clone(), clip));
        rows.push((labels, window));
    }
    grid_suite(spec, seed, jobs, out, envs, rows, "clip_vs_window.csv", &["L_plus_H", "W"])
}

#[allow(clippy::too_many_arguments)]
fn grid_suite(
    spec: &SuiteSpec,
    seed: u64,
    jobs: usize,
    out: &mut Outputs,
    envs: Vec<EnvSpec>,
    rows: Vec<(Vec<String>, PolicyConfig)>,
    name: &str,
    labels: &[&str],
) -> Result<(), SuiteError> {
    let mut policies: Vec<PolicyConfig> = rows.iter().map(|(_, p)| *p).collect();
    policies.dedup();
    let cfg = batch(envs.clone(), policies, spec.agent(0.9)?, spec.get("episodes", 64)?, seed, jobs);
    let res = run_batch(&cfg)?;
    results_csv(out, "results.csv", &res)?;
    write_pivot(out, name, labels, &envs, pivot(&res, &envs, &rows))
}

fn scaling(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let envs = spec.envs(vec![EnvId::Maze])?;
    let policies = spec.policies(&["long", "window-6", "clip-12to1"])?;
    let mults: Vec<f64> = spec.list("multipliers", ',', vec![0.25, 0.5, 1.0, 1.5])?;
    let episodes = spec.get("episodes", 64)?;
    let agent = spec.agent(0.9)?;
    let mut arms = vec![("agent", agent.clone())];
    if let AgentBinding::Scripted(m) = agent {
        arms.push((
            "control",
            AgentBinding::Scripted(InertiaModel { p_max: 0.0, ..m }),
        ));
    }
    let mut rows = Vec::new();
    for (arm, agent) in arms {
        for &mult in &mults {
            let mut cfg = batch(envs.clone(), policies.clone(), agent.clone(), episodes, seed, jobs);
            cfg.step_mult = mult;
            let res = run_batch(&cfg)?;
            for (spec_env, cells) in envs.iter().zip(res.cells.chunks(policies.len())) {
                for c in cells {
                    rows.push(vec![
                        arm.to_string(),
                        mult.to_string(),
                        crate::agent::scaled_steps(spec_env.max_steps, mult).to_string(),
                        c.env.clone(),
                        c.policy.to_string(),
                        c.episodes.to_string(),
                        f6(c.mean),
                        f6(c.sem),
                        c.aborted.to_string(),
                    ]);
                }
            }
        }
    }
    out.csv(
        "scaling.csv",
        &["arm", "multiplier", "max_steps", "env", "policy", "episodes", "mean", "sem", "aborted"],
        rows,
    )
}

/// Initial transcripts for the case study on a fixed maze: four optimal
/// moves (good) or a back-and-forth oscillation (bad). Observations are
/// taken from a copy of the environment stepped along the transcript.
pub fn init_transcripts(maze: &EnvSpec) -> Result<(Conversation, Conversation), SuiteError> {
    let fresh = maze.build()?;
    let record = |actions: &mut dyn FnMut(&crate::env::Environment) -> Option<String>| {
        let mut env = fresh.clone();
        let mut conv = Conversation::new(env.system_prompt(), env.goal());
        for _ in 0..4 {
            if env.is_done() {
                break;
            }
            let Some(a) = actions(&env) else { break };
            let obs = env.observation().to_string();
            env.step(&a)?;
            conv = conv.append_round(obs, a)?;
        }
        Ok::<_, SuiteError>(conv)
    };
    let good = record(&mut |env| env.optimal_hint())?;
    let start = fresh.position();
    let open = ["up", "down", "left", "right"].into_iter().find(|d| {
        let mut probe = fresh.clone();
        probe.step(d).is_ok() && probe.position() != start
    });
    let back = |d: &str| match d {
        "up" => "down",
        "down" => "up",
        "left" => "right",
        _ => "left",
    };
    let mut turn = 0;
    let bad = record(&mut |_| {
        let d = open?;
        turn += 1;
        Some(if turn % 2 == 1 { d } else { back(d) }.to_string())
    })?;
    Ok((good, bad))
}

fn case_study(spec: &SuiteSpec, seed: u64, jobs: usize, out: &mut Outputs) -> Result<(), SuiteError> {
    let maze = EnvSpec::new(EnvId::Maze, spec.get("maze_seed", 0)?);
    let policies = spec.policies(&["clip-12to1", "window-6", "long"])?;
    let episodes = spec.get("episodes", 64)?;
    let agent = spec.agent(0.9)?;
    let (good, bad) = init_transcripts(&maze)?;
    let env = maze.build()?;
    let (rows_n, cols_n) = maze_dims(&env);
    let mut summary = Vec::new();
    let mut heat = Vec::new();
    for (label, init) in [("good", &good), ("bad", &bad)] {
        let mut buf = Vec::new();
        init.write_transcript(&mut buf)?;
        out.raw(&format!("{label}_init.jsonl"), buf);
        let mut cfg = batch(vec![maze.clone()], policies.clone(), agent.clone(), episodes, seed, jobs);
        cfg.fixed_env_seed = true;
        cfg.options = EpisodeOptions {
            init: Some(init.clone()),
            ..EpisodeOptions::default()
        };
        let res = run_batch(&cfg)?;
        for (cell, records) in res.cells.iter().zip(&res.records) {
            summary.push(vec![
                label.to_string(),
                cell.policy.to_string(),
                cell.episodes.to_string(),
                f6(cell.mean),
                f6(cell.sem),
                cell.aborted.to_string(),
            ]);
            let mut visits = vec![0u64; rows_n * cols_n];
            for r in records {
                for (row, col) in r.trajectory() {
                    visits[row * cols_n + col] += 1;
                }
            }
            let total: u64 = visits.iter().sum();
            for (i, &v) in visits.iter().enumerate() {
                let pct = if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 };
                heat.push(vec![
                    label.to_string(),
                    cell.policy.to_string(),
                    (i / cols_n).to_string(),
                    (i % cols_n).to_string(),
                    v.to_string(),
                    f6(pct),
                ]);
            }
        }
    }
    out.csv("case_study.csv", &["init", "policy", "episodes", "mean", "sem", "aborted"], summary)?;
    out.csv("heatmap.csv", &["init", "policy", "row", "col", "visits", "percent"], heat)
}

fn maze_dims(env: &crate::env::Environment) -> (usize, usize) {
    let spec = env.spec();
    let size = |k: &str| spec.knobs.get(k).and_then(|v| v.parse().ok());
    let both = size("size").unwrap_or(10);
    (size("rows").unwrap_or(both), size("cols").unwrap_or(both))
}

fn attention_trend(spec: &SuiteSpec, seed: u64, out: &mut Outputs) -> Result<(), SuiteError> {
    let turns: usize = spec.get("turns", 12)?;
    let model = InertiaModel {
        p_max: spec.get("p_max", 0.9)?,
        lambda: spec.get("lambda", 0.3)?,
        ..InertiaModel::default()
    }
    .validated()?;
    let band: usize = spec.get("band", DEFAULT_BAND)?;
    let mut rng = SeededRng::seed_from_u64(derive(seed, 5, 0));
    let records: Vec<(usize, _)> = (1..=turns)
        .map(|t| {
            let shape = SyntheticShape {
                previous_rounds: t - 1,
                ..SyntheticShape::default()
            };
            (t, synthetic_record(shape, model.imitation_probability(t - 1), &mut rng))
        })
        .collect();
    let curve = trend_curve(&records, band)?;
    let rows = curve
        .iter()
        .map(|p| {
            let m = &p.report.mass;
            vec![
                p.turn.to_string(),
                f6(m.sink),
                f6(m.system),
                f6(m.user),
                f6(m.prev_assistant),
                f6(m.cur_assistant),
                f6(p.report.diagonal_ratio),
                p.report.n_output_tokens.to_string(),
            ]
        })
        .collect();
    out.csv(
        "attention_trend.csv",
        &["turn", "sink", "system", "user", "prev_assistant", "cur_assistant", "diagonal_ratio", "n_output_tokens"],
        rows,
    )
}

fn cost_bench(spec: &SuiteSpec, out: &mut Outputs) -> Result<(), SuiteError> {
    let policies = spec.policies(&["long", "window-6", "clip-12to1", "clip-12to0", "sum-12to1"])?;
    let turns: usize = spec.get("turns", 120)?;
    let max_w: usize = spec.get("max_w", 16)?;
    let mut summary = Vec::new();
    let mut series = Vec::new();
    for &policy in &policies {
        for reuse in [true, false] {
            let report = simulate_ops(policy, turns, reuse);
            let reuse_s = if reuse { "on" } else { "off" };
            summary.push(vec![
                policy.to_string(),
                reuse_s.to_string(),
                turns.to_string(),
                report.total().to_string(),
                f6(report.average()),
            ]);
            let mut cumulative = 0;
            for (i, &c) in report.costs.iter().enumerate() {
                cumulative += c;
                series.push(vec![
                    policy.to_string(),
                    reuse_s.to_string(),
                    (i + 1).to_string(),
                    c.to_string(),
                    cumulative.to_string(),
                ]);
            }
        }
    }
    out.csv("cost_bench.csv", &["policy", "reuse", "turns", "total", "average"], summary)?;
    out.csv("cost_series.csv", &["policy", "reuse", "step", "cost", "cumulative"], series)?;
    let speed = (1..=max_w.max(1))
        .map(|w| Ok(vec![w.to_string(), f6(speedup(w)?), f6(speedup_closed_form(w))]))
        .collect::<Result<Vec<_>, SuiteError>>()?;
    out.csv("speedup.csv", &["W", "exact", "closed_form"], speed)
}
