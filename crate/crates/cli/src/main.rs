mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use inertia_core::agent::{run_batch, AgentBinding, BatchConfig, ContextView, EpisodeOptions};
use inertia_core::attention::{AttentionRecord, DEFAULT_BAND};
use inertia_core::conversation::Conversation;
use inertia_core::cost::simulate_ops;
use inertia_core::cpl::{collect_pairs, export_dataset, CplConfig, DatasetHeader};
use inertia_core::env::EnvSpec;
use inertia_core::policy::PolicyConfig;
use inertia_core::suite::{rerun_manifest, run_suite, SuiteKind, SuiteSpec};

use config::Config;

#[derive(Parser)]
#[command(name = "inertia", version, about = "Context policies, text-game rollouts, preference data, attention metrics and prefill cost modeling")]
struct Cli {
    /// Base seed for environments and agents.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file, or directory for `suite`. Defaults to stdout where possible.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file; flags win on conflict.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes over an (environment, policy) grid and print a result table.
    Run(RunArgs),
    /// Collect preference pairs from dual-context rollouts.
    CplCollect(CplArgs),
    /// Category and diagonal attention ratios for attention record files.
    AttnReport(AttnArgs),
    /// Per-step prefill cost of a context policy.
    CostModel(CostArgs),
    /// Run a named experiment suite, or re-run one from its manifest.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Environment spec `<env>:<seed>[:knob=value,...]`; repeatable.
    #[arg(long = "env")]
    envs: Vec<String>,
    /// Policy spec (`long`, `window-W`, `clip-HtoL`, `sum-HtoL`); repeatable.
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// `scripted[:p_max=..,lambda=..,base=..]` or `chat:url=..,model=..`.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Multiplier on every step limit, in (0, 2].
    #[arg(long)]
    step_mult: Option<f64>,
    /// `trimmed` or `masked` prompt construction.
    #[arg(long)]
    view: Option<String>,
    /// Transcript whose rounds pre-seed every episode.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Write every episode record as JSON lines to this file.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct CplArgs {
    #[arg(long = "env")]
    envs: Vec<String>,
    #[arg(long)]
    agent: Option<String>,
    /// Short context size in rounds.
    #[arg(long)]
    chosen: Option<String>,
    /// Long context size in rounds, or `inf`.
    #[arg(long)]
    rejected: Option<String>,
    /// Minimum turn for a pair.
    #[arg(long)]
    k: Option<usize>,
    /// Target pairs per environment.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    per_episode: Option<usize>,
    #[arg(long)]
    max_episodes: Option<usize>,
    /// Keep pairs whose chosen and rejected actions coincide.
    #[arg(long)]
    no_dedup: bool,
}

#[derive(Args)]
struct AttnArgs {
    /// Record metadata file, or a directory of them.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Diagonal band radius.
    #[arg(long = "r")]
    band: Option<usize>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    turns: Option<usize>,
    /// `on` or `off`.
    #[arg(long)]
    reuse: Option<String>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite name.
    name: Option<String>,
    /// Re-run the suite recorded in this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Suite override `key=value`; repeatable.
    #[arg(long = "set")]
    set: Vec<String>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let jobs = cli
        .jobs
        .or(cfg.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = cli.out.clone().or(cfg.out.clone());
    match cli.command {
        Command::Run(a) => run(a, &cfg, seed, jobs, out.as_deref()),
        Command::CplCollect(a) => cpl_collect(a, &cfg, seed, jobs, out.as_deref()),
        Command::AttnReport(a) => attn_report(a, &cfg, out.as_deref()),
        Command::CostModel(a) => cost_model(a, &cfg, out.as_deref()),
        Command::Suite(a) => suite(a, &cfg, seed, jobs, out.as_deref()),
    }
}

/// Flag values if any were given, else the config list, else the default.
fn pick_list(flags: Vec<String>, config: &Option<Vec<String>>, default: &[&str]) -> Vec<String> {
    if !flags.is_empty() {
        flags
    } else if let Some(c) = config {
        c.clone()
    } else {
        default.iter().map(|s| s.to_string()).collect()
    }
}

fn parse_all<T: std::str::FromStr>(items: &[String], what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    items
        .iter()
        .map(|s| s.parse().with_context(|| format!("invalid {what} `{s}`")))
        .collect()
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(a: RunArgs, cfg: &Config, seed: u64, jobs: usize, out: Option<&Path>) -> Result<()> {
    let c = &cfg.run;
    let envs: Vec<EnvSpec> = parse_all(&pick_list(a.envs, &c.envs, &["maze:0"]), "environment")?;
    let policies: Vec<PolicyConfig> = parse_all(
        &pick_list(a.policies, &c.policies, &["long", "window-6", "clip-12to1"]),
        "policy",
    )?;
    let agent: AgentBinding = match a.agent.or(c.agent.clone()) {
        Some(s) => s.parse().with_context(|| format!("invalid agent `{s}`"))?,
        None => AgentBinding::default(),
    };
    let view = match a.view.or(c.view.clone()).as_deref() {
        None | Some("trimmed") => ContextView::Trimmed,
        Some("masked") => ContextView::Masked,
        Some(v) => bail!("unknown view `{v}` (expected trimmed or masked)"),
    };
    let init = match a.init.or(c.init.clone()) {
        Some(p) => {
            let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            Some(Conversation::read_transcript(BufReader::new(f))?)
        }
        None => None,
    };
    let mut batch = BatchConfig::new(envs, policies, agent);
    batch.episodes = a.episodes.or(c.episodes).unwrap_or(16);
    batch.step_mult = a.step_mult.or(c.step_mult).unwrap_or(1.0);
    batch.seed = seed;
    batch.jobs = jobs;
    batch.options = EpisodeOptions {
        init,
        view,
        summarizer: None,
    };
    let result = run_batch(&batch)?;
    result.write_csv(writer(out)?)?;
    if let Some(path) = a.records.or(c.records.clone()) {
        let mut w = writer(Some(&path))?;
        for rec in result.records.iter().flatten() {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let aborted: usize = result.cells.iter().map(|c| c.aborted).sum();
    if aborted > 0 {
        eprintln!("warning: {aborted} episode(s) aborted on transport errors");
    }
    Ok(())
}

fn cpl_collect(a: CplArgs, cfg: &Config, seed: u64, jobs: usize, out: Option<&Path>) -> Result<()> {
    let c = &cfg.cpl_collect;
    let envs: Vec<EnvSpec> = parse_all(&pick_list(a.envs, &c.envs, &["maze:0"]), "environment")?;
    let agent: AgentBinding = match a.agent.or(c.agent.clone()) {
        Some(s) => s.parse().with_context(|| format!("invalid agent `{s}`"))?,
        None => AgentBinding::default(),
    };
    let defaults = CplConfig::default();
    let size = |flag: Option<String>, conf: &Option<String>, default| -> Result<_> {
        match flag.or(conf.clone()) {
            Some(s) => Ok(s.parse()?),
            None => Ok(default),
        }
    };
    let config = CplConfig {
        chosen_rounds: size(a.chosen, &c.chosen, defaults.chosen_rounds)?,
        rejected_rounds: size(a.rejected, &c.rejected, defaults.rejected_rounds)?,
        k: a.k.or(c.k).unwrap_or(defaults.k),
        dedup: if a.no_dedup { false } else { c.dedup.unwrap_or(true) },
        target_pairs: a.pairs.or(c.pairs).unwrap_or(defaults.target_pairs),
        max_pairs_per_episode: a.per_episode.or(c.per_episode).unwrap_or(defaults.max_pairs_per_episode),
        max_episodes: a.max_episodes.or(c.max_episodes).unwrap_or(defaults.max_episodes),
    }
    .validated()?;
    let pairs = collect_pairs(&envs, &agent, &config, seed, jobs)?;
    let header = DatasetHeader::new(&config, &envs, &agent, seed);
    export_dataset(&header, &pairs, writer(out)?)?;
    eprintln!("{} pair(s) written", pairs.len());
    Ok(())
}

fn attn_report(a: AttnArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let c = &cfg.attn_report;
    let input = a
        .input
        .or(c.input.clone())
        .context("attn-report needs --in <record.json | directory>")?;
    let band = a.band.or(c.band).unwrap_or(DEFAULT_BAND);
    let files = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(&input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![input]
    };
    if files.is_empty() {
        bail!("no .json record files found");
    }
    let mut w = writer(out)?;
    writeln!(
        w,
        "record,n_output_tokens,sink,system,user,prev_assistant,cur_assistant,diagonal_ratio"
    )?;
    for path in files {
        let (rec, warnings) = AttentionRecord::read(&path)?;
        for warning in warnings {
            eprintln!("{}: {warning}", path.display());
        }
        let r = rec.report(band)?;
        let m = r.mass;
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        writeln!(
            w,
            "{name},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.n_output_tokens, m.sink, m.system, m.user, m.prev_assistant, m.cur_assistant, r.diagonal_ratio
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cost_model(a: CostArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let c = &cfg.cost_model;
    let policy: PolicyConfig = a
        .policy
        .or(c.policy.clone())
        .unwrap_or_else(|| "clip-12to1".into())
        .parse()?;
    let turns = a.turns.or(c.turns).unwrap_or(120);
    let reuse = match a.reuse.or(c.reuse.clone()).as_deref() {
        None | Some("on") => true,
        Some("off") => false,
        Some(v) => bail!("--reuse must be on or off, got `{v}`"),
    };
    let report = simulate_ops(policy, turns, reuse);
    report.write_csv(writer(out)?)?;
    eprintln!("{policy}: total {} over {turns} steps, average {:.4}", report.total(), report.average());
    Ok(())
}

fn suite(a: SuiteArgs, cfg: &Config, seed: u64, jobs: usize, out: Option<&Path>) -> Result<()> {
    let c = &cfg.suite;
    if let Some(manifest) = a.manifest.or(c.manifest.clone()) {
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| manifest.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        let m = rerun_manifest(&manifest, jobs, &dir)?;
        eprintln!("{} re-run into {} ({} files)", m.spec.suite, dir.display(), m.files.len());
        return Ok(());
    }
    let name = a
        .name
        .or(c.name.clone())
        .context("suite needs a name or --manifest")?;
    let kind: SuiteKind = name.parse()?;
    let mut overrides: BTreeMap<String, String> = c.set.clone();
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got `{kv}`"))?;
        overrides.insert(k.trim().to_string(), v.trim().to_string());
    }
    let spec = SuiteSpec {
        suite: kind,
        overrides,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(kind.name()));
    let m = run_suite(&spec, seed, jobs, &dir)?;
    eprintln!("{} written to {} ({} files)", kind, dir.display(), m.files.len());
    Ok(())
}
