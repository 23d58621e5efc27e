//! Acceptance checks. Each test prints one `PASS`/`FAIL` line to stderr
//! (outside the test harness capture) and then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use inertia_core::agent::{
    build_prompt, run_batch, scaled_steps, AgentBinding, BasePolicy, BatchConfig, BatchResult,
    ContextView,
};
use inertia_core::conversation::{to_chat, Conversation};
use inertia_core::cost::{clip_cycle_average, simulate_ops, speedup, speedup_closed_form};
use inertia_core::cpl::{
    collect_env, export_dataset, read_dataset, ContextSize, CplConfig, DatasetHeader,
};
use inertia_core::env::game2048::merge_line;
use inertia_core::env::hangman::Hangman;
use inertia_core::env::rush_hour::RushHour;
use inertia_core::env::{EnvId, EnvSpec, Environment, Game};
use inertia_core::policy::{PolicyConfig, PolicyState, TruncatingSummarizer};
use inertia_core::rng::SeededRng;
use inertia_core::stats::MeanSem;
use inertia_core::suite::{run_suite, SuiteKind, SuiteSpec};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

fn report(name: &str, pass: bool, elapsed: Duration, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{status} {name} ({:.2}s): {detail}",
        elapsed.as_secs_f64()
    );
    assert!(pass, "{name}: {detail}");
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

#[test]
fn cost_closed_form() {
    let start = Instant::now();
    let mut formula_mismatches = Vec::new();
    for w in 2..=64 {
        let exact = speedup(w).unwrap();
        if (exact - speedup_closed_form(w)).abs() > 1e-9 {
            formula_mismatches.push(w);
        }
    }
    let mut sim_mismatches = 0;
    for h in 2..=64usize {
        for l in 0..h {
            let cycle = h - l;
            let warmup = h - 1;
            let sim = simulate_ops(PolicyConfig::clip(h, l).unwrap(), warmup + 10 * cycle, true);
            let (num, den) = clip_cycle_average(l, h).unwrap();
            let steady: u64 = sim.costs[warmup..].iter().sum();
            // Average over the steady cycles equals num / den exactly.
            if steady * den != 10 * num * cycle as u64 {
                sim_mismatches += 1;
            }
        }
    }
    let s6 = speedup(6).unwrap();
    let near_644 = (s6 - 6.44).abs() < 0.01;
    let elapsed = start.elapsed();
    let pass = formula_mismatches.is_empty()
        && sim_mismatches == 0
        && near_644
        && elapsed < Duration::from_secs(1);
    report(
        "cost closed form",
        pass,
        elapsed,
        format!(
            "speedup vs 2W²(2W-1)/(2+(2W-1)²): {} of 63 W values differ beyond 1e-9; \
             simulator vs cycle average: {sim_mismatches} mismatches over all L<H<=64; \
             speedup(6) = {s6:.6} (closed form {:.6})",
            formula_mismatches.len(),
            speedup_closed_form(6)
        ),
    );
}

/// Action sequence of a mock agent whose choice hashes the whole prompt.
fn mock_actions(mut env: Environment, policy: PolicyConfig, view: ContextView) -> Vec<String> {
    let summarizer = TruncatingSummarizer::default();
    let mut conv = Conversation::new(env.system_prompt(), env.goal());
    let mut state = PolicyState::default();
    let mut actions = Vec::new();
    while !env.is_done() {
        let t = conv.len() + 1;
        let observation = env.observation().to_string();
        let prompt = build_prompt(&conv, policy, &state, t, &observation, view).unwrap();
        let space = env.action_space();
        let h = common::fnv(prompt.iter().flat_map(|m| [m.role.as_str(), m.content.as_str()]));
        let action = space[(h % space.len() as u64) as usize].clone();
        env.step(&action).unwrap();
        conv = conv.append_round(observation, action.clone()).unwrap();
        state = policy
            .update_after_round(&state, t, &conv, Some(&summarizer))
            .unwrap();
        actions.push(action);
    }
    actions
}

fn random_policy<R: Rng>(rng: &mut R) -> PolicyConfig {
    let h = rng.gen_range(2..16);
    let l = rng.gen_range(0..h);
    match rng.gen_range(0..4) {
        0 => PolicyConfig::Long,
        1 => PolicyConfig::window(rng.gen_range(1..10)).unwrap(),
        2 => PolicyConfig::clip(h, l).unwrap(),
        _ => PolicyConfig::summary(h, l).unwrap(),
    }
}

#[test]
fn mask_trim_equivalence() {
    let start = Instant::now();
    let mut rng = SeededRng::seed_from_u64(2024);
    let triples: Vec<(EnvSpec, PolicyConfig)> = (0..200)
        .map(|_| {
            let id = EnvId::ALL[rng.gen_range(0..EnvId::ALL.len())];
            let spec = EnvSpec::new(id, rng.gen());
            (spec, random_policy(&mut rng))
        })
        .collect();
    let results: Vec<(bool, usize)> = triples
        .par_iter()
        .map(|(spec, policy)| {
            let env = spec.build().unwrap();
            let trimmed = mock_actions(env.clone(), *policy, ContextView::Trimmed);
            let masked = mock_actions(env, *policy, ContextView::Masked);
            (trimmed == masked, trimmed.len())
        })
        .collect();
    let mismatches = results.iter().filter(|(same, _)| !same).count();
    let steps: usize = results.iter().map(|(_, n)| n).sum();
    let elapsed = start.elapsed();
    report(
        "mask/trim equivalence",
        mismatches == 0 && elapsed < Duration::from_secs(60),
        elapsed,
        format!("{mismatches} mismatching episodes of 200 ({steps} steps)"),
    );
}

fn drive(policy: PolicyConfig, turns: usize) -> Vec<BTreeSet<usize>> {
    let mut state = PolicyState::default();
    let conv = (1..=turns).fold(Conversation::new("s", "g"), |c, i| {
        c.append_round(format!("o{i}"), format!("a{i}")).unwrap()
    });
    (1..=turns)
        .map(|t| {
            let visible = policy.visible_rounds(&state, t);
            state = policy.update_after_round(&state, t, &conv, None).unwrap();
            visible
        })
        .collect()
}

#[test]
fn clip_cycle_and_window_degeneracy() {
    let start = Instant::now();
    let mut rng = SeededRng::seed_from_u64(7);
    let mut cycle_failures = Vec::new();
    for _ in 0..50 {
        let h = rng.gen_range(2..40);
        let l = rng.gen_range(0..h);
        let visible = drive(PolicyConfig::clip(h, l).unwrap(), 200);
        // The current round is visible, so an L = 0 clearing shows one round.
        let cycle: Vec<usize> = (l..h).map(|s| s.max(1)).collect();
        let sizes_ok = visible[h - 1..]
            .iter()
            .enumerate()
            .all(|(k, v)| v.len() == cycle[k % cycle.len()]);
        if !sizes_ok || visible != common::clip_visible_oracle(h, l, 200) {
            cycle_failures.push((l, h));
        }
    }
    let mut window_failures = Vec::new();
    for w in 1..=60 {
        if drive(PolicyConfig::window(w).unwrap(), 200) != drive(PolicyConfig::clip(w + 1, w).unwrap(), 200) {
            window_failures.push(w);
        }
    }
    let elapsed = start.elapsed();
    report(
        "clip cycle and window degeneracy",
        cycle_failures.is_empty() && window_failures.is_empty(),
        elapsed,
        format!(
            "visible sizes cycle L..H-1 (current round included) for {}/50 random (L,H); \
             Window(W) = Clip(W+1,W) on t<=200 for {}/60 W",
            50 - cycle_failures.len(),
            60 - window_failures.len()
        ),
    );
}

#[test]
fn metric_oracles() {
    let start = Instant::now();
    let mut rng = SeededRng::seed_from_u64(99);
    let mut max_err = 0.0f64;
    let mut full_band_mismatches = 0;
    for k in 0..100 {
        let rec = common::random_record(&mut rng, 128);
        let out = rec.output_span().unwrap();
        let mass = rec.category_ratios(out.clone()).unwrap();
        for (c, v) in common::category_oracle(&rec) {
            max_err = max_err.max((mass.get(c) - v).abs());
        }
        let r = k % 9;
        let diag = rec.diagonal_ratio(out.clone(), r).unwrap();
        max_err = max_err.max((diag - common::diagonal_oracle(&rec, r)).abs());
        if rec.diagonal_ratio(out, rec.n_tokens).unwrap() != mass.prev_assistant {
            full_band_mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        "metric oracles",
        max_err <= 1e-9 && full_band_mismatches == 0,
        elapsed,
        format!(
            "max deviation from brute force {max_err:.3e} over 100 records; \
             full-band diagonal differs from prev_assistant mass in {full_band_mismatches}"
        ),
    );
}

#[test]
fn environment_reward_oracles() {
    let start = Instant::now();
    let mut rng = SeededRng::seed_from_u64(31);

    let mut lake_bad = 0;
    let mut lake_n = 0;
    while lake_n < 1000 {
        let size = rng.gen_range(3..9);
        let spec = EnvSpec::new(EnvId::FrozenLake, rng.gen())
            .with_knob("size", size)
            .with_knob("holes", rng.gen_range(0..2 * size));
        let Ok(mut env) = spec.build() else { continue };
        let board = common::parse_lake(env.observation());
        let origin = board.player;
        for _ in 0..rng.gen_range(0..15) {
            if env.is_done() {
                break;
            }
            env.step(["[up]", "[down]", "[left]", "[right]"][rng.gen_range(0..4)]).unwrap();
        }
        let expected = common::lake_reward_oracle(&board, origin, env.position().unwrap());
        if (env.partial_reward() - expected).abs() > 1e-12 {
            lake_bad += 1;
        }
        lake_n += 1;
    }

    let mut hangman_bad = 0;
    for _ in 0..1000 {
        let word: String = (0..rng.gen_range(1..14))
            .map(|_| rng.gen_range(b'a'..=b'z') as char)
            .collect();
        let guessed: Vec<char> = (0..rng.gen_range(0..14))
            .map(|_| rng.gen_range(b'a'..=b'z') as char)
            .collect();
        let game = Hangman::with_word(&word, &guessed, 6);
        if (game.partial_reward() - common::hangman_oracle(&word, &guessed)).abs() > 1e-12 {
            hangman_bad += 1;
        }
    }

    let mut merge_bad = 0;
    for _ in 0..10_000 {
        let row: [u32; 4] = std::array::from_fn(|_| match rng.gen_range(0..12) {
            0..=3 => 0,
            k => 1 << (k - 3),
        });
        if merge_line(row) != common::merge_oracle(row) {
            merge_bad += 1;
        }
    }

    let cases: Vec<(&str, usize, u64)> = [("easy", 6, 20), ("medium", 12, 10), ("hard", 20, 5)]
        .iter()
        .flat_map(|&(d, depth, n)| (0..n).map(move |s| (d, depth, s)))
        .collect();
    let rush: Vec<bool> = cases
        .par_iter()
        .map(|&(difficulty, depth, seed)| {
            let spec = EnvSpec::new(EnvId::RushHour, seed).with_knob("difficulty", difficulty);
            let mut rng = SeededRng::seed_from_u64(seed);
            let puzzle = RushHour::generate(&spec, &mut rng).unwrap();
            puzzle.solve().is_some_and(|s| s.len() <= depth)
        })
        .collect();
    let rush_ok = rush.iter().filter(|&&ok| ok).count();

    let elapsed = start.elapsed();
    report(
        "environment reward oracles",
        lake_bad == 0
            && hangman_bad == 0
            && merge_bad == 0
            && rush_ok == rush.len()
            && elapsed < Duration::from_secs(120),
        elapsed,
        format!(
            "frozenlake {lake_bad}/1000 off, hangman {hangman_bad}/1000 off, \
             2048 merges {merge_bad}/10000 off, rushhour {rush_ok}/{} solvable within depth",
            rush.len()
        ),
    );
}

fn maze_batch(p_max: f64) -> BatchResult {
    let mut cfg = BatchConfig::new(
        vec![EnvSpec::new(EnvId::Maze, 0)],
        vec![
            PolicyConfig::clip(12, 1).unwrap(),
            PolicyConfig::window(6).unwrap(),
            PolicyConfig::Long,
        ],
        AgentBinding::scripted(p_max, 0.3, BasePolicy::Planner).unwrap(),
    );
    cfg.episodes = 200;
    cfg.seed = 2024;
    cfg.jobs = jobs();
    run_batch(&cfg).unwrap()
}

fn stats(res: &BatchResult) -> Vec<MeanSem> {
    res.cells.iter().map(|c| MeanSem { mean: c.mean, sem: c.sem, n: c.episodes }).collect()
}

#[test]
fn directional_inertia() {
    let start = Instant::now();
    let agent = stats(&maze_batch(0.9));
    let control = stats(&maze_batch(0.0));
    let (clip, window, long) = (&agent[0], &agent[1], &agent[2]);
    let ordered = clip.mean > window.mean && window.mean > long.mean;
    let separated = clip.ci95().0 > long.ci95().1;
    let spread = control.iter().map(|s| s.mean).fold(f64::MIN, f64::max)
        - control.iter().map(|s| s.mean).fold(f64::MAX, f64::min);
    let max_sem = control.iter().map(|s| s.sem).fold(0.0, f64::max);
    let control_ok = spread <= max_sem;
    let elapsed = start.elapsed();
    report(
        "directional inertia",
        ordered && separated && control_ok && elapsed < Duration::from_secs(300),
        elapsed,
        format!(
            "p_max=0.9: clip {:.3}±{:.3}, window {:.3}±{:.3}, long {:.3}±{:.3}; \
             control spread {spread:.3} vs max SEM {max_sem:.3}",
            clip.mean, clip.sem, window.mean, window.sem, long.mean, long.sem
        ),
    );
}

fn read_csv(path: &std::path::Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            header.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

#[test]
fn case_study_harness() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for p_max in [0.8, 0.9] {
        let dir = tempfile::tempdir().unwrap();
        let spec = SuiteSpec::new(SuiteKind::InitContextCaseStudy)
            .with("p_max", p_max)
            .with("episodes", 64);
        run_suite(&spec, 7, jobs(), dir.path()).unwrap();
        let rows = read_csv(&dir.path().join("case_study.csv"));
        let mean = |policy: &str| -> f64 {
            rows.iter()
                .find(|r| r["init"] == "bad" && r["policy"] == policy)
                .map(|r| r["mean"].parse().unwrap())
                .unwrap()
        };
        let (clip, window) = (mean("clip-12to1"), mean("window-6"));
        pass &= clip > window;
        let mut sums: BTreeMap<(String, String), f64> = BTreeMap::new();
        for r in read_csv(&dir.path().join("heatmap.csv")) {
            *sums.entry((r["init"].clone(), r["policy"].clone())).or_default() +=
                r["percent"].parse::<f64>().unwrap();
        }
        let worst = sums.values().map(|s| (s - 100.0).abs()).fold(0.0, f64::max);
        pass &= worst <= 0.1;
        details.push(format!(
            "p_max={p_max}: bad-init clip {clip:.3} vs window {window:.3}, heatmap max |sum-100| {worst:.4}"
        ));
    }
    report("case study harness", pass, start.elapsed(), details.join("; "));
}

#[test]
fn cpl_dataset_contract() {
    let start = Instant::now();
    let agent = AgentBinding::default();
    let maze = EnvSpec::new(EnvId::Maze, 0);
    let cfg = CplConfig::default();
    let episodes = collect_env(&maze, &agent, &cfg, 2024, jobs()).unwrap();
    let pairs: Vec<_> = episodes.iter().flat_map(|e| e.pairs.iter()).collect();
    let mut violations = 0;
    for ep in &episodes {
        for p in &ep.pairs {
            let t = p.meta.turn;
            let visible: BTreeSet<usize> = (t.saturating_sub(5).max(1)..t).collect();
            let round = ep.conversation.round(t).unwrap();
            let assembled = ep.conversation.assemble_prompt(&visible, round.observation()).unwrap();
            let same = serde_json::to_vec(&to_chat(&assembled)).unwrap()
                == serde_json::to_vec(&p.prompt).unwrap();
            if t < cfg.k || p.chosen == p.rejected || !same {
                violations += 1;
            }
        }
    }
    let owned: Vec<_> = pairs.iter().map(|&p| p.clone()).collect();
    let header = DatasetHeader::new(&cfg, &[maze.clone()], &agent, 2024);
    let mut buf = Vec::new();
    export_dataset(&header, &owned, &mut buf).unwrap();
    let (h, back) = read_dataset(buf.as_slice()).unwrap();
    let mut again = Vec::new();
    export_dataset(&h, &back, &mut again).unwrap();
    let lossless = h == header && back == owned && again == buf;

    let one_vs_six = CplConfig {
        chosen_rounds: ContextSize::Rounds(1),
        rejected_rounds: ContextSize::Rounds(6),
        target_pairs: 50,
        ..CplConfig::default()
    };
    let small = collect_env(&maze, &agent, &one_vs_six, 2024, jobs()).unwrap();
    let n_one_six: usize = small.iter().map(|e| e.pairs.len()).sum();
    let elapsed = start.elapsed();
    report(
        "cpl dataset contract",
        pairs.len() == 1000 && violations == 0 && lossless && n_one_six > 0,
        elapsed,
        format!(
            "{} pairs (6 vs inf), {violations} contract violations, round trip lossless: {lossless}; \
             1 vs 6 produced {n_one_six} pairs",
            pairs.len()
        ),
    );
}

#[test]
fn scaling_harness() {
    let start = Instant::now();
    let limits: Vec<usize> = [0.25, 0.5, 1.0, 1.5]
        .iter()
        .map(|&m| scaled_steps(EnvId::Maze.default_max_steps(), m))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let spec = SuiteSpec::new(SuiteKind::Scaling).with("episodes", 64);
    run_suite(&spec, 2024, jobs(), dir.path()).unwrap();
    let rows = read_csv(&dir.path().join("scaling.csv"));
    let emitted: BTreeSet<(String, String)> = rows
        .iter()
        .map(|r| (r["multiplier"].clone(), r["max_steps"].clone()))
        .collect();
    let expected_emitted: BTreeSet<(String, String)> =
        [("0.25", "15"), ("0.5", "30"), ("1", "60"), ("1.5", "90")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r["arm"] == "control") {
        curves
            .entry(r["policy"].clone())
            .or_default()
            .push((r["multiplier"].parse().unwrap(), r["mean"].parse().unwrap()));
    }
    let mut monotone = true;
    let mut summary = Vec::new();
    for (policy, curve) in &mut curves {
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        monotone &= curve.windows(2).all(|w| w[1].1 >= w[0].1);
        let means: Vec<String> = curve.iter().map(|(_, m)| format!("{m:.3}")).collect();
        summary.push(format!("{policy} [{}]", means.join(", ")));
    }
    let elapsed = start.elapsed();
    report(
        "scaling harness",
        limits == [15, 30, 60, 90] && emitted == expected_emitted && monotone,
        elapsed,
        format!("step limits {limits:?}; control means {}", summary.join("; ")),
    );
}
