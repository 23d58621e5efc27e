use std::collections::BTreeSet;

use inertia_core::agent::AgentBinding;
use inertia_core::conversation::to_chat;
use inertia_core::cpl::{
    collect_env, collect_pairs, export_dataset, read_dataset, CollectedEpisode, ContextSize,
    CplConfig, CplError, DatasetHeader,
};
use inertia_core::env::{EnvId, EnvSpec};

fn config(chosen: usize, rejected: ContextSize, pairs: usize) -> CplConfig {
    CplConfig {
        chosen_rounds: ContextSize::Rounds(chosen),
        rejected_rounds: rejected,
        target_pairs: pairs,
        ..CplConfig::default()
    }
}

/// Completed rounds a `w`-round window shows at turn `t`.
fn window_history(w: usize, t: usize) -> BTreeSet<usize> {
    (t.saturating_sub(w - 1).max(1)..t).collect()
}

fn check_contract(episodes: &[CollectedEpisode], cfg: &CplConfig) -> usize {
    let ContextSize::Rounds(w) = cfg.chosen_rounds else { unreachable!() };
    let mut n = 0;
    for ep in episodes {
        assert!(ep.pairs.len() <= cfg.max_pairs_per_episode);
        for pair in &ep.pairs {
            let t = pair.meta.turn;
            assert!(t >= cfg.k);
            assert_ne!(pair.chosen, pair.rejected);
            assert!(pair.meta.long_context_size > pair.meta.short_context_size);
            let round = ep.conversation.round(t).expect("turn was played");
            let expected = ep
                .conversation
                .assemble_prompt(&window_history(w, t), round.observation())
                .unwrap();
            let expected = serde_json::to_vec(&to_chat(&expected)).unwrap();
            assert_eq!(serde_json::to_vec(&pair.prompt).unwrap(), expected, "turn {t}");
            // The executed action is the rejected one.
            assert_eq!(round.action(), pair.rejected);
            n += 1;
        }
    }
    n
}

#[test]
fn six_versus_unbounded_contract() {
    let cfg = config(6, ContextSize::Unbounded, 300);
    let episodes = collect_env(&EnvSpec::new(EnvId::Maze, 0), &AgentBinding::default(), &cfg, 7, 4).unwrap();
    assert_eq!(check_contract(&episodes, &cfg), 300);
}

#[test]
fn one_versus_six_contract() {
    let cfg = config(1, ContextSize::Rounds(6), 200);
    let episodes = collect_env(&EnvSpec::new(EnvId::Maze, 0), &AgentBinding::default(), &cfg, 7, 4).unwrap();
    assert_eq!(check_contract(&episodes, &cfg), 200);
}

#[test]
fn other_environments_produce_pairs() {
    for id in [EnvId::FrozenLake, EnvId::Hangman, EnvId::G2048, EnvId::TextCraft] {
        let cfg = CplConfig {
            k: 5,
            ..config(2, ContextSize::Unbounded, 20)
        };
        let episodes = collect_env(&EnvSpec::new(id, 0), &AgentBinding::default(), &cfg, 1, 2).unwrap();
        let n = check_contract(&episodes, &cfg);
        assert!(n > 0, "{id}");
    }
}

#[test]
fn collection_is_independent_of_job_count() {
    let cfg = config(6, ContextSize::Unbounded, 120);
    let envs = [EnvSpec::new(EnvId::Maze, 0)];
    let agent = AgentBinding::default();
    let one = collect_pairs(&envs, &agent, &cfg, 3, 1).unwrap();
    let many = collect_pairs(&envs, &agent, &cfg, 3, 8).unwrap();
    assert_eq!(one, many);
}

#[test]
fn export_round_trip_is_lossless() {
    let cfg = config(6, ContextSize::Unbounded, 50);
    let envs = vec![EnvSpec::new(EnvId::Maze, 0)];
    let agent = AgentBinding::default();
    let pairs = collect_pairs(&envs, &agent, &cfg, 3, 2).unwrap();
    let header = DatasetHeader::new(&cfg, &envs, &agent, 3);
    let mut buf = Vec::new();
    export_dataset(&header, &pairs, &mut buf).unwrap();
    let (h, p) = read_dataset(buf.as_slice()).unwrap();
    assert_eq!(h, header);
    assert_eq!(p, pairs);
    let mut again = Vec::new();
    export_dataset(&h, &p, &mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn records_have_prompt_chosen_rejected_fields() {
    let cfg = config(6, ContextSize::Unbounded, 3);
    let envs = vec![EnvSpec::new(EnvId::Maze, 0)];
    let agent = AgentBinding::default();
    let pairs = collect_pairs(&envs, &agent, &cfg, 3, 1).unwrap();
    let mut buf = Vec::new();
    export_dataset(&DatasetHeader::new(&cfg, &envs, &agent, 3), &pairs, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["header"]["config"]["rejected_rounds"], "inf");
    assert_eq!(header["header"]["trainer"]["beta"], 0.01);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["prompt"].is_array());
        assert!(v["chosen"].is_string());
        assert!(v["rejected"].is_string());
        assert_eq!(v["prompt"][0]["role"], "system");
    }
}

#[test]
fn malformed_dataset_lines_report_position() {
    let err = read_dataset("{\"header\": 3}\n".as_bytes()).unwrap_err();
    assert!(matches!(err, CplError::Format { line: 1, .. }));
    assert!(matches!(read_dataset("".as_bytes()), Err(CplError::Format { .. })));
}

#[test]
fn invalid_configurations_are_rejected() {
    for cfg in [
        config(6, ContextSize::Rounds(6), 1),
        config(6, ContextSize::Rounds(3), 1),
        config(0, ContextSize::Unbounded, 1),
        CplConfig { k: 0, ..CplConfig::default() },
        CplConfig { chosen_rounds: ContextSize::Unbounded, ..CplConfig::default() },
    ] {
        assert!(cfg.clone().validated().is_err(), "{cfg:?}");
    }
}

#[test]
fn context_size_parsing() {
    assert_eq!("inf".parse::<ContextSize>().unwrap(), ContextSize::Unbounded);
    assert_eq!("∞".parse::<ContextSize>().unwrap(), ContextSize::Unbounded);
    assert_eq!("6".parse::<ContextSize>().unwrap(), ContextSize::Rounds(6));
    assert!("six".parse::<ContextSize>().is_err());
}
