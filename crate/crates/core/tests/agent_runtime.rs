use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use inertia_core::agent::{
    extract_action, replay, run_batch, run_episode, scripted_act, AgentBinding, AgentError,
    BaseActions, BasePolicy, BatchConfig, ChatClient, ChatEndpoint, ContextView, EpisodeOptions,
    InertiaModel,
};
use inertia_core::conversation::{ChatMessage, Message, Role, Tag};
use inertia_core::env::{EnvId, EnvSpec};
use inertia_core::policy::PolicyConfig;
use inertia_core::rng::SeededRng;
use rand::SeedableRng;

/// One-request-per-connection HTTP server. `handler` maps the request body
/// and call count to a status and response body.
fn stub_server<F>(handler: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&str, usize) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = handler(&String::from_utf8_lossy(&body), n);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, calls)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn endpoint(url: &str) -> ChatEndpoint {
    ChatEndpoint {
        base_url: url.to_string(),
        model: "stub".into(),
        timeout_secs: 10.0,
        api_key_env: "INERTIA_TEST_UNSET_KEY".into(),
        max_retries: 2,
        ..ChatEndpoint::default()
    }
}

fn messages() -> Vec<ChatMessage> {
    vec![
        ChatMessage { role: Role::System, content: "sys".into() },
        ChatMessage { role: Role::User, content: "hello".into() },
    ]
}

#[test]
fn chat_client_sends_model_and_messages() {
    let (url, _) = stub_server(|body, _| {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        let reply = format!("{}|{}", v["model"], v["messages"].as_array().unwrap().len());
        (200, completion(&reply))
    });
    let client = ChatClient::new(endpoint(&url)).unwrap();
    assert_eq!(client.complete(&messages()).unwrap(), "\"stub\"|2");
}

#[test]
fn chat_client_requires_system_first() {
    let client = ChatClient::new(endpoint("http://127.0.0.1:9/v1")).unwrap();
    let err = client.complete(&messages()[1..]).unwrap_err();
    assert!(matches!(err, AgentError::Protocol(_)));
}

#[test]
fn not_found_is_transport_error() {
    let (url, calls) = stub_server(|_, _| (404, "{}".into()));
    let err = ChatClient::new(endpoint(&url)).unwrap().complete(&messages()).unwrap_err();
    assert!(err.is_transport(), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn server_errors_are_retried() {
    let (url, calls) = stub_server(|_, n| {
        if n < 2 {
            (500, "{}".into())
        } else {
            (200, completion("[up]"))
        }
    });
    let text = ChatClient::new(endpoint(&url)).unwrap().complete(&messages()).unwrap();
    assert_eq!(text, "[up]");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, calls) = stub_server(|_, _| (503, "{}".into()));
    let err = ChatClient::new(endpoint(&url)).unwrap().complete(&messages()).unwrap_err();
    assert!(err.is_transport());
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn malformed_body_is_protocol_error() {
    let (url, _) = stub_server(|_, _| (200, "{\"choices\": 3}".into()));
    let err = ChatClient::new(endpoint(&url)).unwrap().complete(&messages()).unwrap_err();
    assert!(matches!(err, AgentError::Protocol(_)), "{err}");
}

#[test]
fn unreachable_endpoint_aborts_batch_cells() {
    let (url, _) = stub_server(|_, _| (404, "{}".into()));
    let mut cfg = BatchConfig::new(
        vec![EnvSpec::new(EnvId::Maze, 0)],
        vec![PolicyConfig::Long],
        AgentBinding::ChatEndpoint(endpoint(&url)),
    );
    cfg.episodes = 3;
    cfg.jobs = 2;
    let result = run_batch(&cfg).unwrap();
    let cell = &result.cells[0];
    assert_eq!(cell.aborted, 3);
    assert_eq!(cell.episodes, 0);
}

#[test]
fn chat_agent_plays_an_episode() {
    let (url, _) = stub_server(|body, _| {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["messages"][0]["role"], "system");
        (200, completion("I think I should go [up]"))
    });
    let spec = EnvSpec::new(EnvId::FrozenLake, 1).with_max_steps(4);
    let record = run_episode(
        &spec,
        PolicyConfig::window(2).unwrap(),
        &AgentBinding::ChatEndpoint(endpoint(&url)),
        0,
        &EpisodeOptions::default(),
    )
    .unwrap();
    assert!(!record.steps.is_empty());
    assert!(record.steps.iter().all(|s| s.action == "[up]"));
    assert!(replay(&record).unwrap());
}

#[test]
fn action_extraction_per_environment() {
    assert_eq!(extract_action(EnvId::Hangman, "maybe [a] or [E]"), "[E]");
    assert_eq!(extract_action(EnvId::Maze, "left, no, Right."), "right");
    assert_eq!(extract_action(EnvId::FrozenLake, "go down"), "[down]");
    assert_eq!(extract_action(EnvId::RushHour, "[X+]"), "[X+]");
}

#[test]
fn imitation_probability_follows_saturating_curve() {
    let model = InertiaModel::default();
    assert_eq!(model.imitation_probability(0), 0.0);
    let p6 = 0.9 * (1.0 - (-0.3f64 * 6.0).exp());
    assert!((model.imitation_probability(6) - p6).abs() < 1e-12);
    assert!((p6 - 0.7512).abs() < 1e-3);
    let mut prev = 0.0;
    for n in 1..50 {
        let p = model.imitation_probability(n);
        assert!(p >= prev && p <= 0.9);
        prev = p;
    }
}

#[test]
fn imitation_rate_grows_with_visible_actions() {
    let model = InertiaModel::default();
    let base = BaseActions {
        hint: Some("[up]".into()),
        heuristic: None,
        space: vec!["[up]".into(), "[down]".into()],
    };
    let rate = |n: usize| {
        let mut ctx = vec![
            Message::tagged(Tag::SystemPrompt, "s"),
            Message::tagged(Tag::Goal, "g"),
        ];
        for _ in 0..n {
            ctx.push(Message::observation_header());
            ctx.push(Message::tagged(Tag::ObservationBody, "o"));
            ctx.push(Message::tagged(Tag::Action, "[left]"));
        }
        let mut rng = SeededRng::seed_from_u64(n as u64);
        (0..4000)
            .filter(|_| scripted_act(&ctx, &model, &base, &mut rng).imitated)
            .count() as f64
            / 4000.0
    };
    let rates: Vec<f64> = [0, 1, 3, 6, 12].iter().map(|&n| rate(n)).collect();
    assert_eq!(rates[0], 0.0);
    for w in rates.windows(2) {
        assert!(w[1] > w[0] - 0.02, "{rates:?}");
    }
    assert!((rates[3] - model.imitation_probability(6)).abs() < 0.03, "{rates:?}");
}

#[test]
fn episodes_replay_and_are_deterministic() {
    let agent = AgentBinding::scripted(0.9, 0.3, BasePolicy::Planner).unwrap();
    for id in [EnvId::Maze, EnvId::FrozenLake, EnvId::G2048, EnvId::Hangman, EnvId::TextCraft] {
        for policy in ["long", "window-6", "clip-12to1", "sum-12to1"] {
            let policy: PolicyConfig = policy.parse().unwrap();
            let spec = EnvSpec::new(id, 3);
            let a = run_episode(&spec, policy, &agent, 17, &EpisodeOptions::default()).unwrap();
            let b = run_episode(&spec, policy, &agent, 17, &EpisodeOptions::default()).unwrap();
            assert_eq!(a, b);
            assert!(replay(&a).unwrap(), "{id} {policy}");
        }
    }
}

#[test]
fn tampered_record_fails_replay() {
    let agent = AgentBinding::default();
    let mut record = run_episode(
        &EnvSpec::new(EnvId::Maze, 1),
        PolicyConfig::Long,
        &agent,
        1,
        &EpisodeOptions::default(),
    )
    .unwrap();
    record.final_reward = 1.0 - record.final_reward;
    record.steps.last_mut().unwrap().reward = record.final_reward;
    assert!(!replay(&record).unwrap());
}

#[test]
fn clip_two_to_one_records_one_visible_round() {
    let record = run_episode(
        &EnvSpec::new(EnvId::Maze, 4),
        PolicyConfig::clip(2, 1).unwrap(),
        &AgentBinding::default(),
        4,
        &EpisodeOptions::default(),
    )
    .unwrap();
    assert!(record.steps.iter().all(|s| s.visible_rounds == 1));
}

#[test]
fn views_agree_on_scripted_episodes() {
    let agent = AgentBinding::default();
    for seed in 0..10 {
        for policy in ["long", "window-3", "clip-5to2", "sum-6to1", "clip-4to0"] {
            let policy: PolicyConfig = policy.parse().unwrap();
            let spec = EnvSpec::new(EnvId::Maze, seed);
            let run = |view| {
                let options = EpisodeOptions { view, ..EpisodeOptions::default() };
                run_episode(&spec, policy, &agent, seed, &options).unwrap()
            };
            assert_eq!(run(ContextView::Trimmed), run(ContextView::Masked));
        }
    }
}

#[test]
fn batch_output_is_independent_of_job_count() {
    let mut cfg = BatchConfig::new(
        vec![EnvSpec::new(EnvId::Maze, 0), EnvSpec::new(EnvId::Hangman, 0)],
        vec![PolicyConfig::Long, PolicyConfig::clip(12, 1).unwrap()],
        AgentBinding::default(),
    );
    cfg.episodes = 6;
    cfg.jobs = 1;
    let one = run_batch(&cfg).unwrap();
    cfg.jobs = 4;
    let four = run_batch(&cfg).unwrap();
    assert_eq!(one.records, four.records);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    one.write_csv(&mut a).unwrap();
    four.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn paired_seeds_share_environments_across_policies() {
    let mut cfg = BatchConfig::new(
        vec![EnvSpec::new(EnvId::Maze, 0)],
        vec![PolicyConfig::Long, PolicyConfig::window(6).unwrap()],
        AgentBinding::default(),
    );
    cfg.episodes = 4;
    let result = run_batch(&cfg).unwrap();
    for e in 0..4 {
        assert_eq!(result.records[0][e].env, result.records[1][e].env);
        assert_eq!(result.records[0][e].agent_seed, result.records[1][e].agent_seed);
    }
}

#[test]
fn step_multiplier_bounds() {
    let mut cfg = BatchConfig::new(
        vec![EnvSpec::new(EnvId::Maze, 0)],
        vec![PolicyConfig::Long],
        AgentBinding::default(),
    );
    for bad in [0.0, -1.0, 2.5] {
        cfg.step_mult = bad;
        assert!(run_batch(&cfg).is_err(), "{bad}");
    }
}

#[test]
fn agent_binding_strings_round_trip() {
    for text in [
        "scripted:p_max=0.9,lambda=0.3,base=planner",
        "chat:url=http://h:1/v1,model=m,temperature=0.5,timeout=3,api_key_env=K,retries=1",
    ] {
        let binding: AgentBinding = text.parse().unwrap();
        assert_eq!(binding.to_string().parse::<AgentBinding>().unwrap(), binding);
    }
    assert!("chat:url=http://h".parse::<AgentBinding>().is_err());
    assert!("scripted:p_max=1.5".parse::<AgentBinding>().is_err());
}

