use std::sync::{Arc, Barrier};
use std::time::Duration;

use cascade_core::network::AgentProfile;
use cascade_core::providers::{LocalProvider, StateSummary};
use cascade_core::{Message, ProviderSpec, Result, Scenario, TextProvider};
use cascade_service::{provider_factory, serve, AppState, ProviderFactory};
use serde_json::{json, Value};

fn start(state: AppState) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, state, std::future::pending()).await.unwrap();
        })
    });
    format!("http://{}/v1", rx.recv().unwrap())
}

fn local_state() -> AppState {
    AppState::new(provider_factory(ProviderSpec::local()), None)
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(url: &str, body: Value) -> (u16, Value) {
    let mut resp = agent().post(url).send_json(&body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn post_empty(url: &str) -> (u16, Value) {
    let mut resp = agent().post(url).send_empty().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

/// Two agents, one edge 0 → 1, engagement forced, no reposting.
fn two_node(text_event: bool) -> Value {
    let mut event = json!({
        "round": 1, "kind": "event", "author": "x0", "platform": "p",
        "targets": ["x1"], "label": "seed"
    });
    if text_event {
        event["text"] = json!("the bridge is closed");
    } else {
        event["embedding"] = json!([0.0, 1.0, 0.0]);
        event["emotion"] = json!([0.5]);
    }
    json!({
        "schema_version": 1,
        "name": "two-node",
        "config": {
            "num_agents": 2, "rounds": 3, "embedding_dim": 3, "emotion_dim": 1, "p_post": 0.0,
            "platforms": [{"platform_id": "p", "w1": 0.0, "w2": 0.0, "w3": 0.0, "w4": 0.0, "bias": 40.0}]
        },
        "personas": [
            {"agent_id": "x0", "platform": "p", "followers": 5},
            {"agent_id": "x1", "platform": "p", "followers": 5}
        ],
        "networks": [{"platform_id": "p", "edges": [[1, 0]]}],
        "timeline": [event],
        "topic": [1.0, 0.0, 0.0]
    })
}

#[test]
fn health_answers() {
    let base = start(local_state());
    let (status, body) = get(&format!("{base}/health"));
    assert_eq!(status, 200);
    assert_eq!(body["status"], "ok");
}

#[test]
fn lifecycle_of_the_two_node_example() {
    let base = start(local_state());
    let (status, handle) = post(
        &format!("{base}/simulations"),
        json!({"scenario": two_node(false), "seed": 9}),
    );
    assert_eq!(status, 201, "{handle}");
    assert_eq!(handle["status"], "awaiting_input");
    assert_eq!(handle["current_round"], 0);
    let id = handle["id"].as_str().unwrap().to_string();

    let (_, state) = get(&format!("{base}/simulations/{id}/state"));
    assert_eq!(state["round"], 0);
    assert!(state["history"].as_array().unwrap().is_empty());
    for a in state["agents"].as_array().unwrap() {
        assert_eq!(a["stance"], "neutral");
    }

    let (status, _) = get(&format!("{base}/simulations/{id}/report"));
    assert_eq!(status, 409);

    let (status, round) = post_empty(&format!("{base}/simulations/{id}/rounds"));
    assert_eq!(status, 200, "{round}");
    assert_eq!(round["round"], 1);
    assert_eq!(round["engaged"], 1);
    assert!(round.get("verdict").is_none());

    let (_, state) = get(&format!("{base}/simulations/{id}/state"));
    let history = state["history"].as_array().unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0]["agent"], "x1");
    assert_eq!(history[0]["sender"], "x0");
    let edges = state["graphs"][0]["engagements"].as_array().unwrap();
    assert_eq!(edges.len(), 1);
    assert_eq!(edges[0]["sender"], 0);
    assert_eq!(edges[0]["receiver"], 1);

    let (status, report) = get(&format!("{base}/simulations/{id}/report"));
    assert_eq!(status, 200);
    assert!(report.get("pearson_r").is_none());
    assert!(report.get("jsd").is_none());
    assert_eq!(report["trajectory"]["points"].as_array().unwrap().len(), 2);

    // strategy rounds carry a verdict; stepping past the end is refused
    let (status, round) = post(
        &format!("{base}/simulations/{id}/rounds"),
        json!({"strategy": {"embedding": [0.0, 0.0, 1.0], "emotion": [0.2], "targets": ["x1"]}}),
    );
    assert_eq!(status, 200, "{round}");
    assert!(round["verdict"]["accepted"].is_boolean());
    let (status, _) = post(&format!("{base}/simulations/{id}/rounds"), json!({}));
    assert_eq!(status, 200);
    let (status, body) = post_empty(&format!("{base}/simulations/{id}/rounds"));
    assert_eq!(status, 409);
    assert_eq!(body["code"], "conflict");
    let (_, handle) = get(&format!("{base}/simulations/{id}"));
    assert_eq!(handle["status"], "finished");
}

#[test]
fn invalid_scenarios_list_every_violation() {
    let base = start(local_state());
    let mut doc = two_node(false);
    doc["config"]["p_post"] = json!(2.0);
    doc["config"]["platforms"][0]["w1"] = json!(-1.0);
    doc["networks"][0]["edges"] = json!([[5, 0]]);
    let (status, body) = post(&format!("{base}/simulations"), json!({"scenario": doc}));
    assert_eq!(status, 400);
    assert_eq!(body["code"], "invalid_scenario");
    assert!(body["details"].as_array().unwrap().len() >= 3, "{body}");
}

#[test]
fn duplicate_creation_gives_independent_handles() {
    let base = start(local_state());
    let (_, a) = post(&format!("{base}/simulations"), json!({"case": "minimal"}));
    let (_, b) = post(&format!("{base}/simulations"), json!({"case": "minimal"}));
    assert_ne!(a["id"], b["id"]);
    let (status, _) = post_empty(&format!("{base}/simulations/{}/rounds", a["id"].as_str().unwrap()));
    assert_eq!(status, 200);
    let (_, hb) = get(&format!("{base}/simulations/{}", b["id"].as_str().unwrap()));
    assert_eq!(hb["current_round"], 0);
    let (status, body) = get(&format!("{base}/simulations/nope/state"));
    assert_eq!(status, 404);
    assert_eq!(body["code"], "not_found");
}

#[test]
fn malformed_strategies_are_rejected() {
    let base = start(local_state());
    let (_, h) = post(&format!("{base}/simulations"), json!({"case": "minimal"}));
    let url = format!("{base}/simulations/{}/rounds", h["id"].as_str().unwrap());
    for bad in [
        json!({"strategy": {}}),
        json!({"strategy": {"embedding": [1.0, 0.0]}}),
        json!({"strategy": {"text": "ok", "emotion": [3.0, 0.0]}}),
        json!({"strategy": {"text": "ok", "platform": "nowhere"}}),
        json!({"strategy": {"text": "ok", "colour": "red"}}),
    ] {
        let (status, body) = post(&url, bad.clone());
        assert_eq!(status, 422, "{bad} -> {body}");
    }
    let (status, body) = post(&url, json!({"strategy": {"text": "ok", "targets": ["ghost"]}}));
    assert_eq!(status, 422);
    assert_eq!(body["code"], "unknown_agents");
    // nothing ran
    let (_, h) = get(&format!("{base}/simulations/{}", h["id"].as_str().unwrap()));
    assert_eq!(h["current_round"], 0);
}

#[test]
fn ground_truth_equal_to_the_simulation_correlates_perfectly() {
    let base = start(local_state());
    let (_, h) = post(&format!("{base}/simulations"), json!({"case": "flagship", "seed": 4}));
    let id = h["id"].as_str().unwrap();
    for _ in 0..10 {
        assert_eq!(post_empty(&format!("{base}/simulations/{id}/rounds")).0, 200);
    }
    let (_, report) = get(&format!("{base}/simulations/{id}/report"));
    let simulated = report["negative_share"]["points"].clone();

    let mut doc: Value = serde_json::from_str(include_str!("../../../scenarios/flagship.json")).unwrap();
    doc["ground_truth"]["trajectory"] = simulated;
    let (status, h2) = post(&format!("{base}/simulations"), json!({"scenario": doc, "seed": 4}));
    assert_eq!(status, 201, "{h2}");
    let id2 = h2["id"].as_str().unwrap();
    for _ in 0..10 {
        post_empty(&format!("{base}/simulations/{id2}/rounds"));
    }
    let (_, report) = get(&format!("{base}/simulations/{id2}/report"));
    assert!(
        (report["pearson_r"].as_f64().unwrap() - 1.0).abs() < 1e-12,
        "{}",
        report["pearson_r"]
    );
    assert!(report["jsd"].as_f64().is_some());
}

#[test]
fn batches_aggregate_per_seed_reports() {
    let base = start(local_state());
    let (status, body) = post(
        &format!("{base}/batches"),
        json!({"case": "flagship", "seeds": [3, 1, 2]}),
    );
    assert_eq!(status, 200, "{body}");
    let reports = body["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    let mean: f64 = reports.iter().map(|r| r["jsd"].as_f64().unwrap()).sum::<f64>() / 3.0;
    assert!((body["aggregate"]["jsd"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert_eq!(body["aggregate"]["seeds"], json!([1, 2, 3]));
}

/// Local provider whose embeddings take a while, so a round stays in
/// progress long enough to race against.
struct Slow(LocalProvider);

impl TextProvider for Slow {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        std::thread::sleep(Duration::from_millis(400));
        self.0.embed(text)
    }
    fn emote(&self, text: &str) -> Result<Vec<f64>> {
        self.0.emote(text)
    }
    fn generate_post(&self, p: &AgentProfile, s: &StateSummary, m: &Message) -> Result<String> {
        self.0.generate_post(p, s, m)
    }
    fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

fn slow_factory() -> ProviderFactory {
    Arc::new(|s: &Scenario| {
        Ok(Arc::new(Slow(LocalProvider::new(
            s.config.embedding_dim,
            s.config.emotion_dim,
            0,
        ))) as Arc<dyn TextProvider>)
    })
}

#[test]
fn concurrent_steps_execute_exactly_once_and_reads_are_isolated() {
    let base = start(AppState::new(slow_factory(), None));
    let (_, h) = post(&format!("{base}/simulations"), json!({"scenario": two_node(true)}));
    let id = h["id"].as_str().unwrap().to_string();
    let barrier = Arc::new(Barrier::new(2));
    let steps: Vec<_> = (0..2)
        .map(|_| {
            let (url, barrier) = (format!("{base}/simulations/{id}/rounds"), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                post_empty(&url).0
            })
        })
        .collect();
    std::thread::sleep(Duration::from_millis(150));
    // mid-step reads see the previous round
    let (_, during) = get(&format!("{base}/simulations/{id}/state"));
    let (_, handle) = get(&format!("{base}/simulations/{id}"));
    let mut codes: Vec<u16> = steps.into_iter().map(|t| t.join().unwrap()).collect();
    codes.sort();
    assert_eq!(codes, [200, 409]);
    assert_eq!(during["round"], 0);
    assert!(during["history"].as_array().unwrap().is_empty());
    assert_eq!(handle["status"], "running_round");
    let (_, after) = get(&format!("{base}/simulations/{id}/state"));
    assert_eq!(after["round"], 1);
    assert_eq!(after["history"].as_array().unwrap().len(), 1);
}

#[test]
fn persisted_simulations_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let factory = provider_factory(ProviderSpec::local());
    let base = start(AppState::new(factory.clone(), Some(dir.path().to_path_buf())));
    let (_, h) = post(&format!("{base}/simulations"), json!({"case": "flagship", "seed": 21}));
    let id = h["id"].as_str().unwrap().to_string();
    post_empty(&format!("{base}/simulations/{id}/rounds"));
    post(
        &format!("{base}/simulations/{id}/rounds"),
        json!({"strategy": {"text": "free testing for all families"}}),
    );
    let (_, state_before) = get(&format!("{base}/simulations/{id}/state"));

    let restored = AppState::new(factory, Some(dir.path().to_path_buf()));
    assert_eq!(restored.restore().unwrap(), 1);
    let base2 = start(restored);
    let (_, state_after) = get(&format!("{base2}/simulations/{id}/state"));
    assert_eq!(state_before, state_after);
    let (_, next_a) = post_empty(&format!("{base}/simulations/{id}/rounds"));
    let (_, next_b) = post_empty(&format!("{base2}/simulations/{id}/rounds"));
    assert_eq!(next_a["rng_digest"], next_b["rng_digest"]);
    // new simulations on the restarted service do not reuse the id
    let (_, fresh) = post(&format!("{base2}/simulations"), json!({"case": "minimal"}));
    assert_ne!(fresh["id"].as_str().unwrap(), id);
}
