use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use cascade_core::network::AgentProfile;
use cascade_core::providers::LocalProvider;
use cascade_core::scenario::{allocate, generate_network, sample_personas, save_scenario, NetworkGenerator};
use cascade_core::vector::dot;
use cascade_core::{load_scenario, Error, Scenario, TextProvider, World};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const MINIMAL: &str = include_str!("../../../scenarios/minimal.json");
const FLAGSHIP: &str = include_str!("../../../scenarios/flagship.json");

fn parse(text: &str) -> cascade_core::Result<Scenario> {
    Scenario::from_json_str(text, None)
}

fn issues(err: Error) -> Vec<String> {
    match err {
        Error::Validation(v) => v.into_iter().map(|i| i.path).collect(),
        other => panic!("expected validation issues, got {other}"),
    }
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    for text in [MINIMAL, FLAGSHIP] {
        let s = parse(text).unwrap();
        let path = dir.path().join("s.json");
        save_scenario(&path, &s).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }
}

#[test]
fn single_agent_without_events_loads() {
    let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
    v["config"]["num_agents"] = 1.into();
    v["personas"].as_array_mut().unwrap().truncate(1);
    v["networks"][0]["edges"] = Value::Array(vec![]);
    v["timeline"] = Value::Array(vec![]);
    let s = parse(&v.to_string()).unwrap();
    assert_eq!(s.personas.len(), 1);
}

#[test]
fn semantic_errors_are_reported_together_with_paths() {
    let mut v: Value = serde_json::from_str(FLAGSHIP).unwrap();
    v["ground_truth"]["final_stances"] = serde_json::json!([0.3, 0.3, 0.3]);
    v["timeline"][0]["platform"] = "myspace".into();
    let paths = issues(parse(&v.to_string()).unwrap_err());
    assert!(paths.iter().any(|p| p.contains("final_stances")), "{paths:?}");
    assert!(paths.iter().any(|p| p.starts_with("timeline[0]")), "{paths:?}");
}

#[test]
fn syntax_errors_carry_a_position() {
    let broken = MINIMAL.replacen("\"rounds\": 3", "\"rounds\": 3,,", 1);
    match parse(&broken).unwrap_err() {
        Error::Parse { line, column, .. } => assert!(line > 1 && column > 0),
        other => panic!("expected parse error, got {other}"),
    }
}

fn mutate_value(v: &mut Value, rng: &mut ChaCha8Rng) {
    let replacements = [
        Value::Null,
        (-1).into(),
        0.into(),
        1e308.into(),
        (-0.5).into(),
        "".into(),
        "x".into(),
        Value::Array(vec![]),
        serde_json::json!({}),
        serde_json::json!([1e9, -1e9]),
        u64::MAX.into(),
    ];
    // descend to a random node, then replace or remove it
    let descend = rng.random_bool(0.7);
    match v {
        Value::Object(map) if descend && !map.is_empty() => {
            let keys: Vec<String> = map.keys().cloned().collect();
            let key = keys.choose(rng).unwrap().clone();
            if rng.random_bool(0.1) {
                map.remove(&key);
            } else {
                mutate_value(map.get_mut(&key).unwrap(), rng);
            }
        }
        Value::Array(items) if descend && !items.is_empty() => {
            let i = rng.random_range(0..items.len());
            if rng.random_bool(0.1) {
                items.remove(i);
            } else {
                mutate_value(&mut items[i], rng);
            }
        }
        _ => *v = replacements.choose(rng).unwrap().clone(),
    }
}

fn mutate_text(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut bytes = text.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..4) {
        let i = rng.random_range(0..bytes.len());
        match rng.random_range(0..3) {
            0 => bytes[i] = b"{}[],:\"0-e.9 "[rng.random_range(0..13)],
            1 => {
                bytes.remove(i);
            }
            _ => bytes.truncate(i),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn mutated_scenarios_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut loaded, mut rejected) = (0, 0);
    for k in 0..1000 {
        let base = if k % 2 == 0 { MINIMAL } else { FLAGSHIP };
        let text = if k % 3 == 0 {
            mutate_text(base, &mut rng)
        } else {
            let mut v: Value = serde_json::from_str(base).unwrap();
            for _ in 0..rng.random_range(1..4) {
                mutate_value(&mut v, &mut rng);
            }
            v.to_string()
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let s = parse(&text)?;
            let provider: Arc<dyn TextProvider> =
                Arc::new(LocalProvider::new(s.config.embedding_dim, s.config.emotion_dim, 0));
            World::new(&s, 1, provider).map(|_| ())
        }));
        match outcome {
            Ok(Ok(())) => loaded += 1,
            Ok(Err(_)) => rejected += 1,
            Err(_) => panic!("mutation {k} panicked on input:\n{text}"),
        }
    }
    assert!(loaded > 0 && rejected > 0, "loaded {loaded}, rejected {rejected}");
}

#[test]
fn erdos_renyi_extremes() {
    assert_eq!(
        generate_network("p", &NetworkGenerator::ErdosRenyi { p: 0.0 }, 4, 1)
            .unwrap()
            .edge_count(),
        0
    );
    let full = generate_network("p", &NetworkGenerator::ErdosRenyi { p: 1.0 }, 4, 1).unwrap();
    assert_eq!(full.edge_count(), 12);
    assert!(full.edges().iter().all(|(i, u)| i != u));
    assert!(generate_network("p", &NetworkGenerator::ErdosRenyi { p: 1.5 }, 4, 1).is_err());
    assert!(generate_network("p", &NetworkGenerator::PreferentialAttachment { m: 4 }, 4, 1).is_err());
}

#[test]
fn generators_are_deterministic_per_seed() {
    for g in [
        NetworkGenerator::ErdosRenyi { p: 0.1 },
        NetworkGenerator::PreferentialAttachment { m: 2 },
    ] {
        let a = generate_network("p", &g, 50, 3).unwrap();
        assert_eq!(a, generate_network("p", &g, 50, 3).unwrap());
        assert_ne!(a, generate_network("p", &g, 50, 4).unwrap());
    }
}

#[test]
fn preferential_attachment_has_heavy_in_degree_tail() {
    for seed in 0..20 {
        let net = generate_network("p", &NetworkGenerator::PreferentialAttachment { m: 2 }, 100, seed).unwrap();
        let mut deg = net.in_degrees();
        deg.sort_unstable();
        let median = (deg[49] + deg[50]) as f64 / 2.0;
        let max = *deg.last().unwrap() as f64;
        assert!(max >= 5.0 * median, "seed {seed}: max {max}, median {median}");
    }
}

#[test]
fn largest_remainder_allocation() {
    assert_eq!(allocate(&[0.5, 0.5], 100, &[0, 1]).unwrap(), vec![50, 50]);
    // quotas 33.3 each, one seat left goes to the best tiebreak rank
    assert_eq!(allocate(&[1.0, 1.0, 1.0], 100, &[2, 0, 1]).unwrap(), vec![33, 34, 33]);
    // quotas 1.5, 2.7, 0.8: floors 1, 2, 0 and the two largest remainders win
    assert_eq!(allocate(&[0.3, 0.54, 0.16], 5, &[0, 1, 2]).unwrap(), vec![1, 3, 1]);
    assert!(allocate(&[0.0, 0.0], 3, &[0, 1]).is_err());
    assert!(allocate(&[1.0, -1.0], 3, &[0, 1]).is_err());
}

#[test]
fn persona_sampling_is_stratified_and_deterministic() {
    let s = parse(FLAGSHIP).unwrap();
    let mut library = s.persona_library.clone().unwrap();
    let ids = |ps: &[AgentProfile]| ps.iter().map(|p| p.agent_id.clone()).collect::<Vec<_>>();
    let a = sample_personas(&library, 100, 9).unwrap();
    assert_eq!(a, sample_personas(&library, 100, 9).unwrap());
    assert_eq!(a.len(), 100);

    library.strata.truncate(2);
    library.strata[0].weight = 0.5;
    library.strata[1].weight = 0.5;
    let split = sample_personas(&library, 100, 9).unwrap();
    let first = split
        .iter()
        .filter(|p| p.agent_id.starts_with(&library.strata[0].name))
        .count();
    assert_eq!(first, 50);

    library.strata[0].weight = 0.7;
    let one = sample_personas(&library, 1, 9).unwrap();
    assert_eq!(ids(&one)[0], format!("{}-000", library.strata[0].name));
    for p in &a {
        assert!(p.params.validate().is_ok());
        assert!((0.0..=1.0).contains(&p.influence));
    }
}

#[test]
fn unrelated_texts_hash_to_near_orthogonal_embeddings() {
    let provider = LocalProvider::new(256, 8, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let word = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.random_range(3..9))
            .map(|_| rng.random_range(b'a'..=b'z') as char)
            .collect()
    };
    let sentence = |rng: &mut ChaCha8Rng| (0..12).map(|_| word(rng)).collect::<Vec<_>>().join(" ");
    let mut high = 0;
    for _ in 0..1000 {
        let (a, b) = (sentence(&mut rng), sentence(&mut rng));
        let cos = dot(&provider.embed(&a).unwrap(), &provider.embed(&b).unwrap());
        if cos.abs() >= 0.5 {
            high += 1;
        }
    }
    assert!(high <= 10, "{high} of 1000 pairs had |cos| >= 0.5");
}

#[test]
fn emotion_scoring_is_clamped_and_empty_without_hits() {
    let provider = LocalProvider::new(16, 8, 0);
    assert!(provider.emote("qwzx plorf").unwrap().iter().all(|x| *x == 0.0));
    let loud = vec!["furious"; 100].join(" ");
    let q = provider.emote(&loud).unwrap();
    assert_eq!(q, provider.emote(&loud).unwrap());
    assert!(q.iter().all(|x| (-1.0..=1.0).contains(x)) && q.iter().any(|x| *x != 0.0));
}
