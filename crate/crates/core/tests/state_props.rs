use cascade_core::network::PlatformParams;
use cascade_core::state::{
    activation_logit, activation_probability, dual_update, project_tangent, retrieval_weights, AgentParams, AgentState,
    EpisodicMemory, MemoryRecord, Message, MessageId,
};
use cascade_core::vector::{dot, norm};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn message(x: Vec<f64>, q: Vec<f64>, round: u32) -> Message {
    Message {
        id: MessageId(round as u64),
        content_embedding: x.into(),
        emotion: q.into(),
        author: "a".into(),
        platform: "p".into(),
        round,
        cascade: MessageId(0),
        text: None,
    }
}

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

fn unit(d: usize) -> impl Strategy<Value = Vec<f64>> {
    vector(d).prop_map(|v| {
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    })
}

fn emotion(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..=1.0f64, k)
}

fn params() -> impl Strategy<Value = AgentParams> {
    (
        0.1..5.0f64,
        0.05..0.99f64,
        0.05..0.99f64,
        0.01..1.0f64,
        0.1..5.0f64,
        -2.0..2.0f64,
    )
        .prop_map(|(beta, delta, eta, gamma, alpha, theta)| AgentParams {
            beta,
            delta,
            eta,
            gamma,
            alpha,
            theta,
        })
}

fn record(x: Vec<f64>, round: u32) -> MemoryRecord {
    MemoryRecord {
        memory_vector: x.clone().into(),
        content_embedding: x.into(),
        emotion: vec![0.0].into(),
        round,
    }
}

fn platform(w: [f64; 4], bias: f64) -> PlatformParams {
    PlatformParams {
        platform_id: "p".into(),
        w1: w[0],
        w2: w[1],
        w3: w[2],
        w4: w[3],
        bias,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn persona_stays_unit_and_steps_are_tangent(
        z in unit(6),
        updates in prop::collection::vec((vector(6), emotion(3)), 1..20),
        p in params(),
    ) {
        let mut state = AgentState::new(&z, vec![0.0; 3], 8).unwrap();
        for (round, (x, q)) in updates.into_iter().enumerate() {
            let up = dual_update(&state, &message(x, q, round as u32), &p).unwrap();
            prop_assert!(dot(&up.increment, &state.persona).abs() <= 1e-9);
            prop_assert!((norm(&up.persona) - 1.0).abs() <= 1e-9);
            state.apply(&up);
        }
    }

    #[test]
    fn affect_stays_bounded_when_gamma_at_most_eta(
        r0 in emotion(4),
        qs in prop::collection::vec(emotion(4), 1..40),
        p in params(),
    ) {
        let p = AgentParams { gamma: p.gamma.min(p.eta), ..p };
        let mut state = AgentState::new(&[1.0, 0.0], r0, 4).unwrap();
        for (round, q) in qs.into_iter().enumerate() {
            let up = dual_update(&state, &message(vec![0.3, 0.7], q, round as u32), &p).unwrap();
            prop_assert!(up.affect.iter().all(|a| (-1.0..=1.0).contains(a)), "{:?}", up.affect);
            state.apply(&up);
        }
    }

    #[test]
    fn retrieval_weights_are_a_distribution(
        xs in prop::collection::vec((vector(5), 0u32..20), 1..16),
        query in vector(5),
        p in params(),
    ) {
        let memory: Vec<_> = xs.into_iter().map(|(x, r)| record(x, r)).collect();
        let w = retrieval_weights(&memory, &query, 20, &p).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn recent_and_similar_records_weigh_more(x in vector(5), y in vector(5), query in vector(5), p in params()) {
        let w = retrieval_weights(&[record(x.clone(), 3), record(x.clone(), 7)], &query, 10, &p).unwrap();
        prop_assert!(w[1] > w[0]);
        let (sx, sy) = (dot(&x, &query), dot(&y, &query));
        prop_assume!((p.beta * (sx - sy)).abs() > 1e-9);
        let w = retrieval_weights(&[record(x, 4), record(y, 4)], &query, 10, &p).unwrap();
        prop_assert_eq!(w[0] > w[1], sx > sy);
    }

    #[test]
    fn tangent_projection_is_idempotent(v in vector(6), z in unit(6)) {
        let once = project_tangent(&v, &z).unwrap();
        let twice = project_tangent(&once, &z).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn activation_is_monotone_in_each_term(
        z in unit(4), r in emotion(2), x in vector(4), q in emotion(2), c in vector(4),
        infl in 0.0..1.0f64, w in prop::array::uniform4(0.1..3.0f64), p in params(), bump in 0.01..0.5f64,
    ) {
        let state = AgentState::new(&z, r.clone(), 4).unwrap();
        let msg = message(x, q, 1);
        let pf = platform(w, 0.1);
        let logit = |s: &AgentState, ctx: &[f64], infl: f64, theta: f64| {
            activation_logit(s, ctx, &msg, infl, &pf, &AgentParams { theta, ..p }).unwrap()
        };
        let base = logit(&state, &c, infl, p.theta);
        // raising ⟨c, x⟩ by moving c along x
        let xn = norm(&msg.content_embedding);
        let c2: Vec<f64> = c.iter().zip(msg.content_embedding.iter()).map(|(ci, xi)| ci + bump * xi / xn).collect();
        prop_assert!(logit(&state, &c2, infl, p.theta) > base);
        prop_assert!(logit(&state, &c, infl + bump, p.theta) > base);
        prop_assert!(logit(&state, &c, infl, p.theta + bump) < base);
        // raising ⟨r, q⟩
        if norm(&msg.emotion) > 1e-6 {
            let qn = norm(&msg.emotion);
            let r2: Vec<f64> = r.iter().zip(msg.emotion.iter()).map(|(ri, qi)| ri + bump * qi / qn).collect();
            let s2 = AgentState { affect: r2, ..state.clone() };
            prop_assert!(logit(&s2, &c, infl, p.theta) > base);
        }
        // the logit is linear in ⟨z, x⟩ with slope w1
        let zx = dot(&state.persona, &msg.content_embedding);
        let zero_w1 = activation_logit(&state, &c, &msg, infl, &platform([0.0, w[1], w[2], w[3]], 0.1), &p).unwrap();
        prop_assert!((base - zero_w1 - w[0] * zx).abs() <= 1e-9);
    }
}

#[test]
fn ic_configuration_ignores_state_context_and_message() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let triple = (unit(4), emotion(2), vector(4), emotion(2), vector(4));
    let pf = platform([0.0, 0.0, 0.0, 1.7], -0.4);
    let p = AgentParams::default();
    let mut logits = Vec::new();
    for _ in 0..100 {
        let (z, r, x, q, c) = triple.new_tree(&mut runner).unwrap().current();
        let state = AgentState::new(&z, r, 4).unwrap();
        let msg = message(x, q, 1);
        logits.push(activation_logit(&state, &c, &msg, 0.6, &pf, &p).unwrap());
        let prob = activation_probability(&state, &c, &msg, 0.6, &pf, &p).unwrap();
        assert_eq!(prob, activation_probability(&state, &c, &msg, 0.6, &pf, &p).unwrap());
    }
    assert!(logits.iter().all(|l| *l == logits[0]), "{logits:?}");
}

#[test]
fn memory_keeps_the_newest_records() {
    let mut state = AgentState::new(&[1.0, 0.0], vec![0.0], 2).unwrap();
    assert!(state.memory.is_empty());
    for round in 0..3 {
        state
            .record_memory(&message(vec![round as f64 + 1.0, 0.0], vec![0.0], round))
            .unwrap();
    }
    assert_eq!(state.memory.len(), 2);
    let rounds: Vec<u32> = state.memory.records().iter().map(|r| r.round).collect();
    assert_eq!(rounds, vec![1, 2]);
    // two messages in the same round keep insertion order
    state.record_memory(&message(vec![0.0, 1.0], vec![0.0], 2)).unwrap();
    let last = state.memory.records().last().unwrap();
    assert_eq!(&*last.content_embedding, &[0.0, 1.0]);
    assert_eq!(state.memory.capacity(), 2);
    assert!(EpisodicMemory::new(2).is_empty());
}
