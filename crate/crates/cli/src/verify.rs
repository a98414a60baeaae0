//! Oracle-backed verification suite. Each check compares the library
//! against an independent computation and reports pass or fail with the
//! observed margin.

use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use cascade_core::engine::SimulationConfig;
use cascade_core::metrics::{jsd_raw, pearson, pearson_r, Trajectory};
use cascade_core::network::{spectral_radius, AgentProfile, DenseMatrix, PlatformParams, DEFAULT_SPECTRAL_MAX_ITER};
use cascade_core::oracle::{dense_spectral_radius, ic_activation_exact};
use cascade_core::providers::{LocalProvider, StateSummary};
use cascade_core::scenario::{EventKind, NetworkSpec, Scenario, Targets, TimelineEvent, SCHEMA_VERSION};
use cascade_core::state::{dual_update, retrieval_weights, AgentParams, AgentState, MemoryRecord, MessageId};
use cascade_core::vector::{dot, norm};
use cascade_core::{run_scenario, Error, Message, ProviderSpec, TextProvider, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Check names to run; all when empty.
    pub filter: Vec<String>,
    /// Power-iteration tolerance under test.
    pub power_tol: f64,
    pub ic_runs: usize,
    pub phase_runs: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            filter: Vec::new(),
            power_tol: cascade_core::network::DEFAULT_SPECTRAL_TOL,
            ic_runs: 100_000,
            phase_runs: 1_000,
            seed: 20_240_601,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub criterion: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<String, String>;

struct Check {
    name: &'static str,
    criterion: &'static str,
    budget: Duration,
    run: fn(&VerifyOptions) -> Outcome,
}

const CHECKS: &[Check] = &[
    Check {
        name: "ic",
        criterion: "IC-reduction equivalence: per-node activation within 0.01 of exact enumeration",
        budget: Duration::from_secs(120),
        run: check_ic,
    },
    Check {
        name: "spectral",
        criterion: "Spectral oracle: power iteration within 1e-6 of dense eigensolver; closed forms within 1e-9",
        budget: Duration::from_secs(10),
        run: check_spectral,
    },
    Check {
        name: "phase",
        criterion: "Phase behaviour: generations grow at p(n-1)=1.5 and shrink at 0.5 (sign test p<0.01)",
        budget: Duration::from_secs(60),
        run: check_phase,
    },
    Check {
        name: "state",
        criterion: "State invariants over 10^4 random dual updates and retrieval weightings",
        budget: Duration::from_secs(10),
        run: check_state,
    },
    Check {
        name: "dual",
        criterion: "Hand-computed dual update vector case reproduced to 1e-6",
        budget: Duration::from_secs(1),
        run: check_dual,
    },
    Check {
        name: "metrics",
        criterion:
            "Metric properties: JSD bounds/symmetry/maximum, Pearson affine invariance, hand value, zero variance",
        budget: Duration::from_secs(5),
        run: check_metrics,
    },
    Check {
        name: "determinism",
        criterion: "Determinism: byte-identical flagship traces; 5-seed sweep under 5 min with exact means",
        budget: Duration::from_secs(300),
        run: check_determinism,
    },
    Check {
        name: "service",
        criterion: "Service contract: concurrent steps execute once; snapshots isolated from a running step",
        budget: Duration::from_secs(30),
        run: check_service,
    },
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// Runs the selected checks in order.
pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>, String> {
    for f in &opts.filter {
        if !CHECKS.iter().any(|c| c.name == f) {
            return Err(format!("unknown check {f:?}; available: {}", check_names().join(", ")));
        }
    }
    let mut out = Vec::new();
    for check in CHECKS
        .iter()
        .filter(|c| opts.filter.is_empty() || opts.filter.iter().any(|f| f == c.name))
    {
        let start = Instant::now();
        let outcome = (check.run)(opts);
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if elapsed > check.budget {
            passed = false;
            detail = format!("{detail}; exceeded the {:?} time budget", check.budget);
        }
        out.push(CheckResult {
            name: check.name,
            criterion: check.criterion,
            passed,
            detail,
            seconds: elapsed.as_secs_f64(),
        });
    }
    Ok(out)
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{} {:<12} {:>8.2}s  {}\n    {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.criterion,
            r.detail
        ));
    }
    s
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Scenario whose engagement probability is the constant `p` on every edge:
/// content, affect, and memory weights are zero and every agent has unit
/// influence. Agent 0 seeds the cascade toward its followers.
pub fn constant_probability_scenario(n: usize, edges: &[(usize, usize)], p: f64) -> Scenario {
    let platform = PlatformParams {
        platform_id: "p".into(),
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
        w4: 1.0,
        bias: logit(p) - 1.0,
    };
    let mut config = SimulationConfig::new(n, n as u32, 2, 1, vec![platform]);
    config.p_post = 1.0;
    config.track_reproduction = false;
    config.max_messages_per_agent_per_round = n.max(1);
    let personas = (0..n)
        .map(|i| {
            let mut a = AgentProfile::new(format!("n{i}"), "p", 1);
            a.influence = 1.0;
            a.initial_persona = Some(vec![0.0, 1.0]);
            a
        })
        .collect();
    let followers: Vec<String> = edges
        .iter()
        .filter(|(s, _)| *s == 0)
        .map(|(_, r)| format!("n{r}"))
        .collect();
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "constant-probability".into(),
        description: String::new(),
        config,
        personas,
        persona_library: None,
        networks: vec![NetworkSpec {
            platform_id: "p".into(),
            edges: Some(edges.iter().map(|&(s, r)| [r, s]).collect()),
            generator: None,
            seed: None,
        }],
        timeline: vec![TimelineEvent {
            round: 1,
            kind: EventKind::Event,
            author: "n0".into(),
            platform: "p".into(),
            text: Some("seed".into()),
            embedding: Some(vec![1.0, 0.0]),
            emotion: Some(vec![0.0]),
            embedding_ref: None,
            emotion_ref: None,
            targets: Targets::Agents(followers),
            author_influence: None,
            label: Some("seed".into()),
        }],
        ground_truth: None,
        topic: Some(vec![1.0, 0.0]),
        topic_ref: None,
        vectors: None,
    }
}

fn template_world(scenario: &Scenario) -> Result<World, Error> {
    let provider = ProviderSpec::local().build(scenario.config.embedding_dim, scenario.config.emotion_dim)?;
    World::new(scenario, 0, provider)
}

/// Runs one cascade to quiescence and returns the per-round counts of newly
/// activated agents.
fn run_cascade(template: &World, seed: u64) -> Result<(Vec<bool>, Vec<usize>), Error> {
    let mut w = template.reseeded(seed);
    let total = w.config().total_rounds();
    let mut generations = Vec::new();
    while w.round() < total {
        let t = w.step()?;
        generations.push(t.activations.iter().map(|a| a.new_agents).sum());
        if w.pending_inbox_sizes().iter().all(|&k| k == 0) {
            break;
        }
    }
    Ok((w.cascade_participants(MessageId(0)), generations))
}

fn random_digraph(rng: &mut ChaCha8Rng) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(4..=8);
    let max_edges = (n * (n - 1)).min(12);
    let e = rng.random_range((n - 1)..=max_edges);
    let mut edges = Vec::new();
    while edges.len() < e {
        let (s, r) = (rng.random_range(0..n), rng.random_range(0..n));
        if s != r && !edges.contains(&(s, r)) {
            edges.push((s, r));
        }
    }
    (n, edges)
}

fn check_ic(opts: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst: f64 = 0.0;
    for g in 0..10 {
        let (n, edges) = random_digraph(&mut rng);
        let p = rng.random_range(0.2..0.8);
        let exact = ic_activation_exact(n, &edges.iter().map(|&(s, r)| (s, r, p)).collect::<Vec<_>>(), &[0])
            .map_err(|e| e.to_string())?;
        let scenario = constant_probability_scenario(n, &edges, p);
        let template = template_world(&scenario).map_err(|e| e.to_string())?;
        let base = opts
            .seed
            .wrapping_mul(1_000_003)
            .wrapping_add(g as u64 * opts.ic_runs as u64);
        let counts = (0..opts.ic_runs as u64)
            .into_par_iter()
            .map(|k| run_cascade(&template, base + k).map(|(active, _)| active))
            .try_fold(
                || vec![0u64; n],
                |mut acc, active| {
                    let active = active?;
                    for (c, a) in acc.iter_mut().zip(active) {
                        *c += u64::from(a);
                    }
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; n],
                |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()),
            )
            .map_err(|e| e.to_string())?;
        for (c, q) in counts.iter().zip(&exact) {
            let freq = *c as f64 / opts.ic_runs as f64;
            worst = worst.max((freq - q).abs());
        }
    }
    let detail = format!(
        "10 graphs x {} runs, max |empirical - exact| = {worst:.5}",
        opts.ic_runs
    );
    ensure(worst <= 0.01, || detail.clone())?;
    Ok(detail)
}

fn check_spectral(opts: &VerifyOptions) -> Outcome {
    let tol = opts.power_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let density = if k < 50 { 1.0 } else { 0.3 };
        let m = DenseMatrix::from_fn(10, |_, _| {
            if rng.random::<f64>() < density {
                rng.random()
            } else {
                0.0
            }
        });
        let est = spectral_radius(&m, tol, DEFAULT_SPECTRAL_MAX_ITER).map_err(|e| e.to_string())?;
        let oracle = dense_spectral_radius(&m).map_err(|e| e.to_string())?;
        worst = worst.max((est.radius - oracle).abs());
    }
    let closed = [
        (DenseMatrix::zeros(4), 0.0),
        (DenseMatrix::from_fn(2, |i, j| if i != j { 0.5 } else { 0.0 }), 0.5),
        (DenseMatrix::from_fn(3, |i, j| if i != j { 0.6 } else { 0.0 }), 1.2),
    ];
    let mut worst_closed: f64 = 0.0;
    for (m, expected) in &closed {
        let est = spectral_radius(m, tol, DEFAULT_SPECTRAL_MAX_ITER).map_err(|e| e.to_string())?;
        worst_closed = worst_closed.max((est.radius - expected).abs());
    }
    let detail = format!(
        "tol {tol:e}: max oracle deviation {worst:.2e} over 100 matrices, closed-form deviation {worst_closed:.2e}"
    );
    ensure(worst <= 1e-6 && worst_closed <= 1e-9, || detail.clone())?;
    Ok(detail)
}

fn complete_digraph(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|s| (0..n).filter(move |&r| r != s).map(move |r| (s, r)))
        .collect()
}

/// One-sided sign test of `wins` against `losses`; returns the p-value of
/// observing at least `wins` successes under a fair coin.
fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    Binomial::new(0.5, n).map_or(1.0, |b| b.sf(wins - 1))
}

fn check_phase(opts: &VerifyOptions) -> Outcome {
    let n = 20;
    let edges = complete_digraph(n);
    let mut parts = Vec::new();
    let mut ok = true;
    for (c, growing) in [(1.5, true), (0.5, false)] {
        let p = c / (n - 1) as f64;
        let template = template_world(&constant_probability_scenario(n, &edges, p)).map_err(|e| e.to_string())?;
        let base = opts.seed.wrapping_add((c * 1000.0) as u64 * 1_000_000);
        let gens: Vec<Vec<usize>> = (0..opts.phase_runs as u64)
            .into_par_iter()
            .map(|k| run_cascade(&template, base + k).map(|(_, g)| g))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let at = |g: &Vec<usize>, k: usize| g.get(k).copied().unwrap_or(0);
        let (mut up, mut down) = (0u64, 0u64);
        for g in &gens {
            match at(g, 1).cmp(&at(g, 0)) {
                std::cmp::Ordering::Greater => up += 1,
                std::cmp::Ordering::Less => down += 1,
                std::cmp::Ordering::Equal => {}
            }
        }
        let mean = |k: usize| gens.iter().map(|g| at(g, k) as f64).sum::<f64>() / gens.len() as f64;
        let pval = if growing {
            sign_test(up, down)
        } else {
            sign_test(down, up)
        };
        ok &= pval < 0.01;
        parts.push(format!(
            "p(n-1)={c}: mean generations {:.3} -> {:.3}, {up} up / {down} down, p = {pval:.2e}",
            mean(0),
            mean(1)
        ));
    }
    let detail = parts.join("; ");
    ensure(ok, || detail.clone())?;
    Ok(detail)
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn message(x: Vec<f64>, q: Vec<f64>, round: u32) -> Message {
    Message {
        id: MessageId(0),
        content_embedding: x.into(),
        emotion: q.into(),
        author: "verify".into(),
        platform: "p".into(),
        round,
        cascade: MessageId(0),
        text: None,
    }
}

fn record(x: &[f64], round: u32) -> MemoryRecord {
    MemoryRecord {
        content_embedding: x.into(),
        emotion: vec![0.0].into(),
        memory_vector: x.into(),
        round,
    }
}

fn check_state(opts: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xd0a1);
    let (mut norm_dev, mut ortho_dev, mut affect_max, mut weight_dev): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut monotone_failures = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(2..=16);
        let k = rng.random_range(1..=8);
        let eta = rng.random_range(0.05..=1.0);
        let params = AgentParams {
            beta: rng.random_range(0.1..5.0),
            delta: rng.random_range(0.05..0.99),
            eta,
            gamma: rng.random_range(0.0..=eta),
            alpha: rng.random_range(0.0..5.0),
            theta: 0.0,
        };
        let z = random_unit(&mut rng, d);
        let r: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let state = AgentState::new(&z, r, 16).map_err(|e| e.to_string())?;
        let scale = rng.random_range(0.1..3.0);
        let x: Vec<f64> = random_unit(&mut rng, d).iter().map(|v| v * scale).collect();
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let up = dual_update(&state, &message(x, q.clone(), 1), &params).map_err(|e| e.to_string())?;
        norm_dev = norm_dev.max((norm(&up.persona) - 1.0).abs());
        ortho_dev = ortho_dev.max(dot(&up.increment, &z).abs());
        affect_max = affect_max.max(up.affect.iter().fold(0.0f64, |m, a| m.max(a.abs())));

        // retrieval: random records plus a probe pair for each monotonicity
        let now = 20;
        let mut memory: Vec<MemoryRecord> = (0..rng.random_range(0..6))
            .map(|_| record(&random_unit(&mut rng, d), rng.random_range(1..now)))
            .collect();
        let query = random_unit(&mut rng, d);
        let probe = random_unit(&mut rng, d);
        let older = rng.random_range(1..now - 1);
        memory.push(record(&probe, older));
        memory.push(record(&probe, rng.random_range(older + 1..now)));
        // similarity probe: same round, more aligned content
        let round = rng.random_range(1..now);
        let aligned: Vec<f64> = query.iter().zip(&probe).map(|(a, b)| 0.7 * a + 0.3 * b).collect();
        let less = probe.clone();
        if dot(&aligned, &query) > dot(&less, &query) + 1e-9 {
            memory.push(record(&aligned, round));
            memory.push(record(&less, round));
        }
        memory.sort_by_key(|m| m.round);
        let w = retrieval_weights(&memory, &query, now, &params).map_err(|e| e.to_string())?;
        weight_dev = weight_dev.max((w.iter().sum::<f64>() - 1.0).abs());
        let find = |v: &[f64], rd: u32| {
            memory
                .iter()
                .position(|m| m.round == rd && &m.content_embedding[..] == v)
                .map(|i| w[i])
        };
        let newer_round = memory
            .iter()
            .filter(|m| m.content_embedding[..] == probe[..])
            .map(|m| m.round)
            .max()
            .unwrap_or(older);
        if let (Some(wo), Some(wn)) = (find(&probe, older), find(&probe, newer_round)) {
            if newer_round > older && !(wn > wo) {
                monotone_failures += 1;
            }
        }
        if let (Some(wa), Some(wl)) = (find(&aligned, round), find(&less, round)) {
            if !(wa > wl) {
                monotone_failures += 1;
            }
        }
    }
    let detail = format!(
        "norm dev {norm_dev:.1e}, increment·z {ortho_dev:.1e}, max |affect| {affect_max:.6}, weight-sum dev {weight_dev:.1e}, monotonicity failures {monotone_failures}"
    );
    ensure(
        norm_dev <= 1e-9 && ortho_dev <= 1e-9 && affect_max <= 1.0 && weight_dev <= 1e-9 && monotone_failures == 0,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn check_dual(_: &VerifyOptions) -> Outcome {
    let params = AgentParams {
        beta: 1.0,
        delta: 0.8,
        eta: 0.9,
        gamma: 0.1,
        alpha: 1.0,
        theta: 0.0,
    };
    let state = AgentState::new(&[1.0, 0.0], vec![1.0], 4).map_err(|e| e.to_string())?;
    let up = dual_update(&state, &message(vec![0.0, 1.0], vec![1.0], 1), &params).map_err(|e| e.to_string())?;
    // independent scalar recomputation
    let gate = 1.0 / (1.0 + (-1.0f64).exp());
    let step = 0.1 * gate;
    let len = (1.0 + step * step).sqrt();
    let expected_z = [1.0 / len, step / len];
    let (r, q) = (1.0, 1.0);
    let expected_r = 0.9 * r + step * (q - r);
    let dev = (up.persona[0] - expected_z[0])
        .abs()
        .max((up.persona[1] - expected_z[1]).abs())
        .max((up.affect[0] - expected_r).abs())
        .max((up.gate - gate).abs());
    let published = (up.persona[0] - 0.9973375).abs().max((up.persona[1] - 0.0729112).abs());
    let detail = format!(
        "z' = ({:.7}, {:.7}), r' = {:.7}, gate = {:.7}; deviation {dev:.1e}, vs quoted values {published:.1e}",
        up.persona[0], up.persona[1], up.affect[0], up.gate
    );
    ensure(dev <= 1e-6 && published <= 1e-6, || detail.clone())?;
    Ok(detail)
}

fn check_metrics(opts: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3e7);
    let mut draw = |k: usize| {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let mut failures = Vec::new();
    for _ in 0..100 {
        let (p, q) = (draw(3), draw(3));
        let a = jsd_raw(&p, &q).map_err(|e| e.to_string())?;
        let b = jsd_raw(&q, &p).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&a) || a != b || a <= 0.0 || jsd_raw(&p, &p).map_err(|e| e.to_string())? != 0.0 {
            failures.push(format!("jsd({p:?}, {q:?}) = {a}, reversed {b}"));
        }
    }
    let maximal = jsd_raw(&[1.0, 0.0], &[0.0, 1.0]).map_err(|e| e.to_string())?;
    if (maximal - 1.0).abs() > 1e-12 {
        failures.push(format!("disjoint jsd = {maximal}"));
    }
    let hand = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
    if (hand - expected).abs() > 1e-5 || (hand - 0.98198).abs() > 1e-5 {
        failures.push(format!("pearson hand value {hand}"));
    }
    for _ in 0..100 {
        let a: Vec<(u32, f64)> = (0..8).map(|r| (r, rng.random_range(-1.0..1.0))).collect();
        let b: Vec<(u32, f64)> = (0..8).map(|r| (r, rng.random_range(-1.0..1.0))).collect();
        let (s, t) = (rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0));
        let scaled: Vec<(u32, f64)> = a.iter().map(|&(r, v)| (r, s * v + t)).collect();
        let ta = Trajectory::new(a).map_err(|e| e.to_string())?;
        let tb = Trajectory::new(b).map_err(|e| e.to_string())?;
        let ts = Trajectory::new(scaled).map_err(|e| e.to_string())?;
        let r1 = pearson_r(&ta, &tb).map_err(|e| e.to_string())?;
        let r2 = pearson_r(&ts, &tb).map_err(|e| e.to_string())?;
        if (r1 - r2).abs() > 1e-9 || !(-1.0..=1.0).contains(&r1) {
            failures.push(format!("affine invariance {r1} vs {r2}"));
        }
    }
    match pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]) {
        Err(Error::UndefinedCorrelation(_)) => {}
        other => failures.push(format!("zero variance gave {other:?}")),
    }
    let detail = format!(
        "pearson (1,2,3)/(1,2,4) = {hand:.6}; disjoint jsd = {maximal}; {} failures",
        failures.len()
    );
    ensure(failures.is_empty(), || format!("{detail}: {}", failures.join("; ")))?;
    Ok(detail)
}

/// The bundled flagship scenario.
pub fn flagship() -> Scenario {
    cascade_service::bundled_cases()
        .remove("flagship")
        .expect("flagship is bundled")
}

fn check_determinism(_: &VerifyOptions) -> Outcome {
    let scenario = flagship();
    let provider = ProviderSpec::local()
        .build(scenario.config.embedding_dim, scenario.config.emotion_dim)
        .map_err(|e| e.to_string())?;
    let a = run_scenario(&scenario, 42, provider.clone()).map_err(|e| e.to_string())?;
    let b = run_scenario(&scenario, 42, provider.clone()).map_err(|e| e.to_string())?;
    let ja = serde_json::to_vec(&a.traces).map_err(|e| e.to_string())?;
    let jb = serde_json::to_vec(&b.traces).map_err(|e| e.to_string())?;
    ensure(ja == jb, || "two runs with seed 42 produced different traces".into())?;

    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];
    let reports = seeds
        .par_iter()
        .map(|&s| {
            let out = run_scenario(&scenario, s, provider.clone())?;
            cascade_core::build_report(&scenario, s, &out.initial_alignment, &out.traces)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let agg = cascade_core::aggregate_seeds(&reports).map_err(|e| e.to_string())?;
    let sweep = start.elapsed();
    let mean =
        |f: &dyn Fn(&cascade_core::FidelityReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    let mut dev: f64 = 0.0;
    if let (Some(r), true) = (agg.pearson_r, reports.iter().all(|r| r.pearson_r.is_some())) {
        dev = dev.max((r - mean(&|x| x.pearson_r.unwrap_or(0.0))).abs());
    }
    if let Some(j) = agg.jsd {
        dev = dev.max((j - mean(&|x| x.jsd.unwrap_or(0.0))).abs());
    }
    for (k, (round, v)) in agg.trajectory.points.iter().enumerate() {
        let m = mean(&|x| x.trajectory.points[k].1);
        dev = dev.max((v - m).abs());
        let _ = round;
    }
    let detail = format!(
        "{} trace bytes identical; 5-seed sweep {:.2}s; aggregate deviation from per-seed means {dev:.1e}",
        ja.len(),
        sweep.as_secs_f64()
    );
    ensure(sweep < Duration::from_secs(300) && dev <= 1e-12, || detail.clone())?;
    Ok(detail)
}

/// Local provider that stalls on every embedding, keeping a round in
/// progress long enough to observe it from other clients.
struct Stalling(LocalProvider, Duration);

impl TextProvider for Stalling {
    fn embed(&self, text: &str) -> cascade_core::Result<Vec<f64>> {
        std::thread::sleep(self.1);
        self.0.embed(text)
    }
    fn emote(&self, text: &str) -> cascade_core::Result<Vec<f64>> {
        self.0.emote(text)
    }
    fn generate_post(&self, p: &AgentProfile, s: &StateSummary, m: &Message) -> cascade_core::Result<String> {
        self.0.generate_post(p, s, m)
    }
    fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

fn check_service(_: &VerifyOptions) -> Outcome {
    use serde_json::{json, Value};
    let factory: cascade_service::ProviderFactory = Arc::new(|s: &Scenario| {
        let inner = LocalProvider::new(s.config.embedding_dim, s.config.emotion_dim, 0);
        Ok(Arc::new(Stalling(inner, Duration::from_millis(300))) as Arc<dyn TextProvider>)
    });
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(cascade_service::serve(
        listener,
        cascade_service::AppState::new(factory, None),
        async {
            let _ = stop_rx.await;
        },
    ));
    let base = format!("http://{addr}/v1");
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let call = |method: &str, url: &str, body: Option<Value>| -> Result<(u16, Value), String> {
        let mut resp = match (method, body) {
            ("GET", _) => agent.get(url).call(),
            (_, Some(b)) => agent.post(url).send_json(&b),
            (_, None) => agent.post(url).send_empty(),
        }
        .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let value = resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())?;
        Ok((status, value))
    };
    let mut doc: Value = serde_json::from_str(&flagship().to_json_pretty()).map_err(|e| e.to_string())?;
    // text-only first event so the round spends time in the provider
    doc["timeline"][0]["embedding"] = Value::Null;
    doc["timeline"][0]["emotion"] = Value::Null;
    let (status, handle) = call(
        "POST",
        &format!("{base}/simulations"),
        Some(json!({"scenario": doc, "seed": 3})),
    )?;
    ensure(status == 201, || format!("create returned {status}: {handle}"))?;
    let id = handle["id"].as_str().unwrap_or_default().to_string();
    let (_, before) = call("GET", &format!("{base}/simulations/{id}/state"), None)?;

    let barrier = Arc::new(Barrier::new(3));
    let codes = std::thread::scope(|scope| {
        let steps: Vec<_> = (0..2)
            .map(|_| {
                let barrier = barrier.clone();
                let url = format!("{base}/simulations/{id}/rounds");
                let call = &call;
                scope.spawn(move || {
                    barrier.wait();
                    call("POST", &url, None).map(|r| r.0)
                })
            })
            .collect();
        barrier.wait();
        std::thread::sleep(Duration::from_millis(100));
        let during = call("GET", &format!("{base}/simulations/{id}/state"), None);
        let codes: Vec<Result<u16, String>> = steps.into_iter().map(|h| h.join().expect("client thread")).collect();
        (codes, during)
    });
    let (codes, during) = codes;
    let mut codes: Vec<u16> = codes.into_iter().collect::<Result<_, _>>()?;
    codes.sort();
    let (_, during) = during?;
    let (_, after) = call("GET", &format!("{base}/simulations/{id}/state"), None)?;
    let _ = stop_tx.send(());
    let _ = rt.block_on(server);

    let detail = format!(
        "concurrent POST /rounds -> {codes:?}; mid-step snapshot round {}, after {}",
        during["round"], after["round"]
    );
    ensure(codes == [200, 409], || detail.clone())?;
    ensure(during == before, || {
        format!("{detail}; mid-step snapshot differs from the pre-step snapshot")
    })?;
    ensure(after["round"] == 1, || detail.clone())?;
    Ok(detail)
}
