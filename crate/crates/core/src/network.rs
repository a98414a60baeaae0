//! Platform graphs, source influence, activation matrices, and the spectral
//! reproduction coefficient used to classify cascades as sub- or
//! supercritical.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{activation_probability, retrieve_context, AgentParams, AgentState, Message, MessageId};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-8;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 10_000;

/// Longest oscillation period the power iteration fallback looks for.
const MAX_PERIOD: usize = 8;

/// Per-platform activation weights and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformParams {
    pub platform_id: String,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub bias: f64,
}

impl PlatformParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(w >= 0.0 && w.is_finite()) {
                out.push(format!("{name} must be a finite nonnegative weight (got {w})"));
            }
        }
        if !self.bias.is_finite() {
            out.push(format!("bias must be finite (got {})", self.bias));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DormancyWindow {
    pub from: u32,
    pub to: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: String,
    /// Home platform; the agent's own posts are published here.
    pub platform: String,
    pub followers: u64,
    /// Calibrated from follower counts by [`calibrate_influence`].
    #[serde(default)]
    pub influence: f64,
    #[serde(default)]
    pub params: AgentParams,
    #[serde(default)]
    pub persona_seed: String,
    /// Explicit starting persona for vector-level scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_persona: Option<Vec<f64>>,
    /// Direction the random starting persona is pulled toward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub prior_mixing: f64,
    /// Inclusive round ranges during which the agent is inactive.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dormant: Vec<DormancyWindow>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl AgentProfile {
    pub fn new(agent_id: impl Into<String>, platform: impl Into<String>, followers: u64) -> Self {
        Self {
            agent_id: agent_id.into(),
            platform: platform.into(),
            followers,
            influence: 0.0,
            params: AgentParams::default(),
            persona_seed: String::new(),
            initial_persona: None,
            prior: None,
            prior_mixing: 0.0,
            dormant: Vec::new(),
        }
    }

    pub fn is_active(&self, round: u32) -> bool {
        !self.dormant.iter().any(|w| (w.from..=w.to).contains(&round))
    }
}

/// Log-damped follower influence `log(1+f)/log(1+F_max)`, clamped to [0,1].
pub fn influence_from_followers(followers: u64, max_followers: u64) -> f64 {
    if max_followers == 0 {
        return 0.0;
    }
    let num = (followers as f64).ln_1p();
    let den = (max_followers as f64).ln_1p();
    (num / den).clamp(0.0, 1.0)
}

pub fn calibrate_influence(profiles: &mut [AgentProfile]) {
    let max = profiles.iter().map(|p| p.followers).max().unwrap_or(0);
    for p in profiles {
        p.influence = influence_from_followers(p.followers, max);
    }
}

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// Simultaneous row/column relabeling: entry (i,j) of the result is
    /// entry (perm[i], perm[j]) of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }

    fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks(self.n).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct PlatformNetwork {
    pub platform_id: String,
    n: usize,
    /// Sorted `(receiver, sender)` pairs; `(i, u)` means i receives from u.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    out_neighbors: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawNetwork {
    platform_id: String,
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawNetwork> for PlatformNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        Self::new(raw.platform_id, raw.n, raw.edges)
    }
}

impl PlatformNetwork {
    /// Builds a network over `n` agents. Duplicate edges collapse to one;
    /// self-loops and out-of-range indices are rejected.
    pub fn new(
        platform_id: impl Into<String>,
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, u) in edges {
            if i >= n || u >= n {
                return Err(Error::config(format!("edge ({i}, {u}) out of range for {n} agents")));
            }
            if i == u {
                return Err(Error::config(format!("self-loop on agent {i}")));
            }
            set.insert((i, u));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut out_neighbors = vec![Vec::new(); n];
        for &(i, u) in &edges {
            out_neighbors[u].push(i);
        }
        Ok(Self {
            platform_id: platform_id.into(),
            n,
            edges,
            out_neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Agents that receive what `sender` publishes on this platform.
    pub fn out_neighbors(&self, sender: usize) -> &[usize] {
        &self.out_neighbors[sender]
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.edges.binary_search(&(receiver, sender)).is_ok()
    }

    pub fn adjacency(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n);
        for &(i, u) in &self.edges {
            m.set(i, u, 1.0);
        }
        m
    }

    /// Debug dump: one `receiver sender` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, u) in &self.edges {
            let _ = writeln!(out, "{i} {u}");
        }
        out
    }

    pub fn from_edge_list(platform_id: impl Into<String>, n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(u)), None) => edges.push((i, u)),
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        column: 1,
                        message: format!("expected `receiver sender`, got {line:?}"),
                    })
                }
            }
        }
        Self::new(platform_id, n, edges)
    }
}

/// Edgewise engagement probabilities of one message at one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationMatrix {
    pub message_id: MessageId,
    pub round: u32,
    pub entries: DenseMatrix,
}

/// Fills every edge `(i, u)` of `net` with the probability that agent i
/// engages with `msg` received from u; non-edges stay 0. Retrieval uses
/// memories written before round `now`.
pub fn build_activation_matrix(
    net: &PlatformNetwork,
    agents: &[(&AgentProfile, &AgentState)],
    msg: &Message,
    platform: &PlatformParams,
    now: u32,
) -> Result<ActivationMatrix> {
    if agents.len() != net.n() {
        return Err(Error::config(format!(
            "{} agents supplied for a network over {}",
            agents.len(),
            net.n()
        )));
    }
    let mut receivers: Vec<usize> = net.edges().iter().map(|&(i, _)| i).collect();
    receivers.dedup();
    // contexts depend only on the receiver, so compute one per receiver
    let contexts: Vec<(usize, Vec<f64>)> = receivers
        .par_iter()
        .map(|&i| {
            let (profile, state) = agents[i];
            retrieve_context(state.memory.before(now), &msg.content_embedding, now, &profile.params).map(|c| (i, c))
        })
        .collect::<Result<_>>()?;
    let mut entries = DenseMatrix::zeros(net.n());
    let mut ctx = contexts.iter().peekable();
    for &(i, u) in net.edges() {
        while ctx.peek().is_some_and(|(r, _)| *r < i) {
            ctx.next();
        }
        let (_, context) = ctx.peek().expect("context for every receiver");
        let (profile, state) = agents[i];
        let p = activation_probability(state, context, msg, agents[u].0.influence, platform, &profile.params)?;
        entries.set(i, u, p);
    }
    Ok(ActivationMatrix {
        message_id: msg.id,
        round: now,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Spectral radius of a nonnegative matrix by power iteration from the
/// all-ones vector.
///
/// The growth factor `‖M x_k‖` is tracked per step and, for each window
/// `h ∈ 1..=8`, the sliding geometric mean of the last `h` factors forms a
/// sequence of estimates. `h = 1` is the ordinary estimate; longer windows
/// settle on periodic (e.g. bipartite) spectra where single-step factors
/// oscillate. A window is accepted once its estimate has stayed within `tol`
/// (relative above 1) over the last `2h + 2` steps and the geometric tail
/// implied by the last two changes is within `tol` too. A run that never settles returns the last window-8 estimate with
/// `converged = false`.
pub fn spectral_radius(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    if let Some(bad) = m.as_slice().iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::precondition(format!(
            "spectral radius requires finite nonnegative entries (found {bad})"
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::config(
            "spectral tolerance and iteration budget must be positive",
        ));
    }
    let n = m.n();
    if n == 0 {
        return Ok(SpectralEstimate {
            radius: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut log_growth: Vec<f64> = Vec::new();
    let window = |lg: &[f64], end: usize, h: usize| (lg[end - h..end].iter().sum::<f64>() / h as f64).exp();
    for iter in 1..=max_iter {
        m.mul_vec(&x, &mut y);
        let g = crate::vector::norm(&y);
        if g == 0.0 {
            // M^k 1 = 0 only for nilpotent M
            return Ok(SpectralEstimate {
                radius: 0.0,
                converged: true,
                iterations: iter,
            });
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / g;
        }
        log_growth.push(g.ln());
        let k = log_growth.len();
        for h in 1..=MAX_PERIOD {
            // complex subdominant eigenvalues make the error oscillate, so a
            // pair of small changes can be a turning point; require the
            // estimate to hold over a span of 2h + 2 steps as well
            let span = 2 * h + 2;
            if k < h + span {
                break;
            }
            let e0 = window(&log_growth, k, h);
            let scale = tol * e0.max(1.0);
            let mut diffs = (1..=span).map(|j| {
                let prev = window(&log_growth, k - j + 1, h);
                let cur = window(&log_growth, k - j, h);
                ((e0 - cur).abs(), (prev - cur).abs())
            });
            if diffs.clone().any(|(drift, _)| drift > scale) {
                continue;
            }
            let d0 = diffs.next().map_or(0.0, |(_, d)| d);
            let d1 = diffs.next().map_or(0.0, |(_, d)| d);
            let tail = if d0 == 0.0 {
                0.0
            } else if d0 < d1 {
                let c = d0 / d1;
                d0 * c / (1.0 - c)
            } else {
                f64::INFINITY
            };
            if tail <= scale {
                return Ok(SpectralEstimate {
                    radius: e0,
                    converged: true,
                    iterations: iter,
                });
            }
        }
    }
    let k = log_growth.len();
    Ok(SpectralEstimate {
        radius: window(&log_growth, k, MAX_PERIOD.min(k)),
        converged: false,
        iterations: max_iter,
    })
}

/// Spectral radius of `A ⊙ P` for the platform adjacency `A`.
pub fn reproduction_coefficient(net: &PlatformNetwork, act: &ActivationMatrix) -> Result<SpectralEstimate> {
    reproduction_coefficient_with(net, act, DEFAULT_SPECTRAL_TOL, DEFAULT_SPECTRAL_MAX_ITER)
}

pub fn reproduction_coefficient_with(
    net: &PlatformNetwork,
    act: &ActivationMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralEstimate> {
    if act.entries.n() != net.n() {
        return Err(Error::config(format!(
            "activation matrix is {0}x{0}, network has {1} agents",
            act.entries.n(),
            net.n()
        )));
    }
    let mut masked = DenseMatrix::zeros(net.n());
    for &(i, u) in net.edges() {
        masked.set(i, u, act.entries.get(i, u));
    }
    spectral_radius(&masked, tol, max_iter)
}

/// Strictly above one.
pub fn is_supercritical(r: f64) -> bool {
    r > 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyVerdict {
    pub accepted: bool,
    pub delta: f64,
    pub r_before: f64,
    pub r_after: f64,
}

/// A strategy is accepted when it leaves the reproduction coefficient below
/// one.
pub fn strategy_acceptance(r_before: f64, r_after: f64) -> StrategyVerdict {
    StrategyVerdict {
        accepted: r_after < 1.0,
        delta: r_after - r_before,
        r_before,
        r_after,
    }
}
