//! Per-agent dual state: a unit-norm semantic persona, a fast affect vector,
//! and a bounded episodic memory, together with the retrieval, update, and
//! activation rules that act on them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PlatformParams;
use crate::vector::{check_dim, dot, is_finite, normalized, sigmoid};

/// Default episodic memory capacity.
pub const DEFAULT_MEMORY_CAPACITY: usize = 256;

/// Pre-normalization persona norm below which an update is rejected.
pub const MIN_RENORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Author id used for organization-issued messages (statements, strategies).
pub const ORGANIZATION: &str = "organization";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub content_embedding: Arc<[f64]>,
    pub emotion: Arc<[f64]>,
    pub author: String,
    pub platform: String,
    pub round: u32,
    /// Root message of the thread this message belongs to.
    pub cascade: MessageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Message {
    pub fn validate(&self, dim: usize, emotion_dim: usize) -> Result<()> {
        check_dim("message content embedding", &self.content_embedding, dim)?;
        check_dim("message emotion", &self.emotion, emotion_dim)?;
        if !is_finite(&self.content_embedding) {
            return Err(Error::NonFinite(format!("content embedding of {}", self.id)));
        }
        if let Some(bad) = self.emotion.iter().find(|q| !(-1.0..=1.0).contains(*q)) {
            return Err(Error::config(format!(
                "emotion component {bad} of {} outside [-1, 1]",
                self.id
            )));
        }
        Ok(())
    }
}

/// Per-agent cognitive parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Semantic selectivity of retrieval.
    pub beta: f64,
    /// Recency decay per round, in (0, 1).
    pub delta: f64,
    /// Emotional persistence, in (0, 1).
    pub eta: f64,
    /// Adaptation rate.
    pub gamma: f64,
    /// Affective gate gain.
    pub alpha: f64,
    /// Intrinsic activation threshold.
    pub theta: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            delta: 0.8,
            eta: 0.8,
            gamma: 0.1,
            alpha: 1.0,
            theta: 0.0,
        }
    }
}

impl AgentParams {
    /// Returns every violated constraint, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            out.push(format!("beta must be > 0 (got {})", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(format!("delta must be in (0,1) (got {})", self.delta));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            out.push(format!("eta must be in (0,1) (got {})", self.eta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must be > 0 (got {})", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            out.push(format!("alpha must be > 0 (got {})", self.alpha));
        }
        if !self.theta.is_finite() {
            out.push(format!("theta must be finite (got {})", self.theta));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub content_embedding: Arc<[f64]>,
    pub emotion: Arc<[f64]>,
    /// Aggregated by retrieval; equal to `content_embedding` at write time.
    pub memory_vector: Arc<[f64]>,
    pub round: u32,
}

/// Bounded episodic store, oldest record evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    capacity: usize,
    records: Vec<MemoryRecord>,
}

impl EpisodicMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            records: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    /// Records written strictly before `round`.
    pub fn before(&self, round: u32) -> &[MemoryRecord] {
        let end = self.records.partition_point(|r| r.round < round);
        &self.records[..end]
    }

    pub fn last_round(&self) -> Option<u32> {
        self.records.last().map(|r| r.round)
    }

    fn push(&mut self, record: MemoryRecord) {
        if self.records.len() == self.capacity {
            self.records.remove(0);
        }
        self.records.push(record);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub persona: Vec<f64>,
    pub affect: Vec<f64>,
    pub memory: EpisodicMemory,
}

impl AgentState {
    /// Builds a state, normalizing `persona` onto the unit sphere.
    pub fn new(persona: &[f64], affect: Vec<f64>, capacity: usize) -> Result<Self> {
        let persona =
            normalized(persona, MIN_RENORM).ok_or_else(|| Error::Degenerate("initial persona has zero norm".into()))?;
        Ok(Self {
            persona,
            affect,
            memory: EpisodicMemory::new(capacity),
        })
    }

    pub fn dim(&self) -> usize {
        self.persona.len()
    }

    pub fn emotion_dim(&self) -> usize {
        self.affect.len()
    }

    /// Appends the message to episodic memory, evicting the oldest record
    /// when full.
    pub fn record_memory(&mut self, msg: &Message) -> Result<()> {
        if let Some(last) = self.memory.last_round() {
            if msg.round < last {
                return Err(Error::precondition(format!(
                    "memory write for round {} after round {last}",
                    msg.round
                )));
            }
        }
        self.memory.push(MemoryRecord {
            content_embedding: msg.content_embedding.clone(),
            emotion: msg.emotion.clone(),
            memory_vector: msg.content_embedding.clone(),
            round: msg.round,
        });
        Ok(())
    }

    /// Non-mutating form of [`AgentState::record_memory`].
    pub fn with_memory(&self, msg: &Message) -> Result<Self> {
        let mut next = self.clone();
        next.record_memory(msg)?;
        Ok(next)
    }

    pub fn apply(&mut self, update: &StateUpdate) {
        self.persona.clone_from(&update.persona);
        self.affect.clone_from(&update.affect);
    }

    /// Non-mutating form of [`dual_update`] followed by [`AgentState::apply`].
    pub fn updated(&self, msg: &Message, params: &AgentParams) -> Result<Self> {
        let update = dual_update(self, msg, params)?;
        let mut next = self.clone();
        next.apply(&update);
        Ok(next)
    }
}

/// Normalized retrieval weights over `memory` for a query embedding at
/// round `now`.
pub fn retrieval_weights(memory: &[MemoryRecord], query: &[f64], now: u32, params: &AgentParams) -> Result<Vec<f64>> {
    let dim = query.len();
    let mut logits = Vec::with_capacity(memory.len());
    let ln_delta = params.delta.ln();
    for (k, rec) in memory.iter().enumerate() {
        if rec.content_embedding.len() != dim || rec.memory_vector.len() != dim {
            return Err(Error::config(format!(
                "memory record {k} has dimension {}, query has {dim}",
                rec.content_embedding.len()
            )));
        }
        if rec.round >= now {
            return Err(Error::precondition(format!(
                "memory record {k} from round {} is not before round {now}",
                rec.round
            )));
        }
        let age = f64::from(now - rec.round);
        logits.push(params.beta * dot(&rec.content_embedding, query) + age * ln_delta);
    }
    // log-sum-exp shift; the ratio is unchanged
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Attention-weighted, recency-decayed context vector. Empty memory yields
/// the zero vector.
pub fn retrieve_context(memory: &[MemoryRecord], query: &[f64], now: u32, params: &AgentParams) -> Result<Vec<f64>> {
    let weights = retrieval_weights(memory, query, now, params)?;
    let mut context = vec![0.0; query.len()];
    for (w, rec) in weights.iter().zip(memory) {
        for (c, m) in context.iter_mut().zip(rec.memory_vector.iter()) {
            *c += w * m;
        }
    }
    Ok(context)
}

/// Projection of `v` onto the tangent space of the unit sphere at `z`.
pub fn project_tangent(v: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if v.len() != z.len() {
        return Err(Error::config(format!(
            "tangent projection of a {}-vector at a {}-vector",
            v.len(),
            z.len()
        )));
    }
    let along = dot(v, z);
    Ok(v.iter().zip(z).map(|(vi, zi)| vi - along * zi).collect())
}

/// Outcome of one dual-stream update; memory is untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct StateUpdate {
    pub persona: Vec<f64>,
    pub affect: Vec<f64>,
    pub gate: f64,
    /// Pre-normalization persona increment `γ·g·Π(u)`.
    pub increment: Vec<f64>,
}

pub fn affective_gate(affect: &[f64], emotion: &[f64], params: &AgentParams) -> f64 {
    sigmoid(params.alpha * dot(affect, emotion))
}

/// Gated dual-stream update of persona and affect in response to `msg`.
pub fn dual_update(state: &AgentState, msg: &Message, params: &AgentParams) -> Result<StateUpdate> {
    let z = &state.persona;
    let r = &state.affect;
    check_dim("message content embedding", &msg.content_embedding, z.len())?;
    check_dim("message emotion", &msg.emotion, r.len())?;

    // the gate reads the pre-update affect and is shared by both rows
    let gate = affective_gate(r, &msg.emotion, params);
    let step = params.gamma * gate;

    let residual = project_tangent(&msg.content_embedding, z)?;
    let tangent = project_tangent(&residual, z)?;
    let increment: Vec<f64> = tangent.iter().map(|t| step * t).collect();
    let raw: Vec<f64> = z.iter().zip(&increment).map(|(zi, di)| zi + di).collect();
    if !is_finite(&raw) {
        return Err(Error::NonFinite("persona update".into()));
    }
    let persona = normalized(&raw, MIN_RENORM)
        .ok_or_else(|| Error::Degenerate("updated persona has norm below 1e-12 and cannot be renormalized".into()))?;
    let affect = r
        .iter()
        .zip(msg.emotion.iter())
        .map(|(ri, qi)| params.eta * ri + step * (qi - ri))
        .collect();
    Ok(StateUpdate {
        persona,
        affect,
        gate,
        increment,
    })
}

/// Pre-sigmoid activation score for receiver state `state` engaging with
/// `msg` from a sender of influence `sender_influence`.
pub fn activation_logit(
    state: &AgentState,
    context: &[f64],
    msg: &Message,
    sender_influence: f64,
    platform: &PlatformParams,
    params: &AgentParams,
) -> Result<f64> {
    check_dim("context", context, state.dim())?;
    check_dim("message content embedding", &msg.content_embedding, state.dim())?;
    check_dim("message emotion", &msg.emotion, state.emotion_dim())?;
    let x = &msg.content_embedding;
    let logit = platform.w1 * dot(&state.persona, x)
        + platform.w2 * dot(&state.affect, &msg.emotion)
        + platform.w3 * dot(context, x)
        + platform.w4 * sender_influence
        + platform.bias
        - params.theta;
    if !logit.is_finite() {
        return Err(Error::NonFinite("activation logit".into()));
    }
    Ok(logit)
}

pub fn activation_probability(
    state: &AgentState,
    context: &[f64],
    msg: &Message,
    sender_influence: f64,
    platform: &PlatformParams,
    params: &AgentParams,
) -> Result<f64> {
    activation_logit(state, context, msg, sender_influence, platform, params).map(sigmoid)
}
