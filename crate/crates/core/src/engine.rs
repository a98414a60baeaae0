//! Round-based simulation loop.
//!
//! Each round: scheduled timeline messages are injected, active agents are
//! shuffled with the seeded stream, and every agent evaluates its coalesced
//! inbox in order. An engagement is one Bernoulli draw on the activation
//! probability; on success the agent's dual state is updated, the message is
//! written to memory, and with probability `p_post` the agent publishes a
//! post to its followers for the next round. An agent publishes at most one
//! post per cascade (root message), so a cascade activates each agent at
//! most once in the sense of the classic independent cascade model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, ValidationIssue};
use crate::network::{
    build_activation_matrix, reproduction_coefficient, AgentProfile, PlatformNetwork, PlatformParams,
};
use crate::providers::{StateSummary, TextProvider};
use crate::rng::{agent_slot, RecordedStream, StreamFactory, INIT_ROUND, RNG_ALGORITHM, SHUFFLE_SLOT};
use crate::scenario::{generate_network, sample_personas, EventKind, Scenario, Targets, TimelineEvent, NETWORK_SLOT};
use crate::state::{
    activation_probability, dual_update, retrieve_context, AgentState, Message, MessageId, ORGANIZATION,
};
use crate::vector::{dot, normalized};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostVectors {
    /// Posts carry the author's updated persona and affect.
    #[default]
    State,
    /// Posts are re-embedded and re-scored from their generated text.
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::num_agents")]
    pub num_agents: usize,
    /// Days to simulate.
    pub rounds: u32,
    #[serde(default = "defaults::embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "defaults::emotion_dim")]
    pub emotion_dim: usize,
    #[serde(default = "defaults::max_messages")]
    pub max_messages_per_agent_per_round: usize,
    #[serde(default = "defaults::p_post")]
    pub p_post: f64,
    #[serde(default = "defaults::ticks_per_day")]
    pub ticks_per_day: u32,
    #[serde(default = "defaults::memory_capacity")]
    pub memory_capacity: usize,
    #[serde(default)]
    pub post_vectors: PostVectors,
    #[serde(default = "defaults::yes")]
    pub track_reproduction: bool,
    #[serde(default = "defaults::stance_thresholds")]
    pub stance_thresholds: [f64; 2],
    #[serde(default = "defaults::stance_labels")]
    pub stance_labels: Vec<String>,
    pub platforms: Vec<PlatformParams>,
}

mod defaults {
    pub fn num_agents() -> usize {
        100
    }
    pub fn embedding_dim() -> usize {
        256
    }
    pub fn emotion_dim() -> usize {
        8
    }
    pub fn max_messages() -> usize {
        64
    }
    pub fn p_post() -> f64 {
        0.5
    }
    pub fn ticks_per_day() -> u32 {
        1
    }
    pub fn memory_capacity() -> usize {
        crate::state::DEFAULT_MEMORY_CAPACITY
    }
    pub fn yes() -> bool {
        true
    }
    pub fn stance_thresholds() -> [f64; 2] {
        [-0.2, 0.2]
    }
    pub fn stance_labels() -> Vec<String> {
        ["oppose", "neutral", "support"].map(String::from).to_vec()
    }
}

impl SimulationConfig {
    pub fn new(
        num_agents: usize,
        rounds: u32,
        embedding_dim: usize,
        emotion_dim: usize,
        platforms: Vec<PlatformParams>,
    ) -> Self {
        Self {
            seed: 0,
            num_agents,
            rounds,
            embedding_dim,
            emotion_dim,
            max_messages_per_agent_per_round: defaults::max_messages(),
            p_post: defaults::p_post(),
            ticks_per_day: 1,
            memory_capacity: defaults::memory_capacity(),
            post_vectors: PostVectors::State,
            track_reproduction: true,
            stance_thresholds: defaults::stance_thresholds(),
            stance_labels: defaults::stance_labels(),
            platforms,
        }
    }

    /// Total executed rounds (`rounds × ticks_per_day`).
    pub fn total_rounds(&self) -> u32 {
        self.rounds.saturating_mul(self.ticks_per_day.max(1))
    }

    /// Round at whose start an event scheduled for `day` is injected.
    pub fn round_of_day(&self, day: u32) -> u32 {
        (day.max(1) - 1) * self.ticks_per_day.max(1) + 1
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |p: &str, m: String| out.push((p.to_string(), m));
        if self.num_agents < 1 {
            push("num_agents", "must be at least 1".into());
        }
        if self.num_agents > 1_000_000 {
            push("num_agents", "must be at most 1000000".into());
        }
        if self.embedding_dim < 2 {
            push("embedding_dim", "must be at least 2".into());
        }
        if self.embedding_dim > 65_536 {
            push("embedding_dim", "must be at most 65536".into());
        }
        if self.emotion_dim < 1 {
            push("emotion_dim", "must be at least 1".into());
        }
        if self.max_messages_per_agent_per_round < 1 {
            push("max_messages_per_agent_per_round", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_post) {
            push("p_post", "must lie in [0, 1]".into());
        }
        if self.ticks_per_day < 1 {
            push("ticks_per_day", "must be at least 1".into());
        }
        if self.memory_capacity < 1 {
            push("memory_capacity", "must be at least 1".into());
        }
        let [lo, hi] = self.stance_thresholds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            push("stance_thresholds", format!("lower threshold {lo} exceeds upper {hi}"));
        }
        if self.stance_labels.len() != 3 {
            push(
                "stance_labels",
                "exactly three labels (negative, neutral, positive) are required".into(),
            );
        }
        if self.platforms.is_empty() {
            push("platforms", "at least one platform is required".into());
        }
        let mut seen = HashSet::new();
        for (k, p) in self.platforms.iter().enumerate() {
            if !seen.insert(p.platform_id.as_str()) {
                push(
                    &format!("platforms[{k}].platform_id"),
                    format!("duplicate platform {:?}", p.platform_id),
                );
            }
            for m in p.violations() {
                push(&format!("platforms[{k}]"), m);
            }
        }
        out
    }
}

/// Who handed a message to a receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct InboxItem {
    message: MessageId,
    /// `None` for organization-issued messages.
    sender: Option<usize>,
    influence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub agent: String,
    pub message: MessageId,
    pub cascade: MessageId,
    pub sender: String,
    pub platform: String,
    pub probability: f64,
    pub engaged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub message: MessageId,
    pub author: String,
    pub platform: String,
    pub cascade: MessageId,
    pub in_reply_to: MessageId,
    pub recipients: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub message: MessageId,
    pub label: String,
    pub kind: EventKind,
    pub author: String,
    pub platform: String,
    pub recipients: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionRecord {
    pub label: String,
    pub message: MessageId,
    pub platform: String,
    pub r: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeCount {
    pub cascade: MessageId,
    /// Agents engaging with the cascade for the first time this round.
    pub new_agents: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u32,
    pub rng_algorithm: String,
    /// SHA-256 over every random value drawn this round (hex).
    pub rng_digest: String,
    pub injected: Vec<InjectionRecord>,
    /// Number of (message, receiver) evaluations performed.
    pub evaluated: usize,
    pub engagements: Vec<Engagement>,
    pub posts: Vec<PostRecord>,
    pub activations: Vec<CascadeCount>,
    pub reproduction: Vec<ReproductionRecord>,
    /// `⟨persona_i, topic⟩` for every agent at the end of the round.
    pub alignment: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RoundTrace {
    pub fn engaged_count(&self) -> usize {
        self.engagements.iter().filter(|e| e.engaged).count()
    }

    pub fn summary(&self) -> RoundSummary {
        RoundSummary {
            round: self.round,
            evaluated: self.evaluated,
            engaged: self.engaged_count(),
            posts: self.posts.len(),
            injected: self.injected.len(),
            reproduction: self.reproduction.clone(),
            rng_digest: self.rng_digest.clone(),
            notes: self.notes.clone(),
        }
    }
}

/// One-line form of a [`RoundTrace`] for newline-delimited export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub evaluated: usize,
    pub engaged: usize,
    pub posts: usize,
    pub injected: usize,
    pub reproduction: Vec<ReproductionRecord>,
    pub rng_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// A message to be injected at the start of the next round.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub event: TimelineEvent,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedMessage {
    pub message: MessageId,
    pub label: String,
    pub kind: EventKind,
}

/// Everything a round mutates; cloned as the rollback checkpoint.
#[derive(Clone, Debug)]
struct Dynamic {
    round: u32,
    states: Vec<AgentState>,
    messages: Vec<Arc<Message>>,
    tracked: Vec<TrackedMessage>,
    /// Deliveries pending for the next round.
    inboxes: Vec<Vec<InboxItem>>,
    posted: Vec<HashSet<MessageId>>,
    engaged: Vec<HashSet<MessageId>>,
    queued: Vec<Injection>,
}

#[derive(Clone)]
pub struct World {
    config: SimulationConfig,
    name: String,
    seed: u64,
    profiles: Vec<AgentProfile>,
    ids: HashMap<String, usize>,
    platform_index: HashMap<String, usize>,
    networks: Vec<PlatformNetwork>,
    topic: Vec<f64>,
    timeline: Vec<(usize, TimelineEvent)>,
    initial_alignment: Vec<f64>,
    streams: StreamFactory,
    provider: Arc<dyn TextProvider>,
    dynamic: Dynamic,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("name", &self.name)
            .field("seed", &self.seed)
            .field("round", &self.dynamic.round)
            .field("agents", &self.profiles.len())
            .finish_non_exhaustive()
    }
}

impl World {
    /// Builds the initial world for `scenario` under `seed` (which overrides
    /// `config.seed`).
    pub fn new(scenario: &Scenario, seed: u64, provider: Arc<dyn TextProvider>) -> Result<Self> {
        let issues = scenario.validate();
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        let config = scenario.config.clone();
        let (dim, kdim) = (config.embedding_dim, config.emotion_dim);
        if provider.dims() != (dim, kdim) {
            return Err(Error::config(format!(
                "provider dimensions {:?} do not match scenario ({dim}, {kdim})",
                provider.dims()
            )));
        }
        let profiles = if scenario.personas.is_empty() {
            let lib = scenario.persona_library.as_ref().expect("validated persona source");
            sample_personas(lib, config.num_agents, seed)?
        } else {
            scenario.personas.clone()
        };
        let n = profiles.len();
        let ids: HashMap<String, usize> = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.agent_id.clone(), i))
            .collect();

        let mut issues = Vec::new();
        for (k, ev) in scenario.timeline.iter().enumerate() {
            if ev.author != ORGANIZATION && !ids.contains_key(&ev.author) {
                issues.push(ValidationIssue::new(
                    format!("timeline[{k}].author"),
                    format!("unknown author {:?}", ev.author),
                ));
            }
            if let Targets::Agents(list) = &ev.targets {
                let unknown: Vec<_> = list.iter().filter(|id| !ids.contains_key(*id)).collect();
                if !unknown.is_empty() {
                    issues.push(ValidationIssue::new(
                        format!("timeline[{k}].targets"),
                        format!("unknown agents {unknown:?}"),
                    ));
                }
            }
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }

        let streams = StreamFactory::new(seed);
        let platform_index: HashMap<String, usize> = config
            .platforms
            .iter()
            .enumerate()
            .map(|(k, p)| (p.platform_id.clone(), k))
            .collect();
        let mut networks = Vec::with_capacity(config.platforms.len());
        for (k, p) in config.platforms.iter().enumerate() {
            let net = match scenario.networks.iter().find(|s| s.platform_id == p.platform_id) {
                None => PlatformNetwork::new(p.platform_id.clone(), n, [])?,
                Some(spec) => {
                    let net_seed = spec.seed.unwrap_or_else(|| {
                        use rand::RngCore;
                        streams.stream(INIT_ROUND, NETWORK_SLOT - 1 - k as u32).next_u64()
                    });
                    let generator = spec.generator().expect("validated network spec");
                    generate_network(&p.platform_id, &generator, n, net_seed)?
                }
            };
            networks.push(net);
        }

        let topic_raw = match &scenario.topic {
            Some(t) => t.clone(),
            None => provider.embed(&scenario.description)?,
        };
        let topic = normalized(&topic_raw, 1e-12).ok_or_else(|| Error::config("topic embedding has zero norm"))?;

        let mut states = Vec::with_capacity(n);
        for (i, profile) in profiles.iter().enumerate() {
            let persona = match &profile.initial_persona {
                Some(z) => z.clone(),
                None => initial_persona(&streams, i, &topic, profile)?,
            };
            states.push(AgentState::new(&persona, vec![0.0; kdim], config.memory_capacity)?);
        }
        let initial_alignment = states.iter().map(|s| dot(&s.persona, &topic)).collect();

        let mut timeline: Vec<(usize, TimelineEvent)> = scenario.timeline.iter().cloned().enumerate().collect();
        timeline.sort_by_key(|(k, ev)| (config.round_of_day(ev.round), *k));

        Ok(Self {
            name: scenario.name.clone(),
            seed,
            profiles,
            ids,
            platform_index,
            networks,
            topic,
            timeline,
            initial_alignment,
            streams,
            provider,
            dynamic: Dynamic {
                round: 0,
                states,
                messages: Vec::new(),
                tracked: Vec::new(),
                inboxes: vec![Vec::new(); n],
                posted: vec![HashSet::new(); n],
                engaged: vec![HashSet::new(); n],
                queued: Vec::new(),
            },
            config,
        })
    }

    /// Copy of this world whose future draws come from `seed`; everything
    /// already built (personas, graphs) is kept.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut w = self.clone();
        w.seed = seed;
        w.streams = StreamFactory::new(seed);
        w
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Completed rounds.
    pub fn round(&self) -> u32 {
        self.dynamic.round
    }

    pub fn is_finished(&self) -> bool {
        self.dynamic.round >= self.config.total_rounds()
    }

    pub fn profiles(&self) -> &[AgentProfile] {
        &self.profiles
    }

    pub fn states(&self) -> &[AgentState] {
        &self.dynamic.states
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.ids.get(id).copied()
    }

    pub fn networks(&self) -> &[PlatformNetwork] {
        &self.networks
    }

    pub fn topic(&self) -> &[f64] {
        &self.topic
    }

    pub fn initial_alignment(&self) -> &[f64] {
        &self.initial_alignment
    }

    pub fn alignment(&self) -> Vec<f64> {
        self.dynamic
            .states
            .iter()
            .map(|s| dot(&s.persona, &self.topic))
            .collect()
    }

    pub fn message(&self, id: MessageId) -> Option<&Message> {
        self.dynamic.messages.get(id.0 as usize).map(AsRef::as_ref)
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.dynamic.messages.iter().map(AsRef::as_ref)
    }

    pub fn tracked(&self) -> &[TrackedMessage] {
        &self.dynamic.tracked
    }

    pub fn provider(&self) -> &Arc<dyn TextProvider> {
        &self.provider
    }

    /// Which agents have engaged with, or authored, `cascade`.
    pub fn cascade_participants(&self, cascade: MessageId) -> Vec<bool> {
        (0..self.profiles.len())
            .map(|i| self.dynamic.engaged[i].contains(&cascade) || self.dynamic.posted[i].contains(&cascade))
            .collect()
    }

    /// Pending inbox sizes for the next round (after coalescing).
    pub fn pending_inbox_sizes(&self) -> Vec<usize> {
        self.dynamic.inboxes.iter().map(Vec::len).collect()
    }

    /// Queues a message for the next round and registers it as tracked.
    /// Targets are resolved immediately; unknown ids are reported together.
    pub fn inject_message(&mut self, event: TimelineEvent, label: impl Into<String>) -> Result<()> {
        self.resolve_targets(&event.targets, &event.author)?;
        if !self.platform_index.contains_key(&event.platform) {
            return Err(Error::config(format!("unknown platform {:?}", event.platform)));
        }
        self.dynamic.queued.push(Injection {
            event,
            label: label.into(),
        });
        Ok(())
    }

    /// Drops injections queued with [`World::inject_message`] that have not
    /// run yet.
    pub fn discard_queued(&mut self) {
        self.dynamic.queued.clear();
    }

    fn resolve_targets(&self, targets: &Targets, author: &str) -> Result<Vec<usize>> {
        if author != ORGANIZATION && !self.ids.contains_key(author) {
            return Err(Error::UnknownAgents(vec![author.to_string()]));
        }
        let author_idx = self.ids.get(author).copied();
        match targets {
            Targets::Scope(_) => Ok((0..self.profiles.len()).filter(|i| Some(*i) != author_idx).collect()),
            Targets::Agents(list) => {
                let unknown: Vec<String> = list.iter().filter(|id| !self.ids.contains_key(*id)).cloned().collect();
                if !unknown.is_empty() {
                    return Err(Error::UnknownAgents(unknown));
                }
                let mut out: Vec<usize> = list
                    .iter()
                    .map(|id| self.ids[id])
                    .filter(|i| Some(*i) != author_idx)
                    .collect();
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
        }
    }

    /// Runs the next round. On any error the world is restored to its state
    /// at the start of the round.
    pub fn step_round(&mut self, round_index: u32) -> Result<RoundTrace> {
        if round_index != self.dynamic.round + 1 {
            return Err(Error::precondition(format!(
                "round {round_index} requested but {} rounds are complete",
                self.dynamic.round
            )));
        }
        let checkpoint = self.dynamic.clone();
        match self.execute_round(round_index) {
            Ok(trace) => Ok(trace),
            Err(e) => {
                self.dynamic = checkpoint;
                Err(e)
            }
        }
    }

    /// Convenience: step the next round.
    pub fn step(&mut self) -> Result<RoundTrace> {
        self.step_round(self.dynamic.round + 1)
    }

    fn event_message(&self, event: &TimelineEvent, id: MessageId, round: u32) -> Result<Message> {
        let (dim, kdim) = (self.config.embedding_dim, self.config.emotion_dim);
        let text = event.text.clone().filter(|t| !t.trim().is_empty());
        let embedding = match (&event.embedding, &text) {
            (Some(x), _) => x.clone(),
            (None, Some(t)) => self.provider.embed(t)?,
            (None, None) => return Err(Error::config("event needs text or an embedding")),
        };
        let emotion = match (&event.emotion, &text) {
            (Some(q), _) => q.clone(),
            (None, Some(t)) => self.provider.emote(t)?,
            (None, None) => vec![0.0; kdim],
        };
        let msg = Message {
            id,
            content_embedding: embedding.into(),
            emotion: emotion.into(),
            author: event.author.clone(),
            platform: event.platform.clone(),
            round,
            cascade: id,
            text,
        };
        msg.validate(dim, kdim)?;
        Ok(msg)
    }

    fn push_message(&mut self, msg: Message) -> Arc<Message> {
        let msg = Arc::new(msg);
        self.dynamic.messages.push(msg.clone());
        msg
    }

    fn next_id(&self) -> MessageId {
        MessageId(self.dynamic.messages.len() as u64)
    }

    fn enqueue(&mut self, receiver: usize, item: InboxItem) {
        let inbox = &mut self.dynamic.inboxes[receiver];
        match inbox.iter_mut().find(|it| it.message == item.message) {
            Some(existing) => {
                if item.influence > existing.influence {
                    *existing = item;
                }
            }
            None => inbox.push(item),
        }
    }

    fn inject(&mut self, injection: Injection, round: u32) -> Result<InjectionRecord> {
        let Injection { event, label } = injection;
        let targets = self.resolve_targets(&event.targets, &event.author)?;
        let id = self.next_id();
        let msg = self.event_message(&event, id, round)?;
        let (sender, influence) = match self.ids.get(&event.author) {
            Some(&a) => {
                self.dynamic.posted[a].insert(id);
                (Some(a), self.profiles[a].influence)
            }
            None => (None, event.author_influence.unwrap_or(1.0)),
        };
        self.push_message(msg);
        for &t in &targets {
            self.enqueue(
                t,
                InboxItem {
                    message: id,
                    sender,
                    influence,
                },
            );
        }
        self.dynamic.tracked.push(TrackedMessage {
            message: id,
            label: label.clone(),
            kind: event.kind,
        });
        Ok(InjectionRecord {
            message: id,
            label,
            kind: event.kind,
            author: event.author,
            platform: event.platform,
            recipients: targets.len(),
        })
    }

    fn sender_name(&self, sender: Option<usize>) -> String {
        sender.map_or_else(|| ORGANIZATION.to_string(), |s| self.profiles[s].agent_id.clone())
    }

    fn execute_round(&mut self, round: u32) -> Result<RoundTrace> {
        let mut digest = Sha256::new();
        let mut notes = Vec::new();

        // (1) scheduled and queued injections
        let mut injected = Vec::new();
        let scheduled: Vec<Injection> = self
            .timeline
            .iter()
            .filter(|(_, ev)| self.config.round_of_day(ev.round) == round)
            .map(|(k, ev)| Injection {
                event: ev.clone(),
                label: ev.label.clone().unwrap_or_else(|| format!("timeline[{k}]")),
            })
            .collect();
        let queued = std::mem::take(&mut self.dynamic.queued);
        for inj in scheduled.into_iter().chain(queued) {
            injected.push(self.inject(inj, round)?);
        }

        let n = self.profiles.len();
        let mut current = std::mem::replace(&mut self.dynamic.inboxes, vec![Vec::new(); n]);

        // (2) activation order
        let mut order: Vec<usize> = (0..n).filter(|&i| self.profiles[i].is_active(round)).collect();
        for (profile, inbox) in self.profiles.iter().zip(&current) {
            if !profile.is_active(round) && !inbox.is_empty() {
                notes.push(format!(
                    "{} dormant; {} deliveries discarded",
                    profile.agent_id,
                    inbox.len()
                ));
            }
        }
        {
            let mut shuffle = RecordedStream::new(
                self.streams.stream(round, SHUFFLE_SLOT),
                (round, SHUFFLE_SLOT),
                &mut digest,
            );
            order.shuffle(&mut shuffle);
        }

        // (3) sequential evaluation
        let cap = self.config.max_messages_per_agent_per_round;
        let mut evaluated = 0;
        let mut engagements = Vec::new();
        let mut posts = Vec::new();
        let mut activations: BTreeMap<MessageId, usize> = BTreeMap::new();
        for &i in &order {
            let mut items = std::mem::take(&mut current[i]);
            if items.len() > cap {
                notes.push(format!(
                    "{}: {} deliveries over the per-round cap dropped",
                    self.profiles[i].agent_id,
                    items.len() - cap
                ));
                items.truncate(cap);
            }
            if items.is_empty() {
                continue;
            }
            let slot = agent_slot(i);
            let rng = self.streams.stream(round, slot);
            let mut stream = RecordedStream::new(rng, (round, slot), &mut digest);
            for item in items {
                let msg = self.dynamic.messages[item.message.0 as usize].clone();
                let profile = &self.profiles[i];
                let platform = &self.config.platforms[self.platform_index[&msg.platform]];
                let state = &self.dynamic.states[i];
                let context = retrieve_context(
                    state.memory.before(round),
                    &msg.content_embedding,
                    round,
                    &profile.params,
                )?;
                let p = activation_probability(state, &context, &msg, item.influence, platform, &profile.params)?;
                let engaged = stream.bernoulli(p);
                evaluated += 1;
                engagements.push(Engagement {
                    agent: profile.agent_id.clone(),
                    message: msg.id,
                    cascade: msg.cascade,
                    sender: self.sender_name(item.sender),
                    platform: msg.platform.clone(),
                    probability: p,
                    engaged,
                });
                if !engaged {
                    continue;
                }
                let update = dual_update(&self.dynamic.states[i], &msg, &profile.params)?;
                let state = &mut self.dynamic.states[i];
                state.apply(&update);
                state.record_memory(&msg)?;
                if self.dynamic.engaged[i].insert(msg.cascade) {
                    *activations.entry(msg.cascade).or_default() += 1;
                }
                if self.dynamic.posted[i].contains(&msg.cascade) || !stream.bernoulli(self.config.p_post) {
                    continue;
                }
                posts.push(self.publish(i, &msg, round)?);
            }
        }

        // (4) reproduction coefficients of tracked messages
        let reproduction = if self.config.track_reproduction {
            self.reproduction_all()?
        } else {
            Vec::new()
        };

        self.dynamic.round = round;
        Ok(RoundTrace {
            round,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            rng_digest: hex::encode(digest.finalize()),
            injected,
            evaluated,
            engagements,
            posts,
            activations: activations
                .into_iter()
                .map(|(cascade, new_agents)| CascadeCount { cascade, new_agents })
                .collect(),
            reproduction,
            alignment: self.alignment(),
            notes,
        })
    }

    fn publish(&mut self, author: usize, trigger: &Message, round: u32) -> Result<PostRecord> {
        let profile = &self.profiles[author];
        let state = &self.dynamic.states[author];
        let summary = StateSummary::new(dot(&state.persona, &trigger.content_embedding), &state.affect);
        let text = self.provider.generate_post(profile, &summary, trigger)?;
        let (embedding, emotion) = match self.config.post_vectors {
            PostVectors::State => (
                state.persona.clone(),
                state.affect.iter().map(|a| a.clamp(-1.0, 1.0)).collect::<Vec<_>>(),
            ),
            PostVectors::Text => (self.provider.embed(&text)?, self.provider.emote(&text)?),
        };
        let id = self.next_id();
        let msg = Message {
            id,
            content_embedding: embedding.into(),
            emotion: emotion.into(),
            author: profile.agent_id.clone(),
            platform: profile.platform.clone(),
            round: round + 1,
            cascade: trigger.cascade,
            text: Some(text.clone()),
        };
        msg.validate(self.config.embedding_dim, self.config.emotion_dim)?;
        let platform = self.platform_index[&msg.platform];
        let influence = profile.influence;
        self.dynamic.posted[author].insert(trigger.cascade);
        let record = PostRecord {
            message: id,
            author: msg.author.clone(),
            platform: msg.platform.clone(),
            cascade: msg.cascade,
            in_reply_to: trigger.id,
            recipients: self.networks[platform].out_neighbors(author).len(),
            text,
        };
        self.push_message(msg);
        let receivers = self.networks[platform].out_neighbors(author).to_vec();
        for r in receivers {
            self.enqueue(
                r,
                InboxItem {
                    message: id,
                    sender: Some(author),
                    influence,
                },
            );
        }
        Ok(record)
    }

    /// Reproduction coefficient of `message` on every platform, evaluated on
    /// the current agent states.
    pub fn reproduction_of(&self, message: MessageId, label: &str) -> Result<Vec<ReproductionRecord>> {
        let msg = self
            .message(message)
            .ok_or_else(|| Error::precondition(format!("unknown message {message}")))?;
        self.reproduction_for(msg, label)
    }

    /// Like [`World::reproduction_of`] for a message that need not belong to
    /// this world.
    pub fn reproduction_for(&self, msg: &Message, label: &str) -> Result<Vec<ReproductionRecord>> {
        let agents: Vec<(&AgentProfile, &AgentState)> = self.profiles.iter().zip(&self.dynamic.states).collect();
        let now = self.dynamic.round + 1;
        let mut out = Vec::with_capacity(self.networks.len());
        for (net, platform) in self.networks.iter().zip(&self.config.platforms) {
            let act = build_activation_matrix(net, &agents, msg, platform, now)?;
            let est = reproduction_coefficient(net, &act)?;
            out.push(ReproductionRecord {
                label: label.to_string(),
                message: msg.id,
                platform: platform.platform_id.clone(),
                r: est.radius,
                converged: est.converged,
            });
        }
        Ok(out)
    }

    fn reproduction_all(&self) -> Result<Vec<ReproductionRecord>> {
        let mut out = Vec::new();
        for t in &self.dynamic.tracked {
            out.extend(self.reproduction_of(t.message, &t.label)?);
        }
        Ok(out)
    }
}

fn initial_persona(streams: &StreamFactory, agent: usize, topic: &[f64], profile: &AgentProfile) -> Result<Vec<f64>> {
    let mut rng = streams.stream(INIT_ROUND, agent_slot(agent));
    let d = topic.len();
    // uniform direction in the complement of the topic axis
    let mut base = Vec::new();
    for _ in 0..8 {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let along = dot(&g, topic);
        let g: Vec<f64> = g.iter().zip(topic).map(|(gi, ti)| gi - along * ti).collect();
        if let Some(u) = normalized(&g, 1e-9) {
            base = u;
            break;
        }
    }
    if base.is_empty() {
        return Err(Error::Degenerate("could not draw an initial persona".into()));
    }
    match (&profile.prior, profile.prior_mixing) {
        (Some(prior), lambda) if lambda > 0.0 => {
            let prior = normalized(prior, 1e-12).ok_or_else(|| Error::config("persona prior has zero norm"))?;
            let mixed: Vec<f64> = base
                .iter()
                .zip(&prior)
                .map(|(b, p)| (1.0 - lambda) * b + lambda * p)
                .collect();
            normalized(&mixed, 1e-12).ok_or_else(|| Error::Degenerate("prior mixing cancelled the persona".into()))
        }
        _ => Ok(base),
    }
}

/// Traces and end-of-run world for one seed.
#[derive(Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub initial_alignment: Vec<f64>,
    pub traces: Vec<RoundTrace>,
    pub world: World,
}

/// Runs all remaining rounds of `world`.
pub fn run_world(world: &mut World) -> Result<Vec<RoundTrace>> {
    let total = world.config.total_rounds();
    let mut traces = Vec::with_capacity(total.saturating_sub(world.round()) as usize);
    while world.round() < total {
        traces.push(world.step()?);
    }
    Ok(traces)
}

/// Validates and runs `scenario` end to end under `seed`.
pub fn run_scenario(scenario: &Scenario, seed: u64, provider: Arc<dyn TextProvider>) -> Result<RunOutput> {
    let mut world = World::new(scenario, seed, provider)?;
    let traces = run_world(&mut world)?;
    Ok(RunOutput {
        seed,
        initial_alignment: world.initial_alignment().to_vec(),
        traces,
        world,
    })
}
