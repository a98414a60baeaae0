use cascade_core::engine::{ReproductionRecord, RoundTrace};
use cascade_core::metrics::{FidelityReport, Stance};
use cascade_core::scenario::{Targets, TimelineEvent};
use cascade_core::state::MessageId;
use cascade_core::{StrategyVerdict, World};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Created,
    RunningRound,
    AwaitingInput,
    Finished,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationHandle {
    pub id: String,
    pub status: Status,
    pub current_round: u32,
    pub total_rounds: u32,
    pub scenario: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Inline scenario document.
    #[serde(default)]
    pub scenario: Option<serde_json::Value>,
    /// Name of a bundled scenario.
    #[serde(default)]
    pub case: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRequest {
    #[serde(default)]
    pub strategy: Option<StrategyInput>,
}

/// Organization-authored message injected before the round runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyInput {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub emotion: Option<Vec<f64>>,
    #[serde(default)]
    pub author_influence: Option<f64>,
    /// Defaults to the first configured platform.
    #[serde(default)]
    pub platform: Option<String>,
    #[serde(default)]
    pub targets: Option<Targets>,
    #[serde(default)]
    pub label: Option<String>,
}

/// What a round file records so the round can be replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<(TimelineEvent, String)>,
    pub trace: RoundTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResponse {
    pub handle: SimulationHandle,
    pub round: u32,
    pub evaluated: usize,
    pub engaged: usize,
    pub posts: usize,
    pub reproduction: Vec<ReproductionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<StrategyVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_message: Option<MessageId>,
    pub rng_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub agent_id: String,
    pub platform: String,
    pub stance: String,
    pub alignment: f64,
    pub followers: u64,
    pub influence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngagementEdge {
    pub sender: usize,
    pub receiver: usize,
    pub message: MessageId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphView {
    pub platform_id: String,
    /// `[receiver, sender]` follower edges.
    pub edges: Vec<[usize; 2]>,
    /// Engagements of the most recent round that travelled along an edge.
    pub engagements: Vec<EngagementEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub agent: String,
    pub sender: String,
    pub platform: String,
    pub probability: f64,
    pub message: MessageId,
    pub cascade: MessageId,
    pub author: String,
    pub message_round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Read-only view of the last completed round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub round: u32,
    pub agents: Vec<AgentView>,
    pub graphs: Vec<GraphView>,
    pub history: Vec<HistoryEntry>,
}

impl Snapshot {
    pub fn initial(id: &str, world: &World) -> Self {
        let mut s = Self {
            id: id.to_string(),
            round: 0,
            agents: Vec::new(),
            graphs: Vec::new(),
            history: Vec::new(),
        };
        s.refresh(world, None);
        s
    }

    /// Updates agents and graphs from `world` and appends `trace`'s
    /// engagements to the history.
    pub fn refresh(&mut self, world: &World, trace: Option<&RoundTrace>) {
        let thresholds = world.config().stance_thresholds;
        let labels = &world.config().stance_labels;
        self.round = world.round();
        self.agents = world
            .profiles()
            .iter()
            .zip(world.alignment())
            .map(|(p, s)| {
                let stance = Stance::from_score(s, thresholds).map_or(Stance::Neutral, |x| x);
                AgentView {
                    agent_id: p.agent_id.clone(),
                    platform: p.platform.clone(),
                    stance: labels[stance.index()].clone(),
                    alignment: s,
                    followers: p.followers,
                    influence: p.influence,
                }
            })
            .collect();
        let engaged: Vec<_> = trace
            .map(|t| t.engagements.iter().filter(|e| e.engaged).collect())
            .unwrap_or_default();
        self.graphs = world
            .networks()
            .iter()
            .map(|net| GraphView {
                platform_id: net.platform_id.clone(),
                edges: net.edges().iter().map(|&(i, u)| [i, u]).collect(),
                engagements: engaged
                    .iter()
                    .filter(|e| e.platform == net.platform_id)
                    .filter_map(|e| {
                        let sender = world.agent_index(&e.sender)?;
                        let receiver = world.agent_index(&e.agent)?;
                        Some(EngagementEdge {
                            sender,
                            receiver,
                            message: e.message,
                        })
                    })
                    .collect(),
            })
            .collect();
        if let Some(t) = trace {
            for e in &engaged {
                let msg = world.message(e.message);
                self.history.push(HistoryEntry {
                    round: t.round,
                    agent: e.agent.clone(),
                    sender: e.sender.clone(),
                    platform: e.platform.clone(),
                    probability: e.probability,
                    message: e.message,
                    cascade: e.cascade,
                    author: msg.map(|m| m.author.clone()).unwrap_or_default(),
                    message_round: msg.map_or(t.round, |m| m.round),
                    text: msg.and_then(|m| m.text.clone()),
                });
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchRequest {
    #[serde(default)]
    pub scenario: Option<serde_json::Value>,
    #[serde(default)]
    pub case: Option<String>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchResponse {
    pub reports: Vec<FidelityReport>,
    pub aggregate: FidelityReport,
}
