//! Scenario documents: population, platform graphs, the day-level timeline,
//! and optional ground truth, with loading, validation, persona sampling,
//! and network generation.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::engine::SimulationConfig;
use crate::error::{Error, Result, ValidationIssue};
use crate::network::{calibrate_influence, AgentProfile, PlatformNetwork};
use crate::rng::{StreamFactory, INIT_ROUND};
use crate::state::{AgentParams, ORGANIZATION};

pub const SCHEMA_VERSION: u32 = 1;

/// Stream slot for persona sampling draws.
const PERSONA_SLOT: u32 = u32::MAX - 1;
/// First stream slot for network generation; platform k uses `NETWORK_SLOT - k`.
pub(crate) const NETWORK_SLOT: u32 = u32::MAX - 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub config: SimulationConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub personas: Vec<AgentProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_library: Option<PersonaLibrary>,
    #[serde(default)]
    pub networks: Vec<NetworkSpec>,
    #[serde(default)]
    pub timeline: Vec<TimelineEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// Direction stances are read against; the description is embedded
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<VectorSidecar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub platform_id: String,
    /// Explicit `[receiver, sender]` index pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<NetworkGenerator>,
    /// Fixed generator seed; derived from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkGenerator {
    ExplicitEdges {
        edges: Vec<[usize; 2]>,
    },
    /// Each ordered pair is an edge independently with probability `p`.
    ErdosRenyi {
        p: f64,
    },
    /// Growth by degree-proportional attachment of `m` mutual links per
    /// newcomer.
    PreferentialAttachment {
        m: usize,
    },
}

impl NetworkSpec {
    pub fn generator(&self) -> Option<NetworkGenerator> {
        match (&self.edges, &self.generator) {
            (Some(edges), None) => Some(NetworkGenerator::ExplicitEdges { edges: edges.clone() }),
            (None, Some(g)) => Some(g.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Event,
    Strategy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScope {
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    Scope(TargetScope),
    Agents(Vec<String>),
}

impl Default for Targets {
    fn default() -> Self {
        Targets::Scope(TargetScope::All)
    }
}

impl Targets {
    pub fn all() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEvent {
    /// Day index; day `d` is injected at the start of round
    /// `(max(d,1) - 1) * ticks_per_day + 1`.
    pub round: u32,
    pub kind: EventKind,
    #[serde(default = "organization")]
    pub author: String,
    pub platform: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_ref: Option<String>,
    #[serde(default)]
    pub targets: Targets,
    /// Sender influence for organization-authored messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_influence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn organization() -> String {
    ORGANIZATION.to_string()
}

impl TimelineEvent {
    pub fn organization_text(round: u32, kind: EventKind, platform: &str, text: &str) -> Self {
        Self {
            round,
            kind,
            author: organization(),
            platform: platform.to_string(),
            text: Some(text.to_string()),
            embedding: None,
            emotion: None,
            embedding_ref: None,
            emotion_ref: None,
            targets: Targets::all(),
            author_influence: None,
            label: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    /// `(day, value)` points of the empirical opinion series.
    pub trajectory: Vec<(u32, f64)>,
    /// Which simulated series `trajectory` is compared against.
    #[serde(default)]
    pub series: TrajectorySeries,
    pub final_stances: Vec<f64>,
    pub stance_labels: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySeries {
    /// Mean persona alignment with the topic.
    #[default]
    OpinionIndex,
    /// Share of agents holding the negative stance.
    NegativeShare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaLibrary {
    pub strata: Vec<Stratum>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub name: String,
    pub weight: f64,
    #[serde(default)]
    pub descriptors: BTreeMap<String, String>,
    pub platform: String,
    /// Log-normal parameters of the follower count.
    pub followers: LogNormalSpec,
    #[serde(default)]
    pub params: ParamRanges,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub prior_mixing: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub mu: f64,
    pub sigma: f64,
}

/// Inclusive `[lo, hi]` ranges for uniformly drawn agent parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub beta: [f64; 2],
    pub delta: [f64; 2],
    pub eta: [f64; 2],
    pub gamma: [f64; 2],
    pub alpha: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        let p = AgentParams::default();
        Self {
            beta: [p.beta; 2],
            delta: [p.delta; 2],
            eta: [p.eta; 2],
            gamma: [p.gamma; 2],
            alpha: [p.alpha; 2],
            theta: [p.theta; 2],
        }
    }
}

impl ParamRanges {
    fn sample(&self, rng: &mut impl Rng) -> AgentParams {
        let mut draw = |[lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        AgentParams {
            beta: draw(self.beta),
            delta: draw(self.delta),
            eta: draw(self.eta),
            gamma: draw(self.gamma),
            alpha: draw(self.alpha),
            theta: draw(self.theta),
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ranges = [
            ("beta", self.beta),
            ("delta", self.delta),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("theta", self.theta),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                out.push(format!("{name} range [{lo}, {hi}] is not an ordered finite interval"));
            }
        }
        if out.is_empty() {
            // both endpoints must be admissible parameter values
            for pick in [0, 1] {
                let p = AgentParams {
                    beta: self.beta[pick],
                    delta: self.delta[pick],
                    eta: self.eta[pick],
                    gamma: self.gamma[pick],
                    alpha: self.alpha[pick],
                    theta: self.theta[pick],
                };
                for v in p.violations() {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }
}

/// Little-endian `f32` vector file with a named offset index (offsets and
/// lengths in elements).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSidecar {
    pub path: PathBuf,
    pub index: BTreeMap<String, SidecarEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub offset: usize,
    pub len: usize,
}

impl VectorSidecar {
    fn read(&self, base: Option<&Path>) -> Result<Vec<f32>> {
        let path = match base {
            Some(dir) if self.path.is_relative() => dir.join(&self.path),
            _ => self.path.clone(),
        };
        let bytes = fs::read(&path)?;
        if bytes.len() % 4 != 0 {
            return Err(Error::config(format!(
                "{} is not a whole number of f32 values",
                path.display()
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Writes `vectors` as a little-endian f32 sidecar and returns its index.
pub fn write_sidecar(path: &Path, vectors: &[(String, Vec<f64>)]) -> Result<VectorSidecar> {
    let mut bytes = Vec::new();
    let mut index = BTreeMap::new();
    let mut offset = 0;
    for (name, v) in vectors {
        for &x in v {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        index.insert(name.clone(), SidecarEntry { offset, len: v.len() });
        offset += v.len();
    }
    fs::write(path, bytes)?;
    Ok(VectorSidecar {
        path: path
            .file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| path.to_path_buf()),
        index,
    })
}

impl Scenario {
    /// Parses and validates a scenario document. Relative sidecar paths
    /// resolve against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut scenario: Scenario = serde_json::from_str(text)?;
        scenario.resolve_sidecar(base_dir)?;
        scenario.calibrate();
        let issues = scenario.validate();
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::Validation(issues))
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn calibrate(&mut self) {
        calibrate_influence(&mut self.personas);
    }

    fn resolve_sidecar(&mut self, base_dir: Option<&Path>) -> Result<()> {
        let Some(sidecar) = self.vectors.take() else {
            let dangling = self.topic_ref.is_some()
                || self
                    .timeline
                    .iter()
                    .any(|e| e.embedding_ref.is_some() || e.emotion_ref.is_some());
            if dangling {
                return Err(Error::Validation(vec![ValidationIssue::new(
                    "vectors",
                    "vector references present but no sidecar declared",
                )]));
            }
            return Ok(());
        };
        let data = sidecar.read(base_dir)?;
        let mut issues = Vec::new();
        let mut fetch = |path: String, name: &str| -> Option<Vec<f64>> {
            match sidecar.index.get(name) {
                Some(e) if e.offset.checked_add(e.len).is_some_and(|end| end <= data.len()) => {
                    Some(data[e.offset..e.offset + e.len].iter().map(|&x| f64::from(x)).collect())
                }
                Some(_) => {
                    issues.push(ValidationIssue::new(
                        path,
                        format!("sidecar entry {name:?} runs past the end of the file"),
                    ));
                    None
                }
                None => {
                    issues.push(ValidationIssue::new(path, format!("unknown sidecar entry {name:?}")));
                    None
                }
            }
        };
        if let Some(name) = self.topic_ref.take() {
            self.topic = fetch("topic_ref".into(), &name);
        }
        for (k, ev) in self.timeline.iter_mut().enumerate() {
            if let Some(name) = ev.embedding_ref.take() {
                ev.embedding = fetch(format!("timeline[{k}].embedding_ref"), &name);
            }
            if let Some(name) = ev.emotion_ref.take() {
                ev.emotion = fetch(format!("timeline[{k}].emotion_ref"), &name);
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// Every semantic problem with the document; empty when valid.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut v = Vec::new();
        let mut issue = |path: String, msg: String| v.push(ValidationIssue::new(path, msg));
        let cfg = &self.config;

        if self.schema_version != SCHEMA_VERSION {
            issue(
                "schema_version".into(),
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if self.name.trim().is_empty() {
            issue("name".into(), "must not be empty".into());
        }
        for (path, msg) in cfg.violations() {
            issue(format!("config.{path}"), msg);
        }

        let platforms: HashSet<&str> = cfg.platforms.iter().map(|p| p.platform_id.as_str()).collect();
        let dim = cfg.embedding_dim;
        let kdim = cfg.emotion_dim;
        let check_vec =
            |path: String, v: &[f64], expected: usize, bounded: bool, issue: &mut dyn FnMut(String, String)| {
                if v.len() != expected {
                    issue(path.clone(), format!("has dimension {}, expected {expected}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    issue(path.clone(), "contains non-finite values".into());
                } else if bounded && v.iter().any(|x| !(-1.0..=1.0).contains(x)) {
                    issue(path, "components must lie in [-1, 1]".into());
                }
            };

        // population
        let mut agent_ids: HashSet<&str> = HashSet::new();
        match (self.personas.is_empty(), &self.persona_library) {
            (true, None) => issue(
                "personas".into(),
                "either personas or persona_library is required".into(),
            ),
            (false, Some(_)) => issue(
                "persona_library".into(),
                "personas and persona_library are mutually exclusive".into(),
            ),
            _ => {}
        }
        if !self.personas.is_empty() && self.personas.len() != cfg.num_agents {
            issue(
                "personas".into(),
                format!(
                    "{} personas listed but config.num_agents is {}",
                    self.personas.len(),
                    cfg.num_agents
                ),
            );
        }
        for (k, p) in self.personas.iter().enumerate() {
            let path = format!("personas[{k}]");
            if p.agent_id.is_empty() {
                issue(format!("{path}.agent_id"), "must not be empty".into());
            } else if p.agent_id == ORGANIZATION {
                issue(format!("{path}.agent_id"), format!("{ORGANIZATION:?} is reserved"));
            } else if !agent_ids.insert(&p.agent_id) {
                issue(
                    format!("{path}.agent_id"),
                    format!("duplicate agent id {:?}", p.agent_id),
                );
            }
            if !platforms.contains(p.platform.as_str()) {
                issue(format!("{path}.platform"), format!("unknown platform {:?}", p.platform));
            }
            for msg in p.params.violations() {
                issue(format!("{path}.params"), msg);
            }
            if let Some(z) = &p.initial_persona {
                check_vec(format!("{path}.initial_persona"), z, dim, false, &mut issue);
                if z.iter().all(|x| *x == 0.0) {
                    issue(format!("{path}.initial_persona"), "must not be the zero vector".into());
                }
            }
            if let Some(z) = &p.prior {
                check_vec(format!("{path}.prior"), z, dim, false, &mut issue);
            }
            if !(0.0..=1.0).contains(&p.prior_mixing) {
                issue(format!("{path}.prior_mixing"), "must lie in [0, 1]".into());
            }
            for (w, win) in p.dormant.iter().enumerate() {
                if win.from > win.to {
                    issue(format!("{path}.dormant[{w}]"), "from must not exceed to".into());
                }
            }
        }
        if let Some(lib) = &self.persona_library {
            if lib.strata.is_empty() {
                issue("persona_library.strata".into(), "must not be empty".into());
            }
            let mut names = HashSet::new();
            let mut total = 0.0;
            for (k, s) in lib.strata.iter().enumerate() {
                let path = format!("persona_library.strata[{k}]");
                if s.name.is_empty() || !names.insert(s.name.as_str()) {
                    issue(
                        format!("{path}.name"),
                        format!("stratum names must be unique and non-empty ({:?})", s.name),
                    );
                }
                if !(s.weight >= 0.0 && s.weight.is_finite()) {
                    issue(format!("{path}.weight"), "must be a finite nonnegative number".into());
                } else {
                    total += s.weight;
                }
                if !platforms.contains(s.platform.as_str()) {
                    issue(format!("{path}.platform"), format!("unknown platform {:?}", s.platform));
                }
                if !(s.followers.mu.is_finite() && s.followers.sigma.is_finite() && s.followers.sigma >= 0.0) {
                    issue(
                        format!("{path}.followers"),
                        "mu must be finite and sigma nonnegative".into(),
                    );
                }
                for msg in s.params.violations() {
                    issue(format!("{path}.params"), msg);
                }
                if let Some(z) = &s.prior {
                    check_vec(format!("{path}.prior"), z, dim, false, &mut issue);
                }
                if !(0.0..=1.0).contains(&s.prior_mixing) {
                    issue(format!("{path}.prior_mixing"), "must lie in [0, 1]".into());
                }
            }
            if !lib.strata.is_empty() && !(total > 0.0) {
                issue(
                    "persona_library.strata".into(),
                    "weights must sum to a positive value".into(),
                );
            }
        }

        // networks
        let mut seen_networks = HashSet::new();
        for (k, net) in self.networks.iter().enumerate() {
            let path = format!("networks[{k}]");
            if !platforms.contains(net.platform_id.as_str()) {
                issue(
                    format!("{path}.platform_id"),
                    format!("unknown platform {:?}", net.platform_id),
                );
            }
            if !seen_networks.insert(net.platform_id.as_str()) {
                issue(format!("{path}.platform_id"), "duplicate network for platform".into());
            }
            match net.generator() {
                None => issue(path.clone(), "exactly one of edges or generator is required".into()),
                Some(g) => {
                    for msg in generator_violations(&g, cfg.num_agents) {
                        issue(path.clone(), msg);
                    }
                }
            }
        }

        // timeline
        let total_days = cfg.rounds;
        for (k, ev) in self.timeline.iter().enumerate() {
            let path = format!("timeline[{k}]");
            if !platforms.contains(ev.platform.as_str()) {
                issue(
                    format!("{path}.platform"),
                    format!("unknown platform {:?}", ev.platform),
                );
            }
            if ev.round > total_days {
                issue(
                    format!("{path}.round"),
                    format!("day {} is after the last day {total_days}", ev.round),
                );
            }
            if ev.author != ORGANIZATION && !self.personas.is_empty() && !agent_ids.contains(ev.author.as_str()) {
                issue(format!("{path}.author"), format!("unknown author {:?}", ev.author));
            }
            if ev.text.as_deref().is_none_or(|t| t.trim().is_empty()) && ev.embedding.is_none() {
                issue(path.clone(), "needs text or an embedding".into());
            }
            if ev.embedding.is_some() && ev.emotion.is_none() {
                issue(
                    format!("{path}.emotion"),
                    "required when an embedding is supplied".into(),
                );
            }
            if let Some(x) = &ev.embedding {
                check_vec(format!("{path}.embedding"), x, dim, false, &mut issue);
            }
            if let Some(q) = &ev.emotion {
                check_vec(format!("{path}.emotion"), q, kdim, true, &mut issue);
            }
            if let Some(i) = ev.author_influence {
                if !(0.0..=1.0).contains(&i) {
                    issue(format!("{path}.author_influence"), "must lie in [0, 1]".into());
                }
            }
            if let Targets::Agents(ids) = &ev.targets {
                if !self.personas.is_empty() {
                    let unknown: Vec<_> = ids.iter().filter(|id| !agent_ids.contains(id.as_str())).collect();
                    if !unknown.is_empty() {
                        issue(format!("{path}.targets"), format!("unknown agents {unknown:?}"));
                    }
                }
            }
        }

        if let Some(t) = &self.topic {
            check_vec("topic".into(), t, dim, false, &mut issue);
            if t.iter().all(|x| *x == 0.0) {
                issue("topic".into(), "must not be the zero vector".into());
            }
        } else if self.description.trim().is_empty() {
            issue(
                "topic".into(),
                "either a topic vector or a description is required".into(),
            );
        }

        if let Some(gt) = &self.ground_truth {
            let sum: f64 = gt.final_stances.iter().sum();
            if gt.final_stances.iter().any(|p| !(*p >= 0.0)) {
                issue(
                    "ground_truth.final_stances".into(),
                    "entries must be nonnegative".into(),
                );
            }
            if !((sum - 1.0).abs() <= 1e-9) {
                issue(
                    "ground_truth.final_stances".into(),
                    format!("must sum to 1 (sums to {sum})"),
                );
            }
            if gt.final_stances.len() != gt.stance_labels.len() {
                issue(
                    "ground_truth.stance_labels".into(),
                    format!(
                        "{} labels for {} stance shares",
                        gt.stance_labels.len(),
                        gt.final_stances.len()
                    ),
                );
            }
            if gt.stance_labels != cfg.stance_labels {
                issue(
                    "ground_truth.stance_labels".into(),
                    format!("must match config.stance_labels {:?}", cfg.stance_labels),
                );
            }
            for (k, w) in gt.trajectory.windows(2).enumerate() {
                if w[1].0 <= w[0].0 {
                    issue(
                        format!("ground_truth.trajectory[{}]", k + 1),
                        "rounds must be strictly increasing".into(),
                    );
                }
            }
            if gt.trajectory.iter().any(|(_, y)| !y.is_finite()) {
                issue("ground_truth.trajectory".into(), "values must be finite".into());
            }
        }
        v
    }
}

fn generator_violations(g: &NetworkGenerator, n: usize) -> Vec<String> {
    match g {
        NetworkGenerator::ExplicitEdges { edges } => {
            let mut out = Vec::new();
            for [i, u] in edges {
                if *i >= n || *u >= n {
                    out.push(format!("edge [{i}, {u}] out of range for {n} agents"));
                } else if i == u {
                    out.push(format!("self-loop on agent {i}"));
                }
            }
            out
        }
        NetworkGenerator::ErdosRenyi { p } => {
            if (0.0..=1.0).contains(p) {
                vec![]
            } else {
                vec![format!("erdos_renyi p = {p} is outside [0, 1]")]
            }
        }
        NetworkGenerator::PreferentialAttachment { m } => {
            if *m == 0 || *m >= n {
                vec![format!("preferential_attachment m = {m} must satisfy 1 <= m < n = {n}")]
            } else {
                vec![]
            }
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    Scenario::from_json_str(&text, path.parent())
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    fs::write(path, scenario.to_json_pretty() + "\n")?;
    Ok(())
}

/// Deterministic graph over `n` agents.
pub fn generate_network(
    platform_id: &str,
    generator: &NetworkGenerator,
    n: usize,
    seed: u64,
) -> Result<PlatformNetwork> {
    if let Some(msg) = generator_violations(generator, n).into_iter().next() {
        return Err(Error::config(msg));
    }
    let mut rng = StreamFactory::new(seed).stream(INIT_ROUND, NETWORK_SLOT);
    match generator {
        NetworkGenerator::ExplicitEdges { edges } => {
            PlatformNetwork::new(platform_id, n, edges.iter().map(|[i, u]| (*i, *u)))
        }
        NetworkGenerator::ErdosRenyi { p } => {
            let mut edges = Vec::new();
            for i in 0..n {
                for u in 0..n {
                    if i != u && rng.random::<f64>() < *p {
                        edges.push((i, u));
                    }
                }
            }
            PlatformNetwork::new(platform_id, n, edges)
        }
        NetworkGenerator::PreferentialAttachment { m } => {
            let m = *m;
            let mut edges = Vec::new();
            // endpoint multiset: sampling from it is degree-proportional
            let mut ends: Vec<usize> = Vec::new();
            for a in 0..=m.min(n - 1) {
                for b in 0..a {
                    edges.push((a, b));
                    edges.push((b, a));
                    ends.push(a);
                    ends.push(b);
                }
            }
            for t in (m + 1)..n {
                let mut chosen: Vec<usize> = Vec::with_capacity(m);
                while chosen.len() < m {
                    let cand = ends[rng.random_range(0..ends.len())];
                    if !chosen.contains(&cand) {
                        chosen.push(cand);
                    }
                }
                for &c in &chosen {
                    edges.push((t, c));
                    edges.push((c, t));
                    ends.push(t);
                    ends.push(c);
                }
            }
            PlatformNetwork::new(platform_id, n, edges)
        }
    }
}

/// Largest-remainder allocation of `n` across `weights`. Ties in the
/// fractional parts are broken by `tiebreak` (lower rank first).
pub fn allocate(weights: &[f64], n: usize, tiebreak: &[usize]) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::config(
            "stratum weights must be nonnegative and sum to a positive value",
        ));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(tiebreak[a].cmp(&tiebreak[b]))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    Ok(counts)
}

/// Stratified sample of `n` agent profiles, proportional to stratum weights.
pub fn sample_personas(library: &PersonaLibrary, n: usize, seed: u64) -> Result<Vec<AgentProfile>> {
    if library.strata.is_empty() {
        return Err(Error::config("persona library is empty"));
    }
    if n == 0 {
        return Err(Error::config("cannot sample zero personas"));
    }
    let mut rng = StreamFactory::new(seed).stream(INIT_ROUND, PERSONA_SLOT);
    let mut tiebreak: Vec<usize> = (0..library.strata.len()).collect();
    tiebreak.shuffle(&mut rng);
    let weights: Vec<f64> = library.strata.iter().map(|s| s.weight).collect();
    let counts = allocate(&weights, n, &tiebreak)?;

    let mut profiles = Vec::with_capacity(n);
    for (stratum, &count) in library.strata.iter().zip(&counts) {
        let followers = LogNormal::new(stratum.followers.mu, stratum.followers.sigma)
            .map_err(|e| Error::config(format!("stratum {:?} followers: {e}", stratum.name)))?;
        let seed_text = if stratum.descriptors.is_empty() {
            stratum.name.clone()
        } else {
            stratum
                .descriptors
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        for k in 0..count {
            let mut p = AgentProfile::new(format!("{}-{k:03}", stratum.name), stratum.platform.clone(), 0);
            p.followers = followers.sample(&mut rng).round().min(1e15) as u64;
            p.params = stratum.params.sample(&mut rng);
            p.persona_seed = seed_text.clone();
            p.prior = stratum.prior.clone();
            p.prior_mixing = stratum.prior_mixing;
            profiles.push(p);
        }
    }
    calibrate_influence(&mut profiles);
    Ok(profiles)
}

/// Reads a `round,value` CSV (with header) into trajectory points.
pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<(u32, f64)>> {
    let text = fs::read_to_string(path)?;
    parse_trajectory_csv(&text)
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<(u32, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.len() != 2 || &headers[0] != "round" || &headers[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!(
                "expected header `round,value`, got {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<(u32, f64)>() {
        out.push(row.map_err(csv_error)?);
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 1,
        message: e.to_string(),
    }
}
