//! HTTP control API: create simulations, step them one round at a time with
//! optional strategy injection, and read snapshots and fidelity reports.
//!
//! Each simulation owns an exclusive execution permit; a step request that
//! cannot take it immediately is refused with 409. Readers only ever see the
//! snapshot published after the last completed round.

mod error;
mod model;
mod persist;

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use cascade_core::engine::RoundTrace;
use cascade_core::metrics::{aggregate_seeds, build_report};
use cascade_core::scenario::{EventKind, Targets, TimelineEvent};
use cascade_core::state::ORGANIZATION;
use cascade_core::{run_scenario, strategy_acceptance, ProviderSpec, Scenario, TextProvider, World};
use rayon::prelude::*;
use tokio::net::TcpListener;
use tokio::sync::OwnedMutexGuard;

pub use error::{ApiError, ErrorEnvelope};
pub use model::*;

/// Builds the text provider for a scenario.
pub type ProviderFactory = Arc<dyn Fn(&Scenario) -> cascade_core::Result<Arc<dyn TextProvider>> + Send + Sync>;

pub fn provider_factory(spec: ProviderSpec) -> ProviderFactory {
    Arc::new(move |s: &Scenario| spec.build(s.config.embedding_dim, s.config.emotion_dim))
}

/// Scenarios bundled with the service, addressable by name.
pub fn bundled_cases() -> BTreeMap<String, Scenario> {
    let docs = [
        ("flagship", include_str!("../../../scenarios/flagship.json")),
        ("minimal", include_str!("../../../scenarios/minimal.json")),
    ];
    docs.into_iter()
        .map(|(name, text)| {
            (
                name.to_string(),
                Scenario::from_json_str(text, None).expect("bundled scenario is valid"),
            )
        })
        .collect()
}

struct Published {
    snapshot: Arc<Snapshot>,
    traces: Arc<Vec<RoundTrace>>,
}

struct Instance {
    id: String,
    scenario: Arc<Scenario>,
    seed: u64,
    total_rounds: u32,
    initial_alignment: Arc<Vec<f64>>,
    permit: Arc<tokio::sync::Mutex<World>>,
    status: Mutex<Status>,
    published: RwLock<Arc<Published>>,
}

impl Instance {
    fn new(
        id: String,
        scenario: Scenario,
        seed: u64,
        world: World,
        traces: Vec<RoundTrace>,
        snapshot: Snapshot,
    ) -> Self {
        let status = if world.is_finished() {
            Status::Finished
        } else {
            Status::AwaitingInput
        };
        Self {
            total_rounds: world.config().total_rounds(),
            initial_alignment: Arc::new(world.initial_alignment().to_vec()),
            id,
            scenario: Arc::new(scenario),
            seed,
            permit: Arc::new(tokio::sync::Mutex::new(world)),
            status: Mutex::new(status),
            published: RwLock::new(Arc::new(Published {
                snapshot: Arc::new(snapshot),
                traces: Arc::new(traces),
            })),
        }
    }

    fn published(&self) -> Arc<Published> {
        self.published.read().expect("published lock").clone()
    }

    fn status(&self) -> Status {
        *self.status.lock().expect("status lock")
    }

    fn set_status(&self, s: Status) {
        *self.status.lock().expect("status lock") = s;
    }

    fn handle(&self) -> SimulationHandle {
        SimulationHandle {
            id: self.id.clone(),
            status: self.status(),
            current_round: self.published().snapshot.round,
            total_rounds: self.total_rounds,
            scenario: self.scenario.name.clone(),
            seed: self.seed,
        }
    }
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    registry: RwLock<HashMap<String, Arc<Instance>>>,
    next_id: AtomicU64,
    provider: ProviderFactory,
    persist: Option<PathBuf>,
    cases: BTreeMap<String, Scenario>,
}

impl AppState {
    pub fn new(provider: ProviderFactory, persist: Option<PathBuf>) -> Self {
        Self {
            inner: Arc::new(Inner {
                registry: RwLock::new(HashMap::new()),
                next_id: AtomicU64::new(1),
                provider,
                persist,
                cases: bundled_cases(),
            }),
        }
    }

    /// Restores every simulation found in the persistence directory by
    /// replaying its recorded rounds. Returns the number restored.
    pub fn restore(&self) -> cascade_core::Result<usize> {
        let Some(dir) = &self.inner.persist else {
            return Ok(0);
        };
        let mut restored = 0;
        for saved in persist::list(dir)? {
            let id = saved.id.clone();
            match self.replay(saved) {
                Ok(inst) => {
                    if let Some(n) = id.strip_prefix("sim-").and_then(|n| n.parse::<u64>().ok()) {
                        self.inner.next_id.fetch_max(n + 1, Ordering::SeqCst);
                    }
                    self.inner
                        .registry
                        .write()
                        .expect("registry lock")
                        .insert(id, Arc::new(inst));
                    restored += 1;
                }
                Err(e) => tracing::warn!("could not restore {id}: {e}"),
            }
        }
        Ok(restored)
    }

    fn replay(&self, saved: persist::Saved) -> cascade_core::Result<Instance> {
        let provider = (self.inner.provider)(&saved.scenario)?;
        let mut world = World::new(&saved.scenario, saved.seed, provider)?;
        let mut snapshot = Snapshot::initial(&saved.id, &world);
        let mut traces = Vec::new();
        for record in saved.rounds {
            if let Some((event, label)) = record.strategy {
                world.inject_message(event, label)?;
            }
            let trace = world.step()?;
            if trace.rng_digest != record.trace.rng_digest {
                return Err(cascade_core::Error::precondition(format!(
                    "replay of round {} diverged from the recorded trace",
                    trace.round
                )));
            }
            snapshot.refresh(&world, Some(&trace));
            traces.push(trace);
        }
        Ok(Instance::new(
            saved.id,
            saved.scenario,
            saved.seed,
            world,
            traces,
            snapshot,
        ))
    }

    fn get(&self, id: &str) -> Result<Arc<Instance>, ApiError> {
        self.inner
            .registry
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    fn resolve_scenario(&self, inline: Option<serde_json::Value>, case: Option<String>) -> Result<Scenario, ApiError> {
        match (inline, case) {
            (Some(doc), None) => Ok(Scenario::from_json_str(&doc.to_string(), None)?),
            (None, Some(name)) => self.inner.cases.get(&name).cloned().ok_or_else(|| {
                ApiError::BadRequest(format!(
                    "unknown case {name:?}; known: {:?}",
                    self.inner.cases.keys().collect::<Vec<_>>()
                ))
            }),
            _ => Err(ApiError::BadRequest(
                "provide exactly one of `scenario` or `case`".into(),
            )),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/cases", get(list_cases))
        .route("/v1/simulations", post(create).get(list))
        .route("/v1/simulations/{id}", get(handle))
        .route("/v1/simulations/{id}/rounds", post(step))
        .route("/v1/simulations/{id}/state", get(state_snapshot))
        .route("/v1/simulations/{id}/report", get(report))
        .route("/v1/batches", post(batch))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(
    body: &Bytes,
    malformed: impl Fn(String) -> ApiError,
) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| malformed(e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn list_cases(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.inner.cases.keys().cloned().collect())
}

async fn list(State(app): State<AppState>) -> Json<Vec<SimulationHandle>> {
    let mut handles: Vec<_> = app
        .inner
        .registry
        .read()
        .expect("registry lock")
        .values()
        .map(|i| i.handle())
        .collect();
    handles.sort_by(|a, b| a.id.cmp(&b.id));
    Json(handles)
}

async fn create(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<SimulationHandle>), ApiError> {
    let req: CreateRequest = parse_body(&body, ApiError::BadRequest)?;
    let scenario = app.resolve_scenario(req.scenario, req.case)?;
    let seed = req.seed.unwrap_or(scenario.config.seed);
    let id = format!("sim-{}", app.inner.next_id.fetch_add(1, Ordering::SeqCst));
    let provider = (app.inner.provider)(&scenario)?;
    let app2 = app.clone();
    let id2 = id.clone();
    let inst = tokio::task::spawn_blocking(move || -> Result<Instance, ApiError> {
        let world = World::new(&scenario, seed, provider)?;
        if let Some(dir) = &app2.inner.persist {
            persist::create(dir, &id2, &scenario, seed)?;
        }
        let snapshot = Snapshot::initial(&id2, &world);
        Ok(Instance::new(id2, scenario, seed, world, Vec::new(), snapshot))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let inst = Arc::new(inst);
    app.inner
        .registry
        .write()
        .expect("registry lock")
        .insert(id, inst.clone());
    Ok((StatusCode::CREATED, Json(inst.handle())))
}

async fn handle(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SimulationHandle>, ApiError> {
    Ok(Json(app.get(&id)?.handle()))
}

async fn state_snapshot(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Arc<Snapshot>>, ApiError> {
    Ok(Json(app.get(&id)?.published().snapshot.clone()))
}

async fn report(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<cascade_core::FidelityReport>, ApiError> {
    let inst = app.get(&id)?;
    let published = inst.published();
    if published.traces.is_empty() {
        return Err(ApiError::Conflict("no round has completed yet".into()));
    }
    let report = build_report(&inst.scenario, inst.seed, &inst.initial_alignment, &published.traces)?;
    Ok(Json(report))
}

fn strategy_event(world: &World, input: StrategyInput, round: u32) -> Result<(TimelineEvent, String), ApiError> {
    let cfg = world.config();
    let text = input.text.filter(|t| !t.trim().is_empty());
    if text.is_none() && input.embedding.is_none() {
        return Err(ApiError::Unprocessable(
            "a strategy needs `text` or an `embedding`".into(),
        ));
    }
    if let Some(x) = &input.embedding {
        if x.len() != cfg.embedding_dim || x.iter().any(|v| !v.is_finite()) {
            return Err(ApiError::Unprocessable(format!(
                "embedding must have {} finite components",
                cfg.embedding_dim
            )));
        }
        if input.emotion.is_none() && text.is_none() {
            return Err(ApiError::Unprocessable(
                "an embedding-only strategy also needs `emotion`".into(),
            ));
        }
    }
    if let Some(q) = &input.emotion {
        if q.len() != cfg.emotion_dim || q.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(ApiError::Unprocessable(format!(
                "emotion must have {} components in [-1, 1]",
                cfg.emotion_dim
            )));
        }
    }
    if let Some(i) = input.author_influence {
        if !(i.is_finite() && i >= 0.0) {
            return Err(ApiError::Unprocessable(
                "author_influence must be finite and nonnegative".into(),
            ));
        }
    }
    let platform = match input.platform {
        Some(p) if cfg.platforms.iter().any(|q| q.platform_id == p) => p,
        Some(p) => return Err(ApiError::Unprocessable(format!("unknown platform {p:?}"))),
        None => cfg.platforms[0].platform_id.clone(),
    };
    let label = input.label.unwrap_or_else(|| format!("strategy@{round}"));
    Ok((
        TimelineEvent {
            round,
            kind: EventKind::Strategy,
            author: ORGANIZATION.to_string(),
            platform,
            text,
            embedding: input.embedding,
            emotion: input.emotion,
            embedding_ref: None,
            emotion_ref: None,
            targets: input.targets.unwrap_or_else(Targets::all),
            author_influence: input.author_influence,
            label: Some(label.clone()),
        },
        label,
    ))
}

struct StepOutcome {
    trace: RoundTrace,
    verdict: Option<(cascade_core::StrategyVerdict, cascade_core::MessageId)>,
    snapshot: Snapshot,
}

fn max_r(records: &[cascade_core::engine::ReproductionRecord]) -> f64 {
    records.iter().map(|r| r.r).fold(0.0, f64::max)
}

fn run_step(
    world: &mut World,
    strategy: Option<(TimelineEvent, String)>,
    snapshot: &Snapshot,
) -> Result<StepOutcome, ApiError> {
    let before = strategy.as_ref().map(|_| world.clone());
    let label = strategy.as_ref().map(|(_, l)| l.clone());
    if let Some((event, label)) = strategy {
        world.inject_message(event, label)?;
    }
    let trace = match world.step() {
        Ok(t) => t,
        Err(e) => {
            world.discard_queued();
            return Err(e.into());
        }
    };
    let verdict = match (before, label) {
        (Some(before), Some(label)) => {
            let strategy_id = trace
                .injected
                .iter()
                .find(|i| i.kind == EventKind::Strategy && i.label == label)
                .map(|i| i.message)
                .ok_or_else(|| ApiError::Internal("strategy was not injected".into()))?;
            // judge the strategy by what it does to the latest crisis event
            let reference = world
                .tracked()
                .iter()
                .rev()
                .find(|t| t.kind == EventKind::Event)
                .map_or(strategy_id, |t| t.message);
            let msg = world.message(reference).expect("tracked message exists").clone();
            let r_before = max_r(&before.reproduction_for(&msg, &label)?);
            let r_after = max_r(&world.reproduction_for(&msg, &label)?);
            Some((strategy_acceptance(r_before, r_after), reference))
        }
        _ => None,
    };
    let mut snapshot = snapshot.clone();
    snapshot.refresh(world, Some(&trace));
    Ok(StepOutcome {
        trace,
        verdict,
        snapshot,
    })
}

async fn step(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RoundResponse>, ApiError> {
    let inst = app.get(&id)?;
    let req: RoundRequest = parse_body(&body, ApiError::Unprocessable)?;
    let mut guard: OwnedMutexGuard<World> = inst
        .permit
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::Conflict(format!("a round of {id} is already running")))?;
    match inst.status() {
        Status::Finished => return Err(ApiError::Conflict(format!("{id} has finished all rounds"))),
        Status::Failed => return Err(ApiError::Conflict(format!("{id} has failed"))),
        _ => {}
    }
    if guard.is_finished() {
        inst.set_status(Status::Finished);
        return Err(ApiError::Conflict(format!("{id} has finished all rounds")));
    }
    let round = guard.round() + 1;
    let strategy = req.strategy.map(|s| strategy_event(&guard, s, round)).transpose()?;
    inst.set_status(Status::RunningRound);

    let inst2 = inst.clone();
    let persist_dir = app.inner.persist.clone();
    let result = tokio::task::spawn_blocking(move || {
        let published = inst2.published();
        let outcome = run_step(&mut guard, strategy.clone(), &published.snapshot)?;
        if let Some(dir) = &persist_dir {
            persist::write_round(
                dir,
                &inst2.id,
                &RoundRecord {
                    strategy,
                    trace: outcome.trace.clone(),
                },
            )?;
        }
        let mut traces = published.traces.as_ref().clone();
        traces.push(outcome.trace.clone());
        *inst2.published.write().expect("published lock") = Arc::new(Published {
            snapshot: Arc::new(outcome.snapshot.clone()),
            traces: Arc::new(traces),
        });
        let finished = guard.is_finished();
        drop(guard);
        Ok::<_, ApiError>((outcome, finished))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?;

    match result {
        Ok((outcome, finished)) => {
            inst.set_status(if finished {
                Status::Finished
            } else {
                Status::AwaitingInput
            });
            let t = &outcome.trace;
            Ok(Json(RoundResponse {
                handle: inst.handle(),
                round: t.round,
                evaluated: t.evaluated,
                engaged: t.engaged_count(),
                posts: t.posts.len(),
                reproduction: t.reproduction.clone(),
                verdict: outcome.verdict.map(|v| v.0),
                verdict_message: outcome.verdict.map(|v| v.1),
                rng_digest: t.rng_digest.clone(),
                notes: t.notes.clone(),
            }))
        }
        Err(e) => {
            // provider failures roll the round back and may be retried
            let retryable = matches!(e, ApiError::Core(cascade_core::Error::Provider(_)));
            inst.set_status(if retryable {
                Status::AwaitingInput
            } else {
                Status::Failed
            });
            Err(e)
        }
    }
}

async fn batch(State(app): State<AppState>, body: Bytes) -> Result<Json<BatchResponse>, ApiError> {
    let req: BatchRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    if req.seeds.is_empty() {
        return Err(ApiError::BadRequest("at least one seed is required".into()));
    }
    let scenario = app.resolve_scenario(req.scenario, req.case)?;
    let provider = (app.inner.provider)(&scenario)?;
    let response = tokio::task::spawn_blocking(move || -> Result<BatchResponse, ApiError> {
        let reports = req
            .seeds
            .par_iter()
            .map(|&seed| {
                let out = run_scenario(&scenario, seed, provider.clone())?;
                build_report(&scenario, seed, &out.initial_alignment, &out.traces)
            })
            .collect::<cascade_core::Result<Vec<_>>>()?;
        let aggregate = aggregate_seeds(&reports)?;
        Ok(BatchResponse { reports, aggregate })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(response))
}
