//! Python bindings. Structured results cross the boundary as plain
//! dicts and lists through their JSON form.

use std::path::PathBuf;

use cascade_core::metrics::{jsd_raw, pearson as pearson_corr, simulated_trajectory};
use cascade_core::network::{
    spectral_radius as power_radius, strategy_acceptance as acceptance, DenseMatrix, DEFAULT_SPECTRAL_MAX_ITER,
    DEFAULT_SPECTRAL_TOL,
};
use cascade_core::scenario::TimelineEvent;
use cascade_core::state::{activation_probability as activation, dual_update as update};
use cascade_core::{
    aggregate_seeds, build_report, run_scenario as run_core, AgentParams, AgentState, Error, Message, MessageId,
    ProviderSpec, RoundTrace,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(cascade, CascadeError, PyException, "Raised for any simulator error.");
create_exception!(
    cascade,
    UndefinedCorrelation,
    CascadeError,
    "Pearson correlation of a constant series."
);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::UndefinedCorrelation(m) => UndefinedCorrelation::new_err(m),
        other => CascadeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| CascadeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| CascadeError::new_err(e.to_string()))
}

fn provider(spec: &str, dim: usize, emotion_dim: usize) -> PyResult<std::sync::Arc<dyn cascade_core::TextProvider>> {
    ProviderSpec::parse(spec)
        .and_then(|s| s.build(dim, emotion_dim))
        .map_err(py_err)
}

/// A validated scenario document.
#[pyclass(module = "cascade", frozen)]
struct Scenario {
    inner: cascade_core::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cascade_core::load_scenario(path)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        cascade_core::Scenario::from_json_str(text, None)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_dict(value: &Bound<'_, PyAny>) -> PyResult<Self> {
        let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.config.num_agents
    }

    #[getter]
    fn rounds(&self) -> u32 {
        self.inner.config.total_rounds()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.config.embedding_dim
    }

    #[getter]
    fn emotion_dim(&self) -> usize {
        self.inner.config.emotion_dim
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, agents={}, rounds={})",
            self.inner.name,
            self.inner.config.num_agents,
            self.inner.config.total_rounds()
        )
    }
}

/// A running simulation that is stepped one round at a time.
#[pyclass(module = "cascade")]
struct World {
    inner: cascade_core::World,
    scenario: cascade_core::Scenario,
    traces: Vec<RoundTrace>,
}

#[pymethods]
impl World {
    #[new]
    #[pyo3(signature = (scenario, seed, provider = "local"))]
    fn new(scenario: &Scenario, seed: u64, provider: &str) -> PyResult<Self> {
        let cfg = &scenario.inner.config;
        let p = self::provider(provider, cfg.embedding_dim, cfg.emotion_dim)?;
        let inner = cascade_core::World::new(&scenario.inner, seed, p).map_err(py_err)?;
        Ok(Self {
            inner,
            scenario: scenario.inner.clone(),
            traces: Vec::new(),
        })
    }

    #[getter]
    fn round(&self) -> u32 {
        self.inner.round()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn agent_ids(&self) -> Vec<String> {
        self.inner.profiles().iter().map(|p| p.agent_id.clone()).collect()
    }

    /// Persona-topic alignment of every agent.
    fn alignment(&self) -> Vec<f64> {
        self.inner.alignment()
    }

    fn initial_alignment(&self) -> Vec<f64> {
        self.inner.initial_alignment().to_vec()
    }

    /// Per-agent `{"agent", "persona", "affect", "memories"}` dicts.
    fn states<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows: Vec<serde_json::Value> = self
            .inner
            .profiles()
            .iter()
            .zip(self.inner.states())
            .map(|(p, s)| {
                serde_json::json!({
                    "agent": p.agent_id,
                    "persona": s.persona,
                    "affect": s.affect,
                    "memories": s.memory.len(),
                })
            })
            .collect();
        to_py(py, &rows)
    }

    /// Queues a timeline event (as a dict) for the next round.
    #[pyo3(signature = (event, label = "injected"))]
    fn inject(&mut self, event: &Bound<'_, PyAny>, label: &str) -> PyResult<()> {
        let event: TimelineEvent = from_py(event)?;
        self.inner.inject_message(event, label).map_err(py_err)
    }

    /// Executes one round and returns its trace.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let inner = &mut self.inner;
        let trace = py.detach(|| inner.step()).map_err(py_err)?;
        let out = to_py(py, &trace)?;
        self.traces.push(trace);
        Ok(out)
    }

    /// Runs the remaining rounds and returns their round summaries.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let mut summaries = Vec::new();
        while !self.inner.is_finished() {
            let inner = &mut self.inner;
            let trace = py.detach(|| inner.step()).map_err(py_err)?;
            summaries.push(trace.summary());
            self.traces.push(trace);
        }
        to_py(py, &summaries)
    }

    /// Reproduction coefficient of a message on every platform under the
    /// current agent states.
    #[pyo3(signature = (message_id, label = "query"))]
    fn reproduction<'py>(&self, py: Python<'py>, message_id: u64, label: &str) -> PyResult<Bound<'py, PyAny>> {
        let records = self
            .inner
            .reproduction_of(MessageId(message_id), label)
            .map_err(py_err)?;
        to_py(py, &records)
    }

    /// Opinion-index trajectory from round 0 through the last executed
    /// round.
    fn trajectory(&self) -> PyResult<Vec<(u32, f64)>> {
        simulated_trajectory(self.inner.initial_alignment(), &self.traces)
            .map(|t| t.points)
            .map_err(py_err)
    }

    /// Fidelity report over the rounds executed so far.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = build_report(
            &self.scenario,
            self.inner.seed(),
            self.inner.initial_alignment(),
            &self.traces,
        )
        .map_err(py_err)?;
        to_py(py, &report)
    }
}

/// Runs the scenario once per seed and returns the seed-averaged report.
#[pyfunction]
#[pyo3(signature = (scenario, seeds, provider = "local"))]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario: &Scenario,
    seeds: Vec<u64>,
    provider: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = &scenario.inner.config;
    let p = self::provider(provider, cfg.embedding_dim, cfg.emotion_dim)?;
    let s = &scenario.inner;
    let report = py
        .detach(|| {
            let reports = seeds
                .iter()
                .map(|&seed| {
                    let out = run_core(s, seed, p.clone())?;
                    build_report(s, seed, &out.initial_alignment, &out.traces)
                })
                .collect::<cascade_core::Result<Vec<_>>>()?;
            aggregate_seeds(&reports)
        })
        .map_err(py_err)?;
    to_py(py, &report)
}

fn params_from(py_params: Option<&Bound<'_, PyAny>>) -> PyResult<AgentParams> {
    let params = match py_params {
        None => AgentParams::default(),
        Some(obj) => {
            let mut base = serde_json::to_value(AgentParams::default()).expect("params serialize");
            let overrides: serde_json::Map<String, serde_json::Value> = from_py(obj)?;
            for (k, v) in overrides {
                if base.get(&k).is_none() {
                    return Err(CascadeError::new_err(format!("unknown agent parameter {k:?}")));
                }
                base[&k] = v;
            }
            serde_json::from_value(base).map_err(|e| CascadeError::new_err(e.to_string()))?
        }
    };
    params.validate().map_err(py_err)?;
    Ok(params)
}

fn message(embedding: Vec<f64>, emotion: Vec<f64>) -> Message {
    Message {
        id: MessageId(0),
        content_embedding: embedding.into(),
        emotion: emotion.into(),
        author: "python".into(),
        platform: "python".into(),
        round: 1,
        cascade: MessageId(0),
        text: None,
    }
}

/// One dual update of persona and affect for an engaged message. `params`
/// overrides individual agent parameters.
#[pyfunction]
#[pyo3(signature = (persona, affect, embedding, emotion, params = None))]
fn dual_update<'py>(
    py: Python<'py>,
    persona: Vec<f64>,
    affect: Vec<f64>,
    embedding: Vec<f64>,
    emotion: Vec<f64>,
    params: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = params_from(params)?;
    let state = AgentState::new(&persona, affect, 1).map_err(py_err)?;
    let up = update(&state, &message(embedding, emotion), &params).map_err(py_err)?;
    to_py(
        py,
        &serde_json::json!({
            "persona": up.persona,
            "affect": up.affect,
            "gate": up.gate,
            "increment": up.increment,
        }),
    )
}

/// Engagement probability of an agent for a message, given the retrieved
/// context, sender influence, and platform weights `(w1, w2, w3, w4, bias)`.
#[pyfunction]
#[pyo3(signature = (persona, affect, context, embedding, emotion, influence, weights, params = None))]
#[allow(clippy::too_many_arguments)]
fn activation_probability(
    persona: Vec<f64>,
    affect: Vec<f64>,
    context: Vec<f64>,
    embedding: Vec<f64>,
    emotion: Vec<f64>,
    influence: f64,
    weights: (f64, f64, f64, f64, f64),
    params: Option<&Bound<'_, PyAny>>,
) -> PyResult<f64> {
    let params = params_from(params)?;
    let state = AgentState::new(&persona, affect, 1).map_err(py_err)?;
    let (w1, w2, w3, w4, bias) = weights;
    let platform = cascade_core::network::PlatformParams {
        platform_id: "python".into(),
        w1,
        w2,
        w3,
        w4,
        bias,
    };
    activation(
        &state,
        &context,
        &message(embedding, emotion),
        influence,
        &platform,
        &params,
    )
    .map_err(py_err)
}

/// Spectral radius of a square nonnegative matrix by power iteration.
/// Returns `(radius, converged, iterations)`.
#[pyfunction]
#[pyo3(signature = (matrix, tol = DEFAULT_SPECTRAL_TOL, max_iter = DEFAULT_SPECTRAL_MAX_ITER))]
fn spectral_radius(matrix: Vec<Vec<f64>>, tol: f64, max_iter: usize) -> PyResult<(f64, bool, usize)> {
    let m = DenseMatrix::from_rows(&matrix).map_err(py_err)?;
    let est = power_radius(&m, tol, max_iter).map_err(py_err)?;
    Ok((est.radius, est.converged, est.iterations))
}

/// Strategy verdict: accepted when the reproduction coefficient after the
/// strategy is below one.
#[pyfunction]
fn strategy_acceptance<'py>(py: Python<'py>, r_before: f64, r_after: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &acceptance(r_before, r_after))
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    pearson_corr(&a, &b).map_err(py_err)
}

/// Jensen-Shannon divergence in bits.
#[pyfunction]
fn jsd(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    jsd_raw(&p, &q).map_err(py_err)
}

#[pymodule]
fn cascade(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CascadeError", m.py().get_type::<CascadeError>())?;
    m.add("UndefinedCorrelation", m.py().get_type::<UndefinedCorrelation>())?;
    m.add_class::<Scenario>()?;
    m.add_class::<World>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(dual_update, m)?)?;
    m.add_function(wrap_pyfunction!(activation_probability, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(strategy_acceptance, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(jsd, m)?)?;
    Ok(())
}
