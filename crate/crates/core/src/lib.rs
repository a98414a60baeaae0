//! Agent-based simulation of information cascades during public crises.
//!
//! Agents carry a unit-norm semantic persona, an affect vector, and an
//! episodic memory. Messages spread over per-platform follower graphs; each
//! delivery is accepted with a logistic engagement probability, and the
//! spectral radius of the edgewise probability matrix gives a cascade's
//! reproduction coefficient.

// range checks are written `!(x >= lo)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod providers;
pub mod rng;
pub mod scenario;
pub mod state;
pub mod vector;

pub use engine::{run_scenario, run_world, RoundSummary, RoundTrace, RunOutput, SimulationConfig, World};
pub use error::{Error, Result, ValidationIssue};
pub use metrics::{aggregate_seeds, build_report, jsd, pearson_r, FidelityReport, StanceDistribution, Trajectory};
pub use network::{
    reproduction_coefficient, spectral_radius, strategy_acceptance, AgentProfile, DenseMatrix, PlatformNetwork,
    PlatformParams, SpectralEstimate, StrategyVerdict,
};
pub use providers::{ProviderKind, ProviderSpec, TextProvider};
pub use scenario::{load_scenario, save_scenario, Scenario};
pub use state::{dual_update, retrieve_context, AgentParams, AgentState, Message, MessageId};
