//! Seeded discrete-event simulator: scenario configuration, the event
//! engine, and metric reporting.

mod engine;
mod metrics;
pub mod rng;
mod scenario;

pub use engine::{
    run_scenario, run_scenario_outcome, run_scenario_traced, CountingProvider, CryptoCounters,
    SimMessage, SimOutcome,
};
pub use metrics::{
    latency_stats, AuthMetrics, CryptoMetrics, LatencyStats, MetricsReport, NetworkMetrics,
    NodeReport, TxMetrics,
};
pub use scenario::{
    Action, Fault, FeeParamsConfig, GenesisConfig, LatencySpec, LinkDecl, NodeDecl, RoleDecl,
    Scenario, ScenarioError, TimedAction, Topology, SCENARIO_SCHEMA_VERSION,
};
