//! Decentralized trust aggregation: interaction ledgers, local trust rules,
//! credibility weighting, propagation kernels, threat models, an agent-based
//! simulator and closed-form attack-cost analytics.

pub mod attack;
pub mod experiments;
pub mod ledger;
pub mod local_trust;
pub mod metrics;
pub mod par;
pub mod propagation;
pub mod simulation;
pub mod threats;

pub use ledger::{HonestyTag, InteractionLedger, ParticipantId, RatingEvent, ServiceOutcome};
pub use metrics::{builtin_metrics, metric_by_name, MetricState, TrustMetricSpec};
pub use par::Execution;
pub use propagation::GlobalTrustVector;
pub use simulation::{run_experiment, ExperimentReport, SimulationConfig};
pub use threats::{ThreatModel, ThreatModelConfig};
