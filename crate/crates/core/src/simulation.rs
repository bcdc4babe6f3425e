//! Agent-based transaction engine.
//!
//! Participants `0..n_good` are good (the first `n_pretrusted` of them
//! pre-trusted); `n_good..n_good + n_malicious` are malicious.
//!
//! Two ChaCha8 streams derived from the seed drive a run. Per transaction
//! the arrival stream yields the client and then the candidate responders;
//! the behavior stream yields exactly three uniforms, in order: server
//! selection, service outcome, rating. Draw counts never depend on the
//! metric, so replicas of one seed under different metrics share arrivals.
//!
//! Under ring-based models every ring member rates its successor once,
//! before the first transaction. Those ratings carry no service and are
//! kept out of the failure accounting.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ledger::{
    HonestyTag, InteractionLedger, LedgerError, ParticipantId, RatingEvent, ServiceOutcome,
};
use crate::metrics::{metric_by_name, MetricError, MetricState, TrustMetricSpec};
use crate::par::{self, Execution};
use crate::propagation::{GlobalTrustVector, PreTrustVector, PropagationError, DEFAULT_EPSILON};
use crate::threats::{
    build_chain, decide_rating, decide_service, BehaviorProfile, Role, ThreatError, ThreatModel,
    ThreatModelConfig, CHAIN_RATING, DEFAULT_NOISE,
};

const ARRIVAL_STREAM: u64 = 0;
const BEHAVIOR_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no candidate responders")]
    EmptyCandidates,
    #[error("participant {0} does not exist in this run")]
    UnknownParticipant(ParticipantId),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Threat(#[from] ThreatError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_good: usize,
    pub n_malicious: usize,
    pub n_pretrusted: usize,
    pub transactions: usize,
    pub metric: String,
    pub threat: ThreatModelConfig,
    pub explore_p: f64,
    pub responders_k: usize,
    pub reeval_every: usize,
    pub seed: u64,
    /// Rating noise of good participants.
    pub noise: f64,
    pub epsilon: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_good: 60,
            n_malicious: 40,
            n_pretrusted: 3,
            transactions: 1000,
            metric: "EigenTrust".into(),
            threat: ThreatModelConfig::new(ThreatModel::A),
            explore_p: 0.1,
            responders_k: 5,
            reeval_every: 30,
            seed: 0,
            noise: DEFAULT_NOISE,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SimulationConfig {
    pub fn n(&self) -> usize {
        self.n_good + self.n_malicious
    }

    pub fn malicious_ids(&self) -> Vec<ParticipantId> {
        (self.n_good..self.n()).map(ParticipantId).collect()
    }

    pub fn pretrusted_ids(&self) -> Vec<ParticipantId> {
        (0..self.n_pretrusted).map(ParticipantId).collect()
    }

    /// Threat config with the ring and the type split filled in when left empty.
    /// An empty split defaults to half Type-B (rounded down), half Type-D.
    pub fn resolved_threat(&self) -> ThreatModelConfig {
        let mut t = self.threat.clone();
        let mal = self.malicious_ids();
        if t.model.uses_chain() && t.chain.is_empty() {
            t.chain = mal.clone();
        }
        if t.model.uses_split() && t.n_type_b + t.n_type_d == 0 {
            t.n_type_b = mal.len() / 2;
            t.n_type_d = mal.len() - t.n_type_b;
        }
        t
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::Config(m.to_string()));
        if self.n() < 2 {
            return bad("need at least 2 participants");
        }
        if self.n_pretrusted > self.n_good {
            return bad("n_pretrusted exceeds n_good");
        }
        if self.transactions == 0 {
            return bad("transactions must be at least 1");
        }
        if self.reeval_every == 0 {
            return bad("reeval_every must be at least 1");
        }
        if self.responders_k == 0 {
            return bad("responders_k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.explore_p) {
            return bad("explore_p outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise outside [0, 1]");
        }
        self.resolved_threat().validate(&self.malicious_ids())?;
        metric_by_name(&self.metric)?;
        Ok(())
    }

    /// Behavior profile of every participant.
    pub fn profiles(&self) -> Vec<BehaviorProfile> {
        let threat = self.resolved_threat();
        let mut out = vec![BehaviorProfile::good(self.noise); self.n_good];
        out.extend(
            threat
                .roles(&self.malicious_ids())
                .into_iter()
                .map(BehaviorProfile::malicious),
        );
        out
    }
}

/// Authentic and inauthentic services delivered by one group of servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ServiceCounter {
    pub group: Role,
    pub authentic: usize,
    pub inauthentic: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: SimulationConfig,
    pub metric: TrustMetricSpec,
    pub roles: Vec<Role>,
    /// Leading ledger events that wire the collusion ring.
    pub ring_events: usize,
    pub failed: usize,
    pub failed_fraction: f64,
    /// Failed fraction within each evaluation cycle.
    pub cycle_failed: Vec<f64>,
    /// Global trust of every participant after each evaluation round.
    pub trajectories: Vec<Vec<f64>>,
    pub services: Vec<ServiceCounter>,
    pub converged: Vec<bool>,
    pub final_trust: GlobalTrustVector,
    pub ledger: InteractionLedger,
}

impl ExperimentReport {
    pub fn rounds(&self) -> usize {
        self.trajectories.len()
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<ParticipantId> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| ParticipantId(i))
            .collect()
    }

    /// Mean trust of a role's members per evaluation round.
    pub fn mean_trajectory(&self, role: Role) -> Vec<f64> {
        let ids = self.ids_with_role(role);
        self.trajectories
            .iter()
            .map(|row| {
                if ids.is_empty() {
                    0.0
                } else {
                    ids.iter().map(|id| row[id.index()]).sum::<f64>() / ids.len() as f64
                }
            })
            .collect()
    }

    /// Failed fraction recomputed from the embedded ledger.
    pub fn failed_fraction_from_ledger(&self) -> f64 {
        let events = &self.ledger.events()[self.ring_events..];
        let failed = events
            .iter()
            .filter(|e| e.outcome == ServiceOutcome::Inauthentic)
            .count();
        failed as f64 / events.len() as f64
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// One score per evaluation round for `id`, in chronological order.
pub fn trust_trajectory(report: &ExperimentReport, id: ParticipantId) -> Result<Vec<f64>, SimulationError> {
    if id.index() >= report.roles.len() {
        return Err(SimulationError::UnknownParticipant(id));
    }
    Ok(report.trajectories.iter().map(|row| row[id.index()]).collect())
}

/// Picks a server. With probability `explore_p` the choice is uniform;
/// otherwise it is proportional to trust, uniform again when every candidate
/// has zero trust. The single `draw` in `[0, 1)` is split between both stages.
pub fn select_server(
    candidates: &[ParticipantId],
    trust: &GlobalTrustVector,
    explore_p: f64,
    draw: f64,
) -> Result<ParticipantId, SimulationError> {
    let uniform = |u: f64| {
        let k = ((u * candidates.len() as f64) as usize).min(candidates.len() - 1);
        candidates[k]
    };
    match candidates {
        [] => Err(SimulationError::EmptyCandidates),
        [only] => Ok(*only),
        _ if draw < explore_p => Ok(uniform(draw / explore_p)),
        _ => {
            let u = if explore_p < 1.0 {
                (draw - explore_p) / (1.0 - explore_p)
            } else {
                draw
            };
            let weights: Vec<f64> = candidates.iter().map(|&c| trust.score(c).max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Ok(uniform(u));
            }
            let target = u * total;
            let mut acc = 0.0;
            for (&c, &w) in candidates.iter().zip(&weights) {
                acc += w;
                if target < acc {
                    return Ok(c);
                }
            }
            Ok(*candidates
                .iter()
                .zip(&weights)
                .rev()
                .find(|(_, &w)| w > 0.0)
                .map(|(c, _)| c)
                .expect("positive total weight"))
        }
    }
}

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut arrival = ChaCha8Rng::seed_from_u64(seed);
    arrival.set_stream(ARRIVAL_STREAM);
    let mut behavior = ChaCha8Rng::seed_from_u64(seed);
    behavior.set_stream(BEHAVIOR_STREAM);
    (arrival, behavior)
}

/// Runs one experiment to completion.
pub fn run_experiment(cfg: &SimulationConfig) -> Result<ExperimentReport, SimulationError> {
    cfg.validate()?;
    let n = cfg.n();
    let threat = cfg.resolved_threat();
    let profiles = cfg.profiles();
    let roles: Vec<Role> = profiles.iter().map(|p| p.role).collect();
    let spec = metric_by_name(&cfg.metric)?;
    let pre = PreTrustVector::new(n, &cfg.pretrusted_ids(), cfg.epsilon)?;
    let mut state = MetricState::new(spec.clone(), pre)?;
    let mut ledger = InteractionLedger::new(n);
    let (mut arrival, mut behavior) = streams(cfg.seed);

    let mut ring_events = 0;
    if threat.model.uses_chain() && threat.chain.len() >= 2 {
        for (rater, ratee) in build_chain(&threat.chain)? {
            ledger.record_transaction(RatingEvent {
                rater,
                ratee,
                time: 0,
                value: CHAIN_RATING,
                outcome: ServiceOutcome::Inauthentic,
                honesty_tag: HonestyTag::Dishonest,
            })?;
            ring_events += 1;
        }
    }

    let mut groups: Vec<Role> = roles.clone();
    groups.sort();
    groups.dedup();
    let mut services: Vec<ServiceCounter> = groups
        .iter()
        .map(|&group| ServiceCounter {
            group,
            authentic: 0,
            inauthentic: 0,
        })
        .collect();

    let k = cfg.responders_k.min(n - 1);
    let mut failed = 0;
    let mut cycle_failures = 0;
    let mut cycle_len = 0;
    let mut report_rows = Vec::new();
    let mut converged = Vec::new();
    let mut cycle_failed = Vec::new();

    for t in 0..cfg.transactions {
        let client = arrival.gen_range(0..n);
        let candidates: Vec<ParticipantId> = index::sample(&mut arrival, n - 1, k)
            .into_iter()
            .map(|x| ParticipantId(if x >= client { x + 1 } else { x }))
            .collect();
        let d_select: f64 = behavior.gen();
        let d_service: f64 = behavior.gen();
        let d_rating: f64 = behavior.gen();

        let server = select_server(&candidates, &state.trust, cfg.explore_p, d_select)?;
        let outcome = decide_service(&profiles[server.index()], &threat, d_service);
        let (value, honesty_tag) =
            decide_rating(&profiles[client], &profiles[server.index()], outcome, &threat, d_rating);
        ledger.record_transaction(RatingEvent {
            rater: ParticipantId(client),
            ratee: server,
            time: t as u64,
            value,
            outcome,
            honesty_tag,
        })?;

        let counter = services
            .iter_mut()
            .find(|c| c.group == roles[server.index()])
            .expect("every role has a counter");
        cycle_len += 1;
        match outcome {
            ServiceOutcome::Authentic => counter.authentic += 1,
            ServiceOutcome::Inauthentic => {
                counter.inauthentic += 1;
                failed += 1;
                cycle_failures += 1;
                if spec.amend_on_bad_service {
                    state.amend_on_bad_service(server)?;
                }
            }
        }

        if (t + 1) % cfg.reeval_every == 0 {
            state = state.evaluate(&ledger)?;
            report_rows.push(state.trust.scores().to_vec());
            converged.push(state.trust.convergence.is_converged());
            cycle_failed.push(cycle_failures as f64 / cycle_len as f64);
            cycle_failures = 0;
            cycle_len = 0;
        }
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        metric: spec,
        roles,
        ring_events,
        failed,
        failed_fraction: failed as f64 / cfg.transactions as f64,
        cycle_failed,
        trajectories: report_rows,
        services,
        converged,
        final_trust: state.trust,
        ledger,
    })
}

/// Runs independent experiments, fanning out according to `exec`.
pub fn run_batch(
    cfgs: &[SimulationConfig],
    exec: Execution,
) -> Vec<Result<ExperimentReport, SimulationError>> {
    par::map(exec, cfgs, run_experiment)
}

/// `cfg` replicated over `seeds` consecutive seeds starting at `cfg.seed`.
pub fn seed_batch(cfg: &SimulationConfig, seeds: usize) -> Vec<SimulationConfig> {
    (0..seeds as u64)
        .map(|s| SimulationConfig {
            seed: cfg.seed.wrapping_add(s),
            ..cfg.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: usize) -> ParticipantId {
        ParticipantId(i)
    }

    #[test]
    fn select_single_and_empty() {
        let t = GlobalTrustVector::uniform(3);
        assert_eq!(select_server(&[p(2)], &t, 0.1, 0.7).unwrap(), p(2));
        assert!(matches!(
            select_server(&[], &t, 0.1, 0.7),
            Err(SimulationError::EmptyCandidates)
        ));
    }

    #[test]
    fn select_proportional_frequency() {
        let t = GlobalTrustVector::from_scores(vec![0.9, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut first = 0;
        for _ in 0..draws {
            if select_server(&[p(0), p(1)], &t, 0.0, rng.gen()).unwrap() == p(0) {
                first += 1;
            }
        }
        let ratio = first as f64 / draws as f64;
        assert!((ratio - 0.9).abs() < 0.05 * 0.9, "{ratio}");
    }

    #[test]
    fn select_zero_trust_is_uniform() {
        let t = GlobalTrustVector::from_scores(vec![0.0; 4]);
        let cands = [p(0), p(1), p(2), p(3)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            hits[select_server(&cands, &t, 0.0, rng.gen()).unwrap().index()] += 1;
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 1.0).abs() < 0.05, "{hits:?}");
        }
    }

    fn small(metric: &str) -> SimulationConfig {
        SimulationConfig {
            n_good: 12,
            n_malicious: 8,
            n_pretrusted: 2,
            transactions: 120,
            metric: metric.into(),
            reeval_every: 10,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_consistent() {
        let cfg = small("ServiceTrust");
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.failed_fraction, a.failed_fraction_from_ledger());
        let total: usize = a.services.iter().map(|c| c.authentic + c.inauthentic).sum();
        assert_eq!(total, cfg.transactions);
        assert_eq!(a.rounds(), cfg.transactions / cfg.reeval_every);
        assert_eq!(trust_trajectory(&a, p(5)).unwrap().len(), a.rounds());
        assert!(matches!(
            trust_trajectory(&a, p(99)),
            Err(SimulationError::UnknownParticipant(_))
        ));
    }

    #[test]
    fn config_errors() {
        let mut cfg = small("NoSuchMetric");
        assert!(matches!(run_experiment(&cfg), Err(SimulationError::Metric(_))));
        cfg.metric = "EigenTrust".into();
        cfg.n_pretrusted = 20;
        assert!(matches!(run_experiment(&cfg), Err(SimulationError::Config(_))));
    }

    #[test]
    fn batch_modes_agree() {
        let cfgs = seed_batch(&small("EigenTrust"), 3);
        let seq = run_batch(&cfgs, Execution::Sequential);
        let par = run_batch(&cfgs, Execution::Parallel);
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.as_ref().unwrap().trajectories, b.as_ref().unwrap().trajectories);
        }
    }
}
