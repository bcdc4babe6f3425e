//! Trust metrics assembled from a local rule, a credibility mode and a kernel.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::ledger::{InteractionLedger, ParticipantId};
use crate::local_trust::{
    fcw_direct_trust, rater_level_credibility, third_party_weights, CredibilityWeights,
    DirectTrustMatrix, LocalRule, LocalTrustError, RaterWeights, SimilarityMatrix, DEFAULT_THETA,
};
use crate::par::Execution;
use crate::propagation::{
    normalize, one_hop_aggregate, power_iterate, resolve_threshold, tctp_filter, GlobalTrustVector,
    KernelConfig, KernelKind, PreTrustVector, PropagationError, ThresholdPolicy,
};

/// Decay base used by the time-decayed reference metric.
pub const DEFAULT_DECAY: f64 = 0.9;
/// Minimal honesty threshold and initial score of the adaptive metric.
pub const ADAPTIVE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric {name}: taxonomy {taxonomy} does not match its credibility/kernel")]
    InconsistentTaxonomy { name: String, taxonomy: Taxonomy },
    #[error("metric {0} does not support amending")]
    NotSupported(String),
    #[error("pre-trust vector has {pre} entries, ledger has {ledger}")]
    DimensionMismatch { pre: usize, ledger: usize },
    #[error(transparent)]
    LocalTrust(#[from] LocalTrustError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

/// Taxonomy class: raw (R) or credibility-weighted (C) feedback crossed with
/// the non-propagating, uniform and threshold-controlled kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Taxonomy {
    Random,
    Rnp,
    Cnp,
    Rudp,
    Cudp,
    Rtcp,
    Ctcp,
}

impl Taxonomy {
    pub fn label(self) -> &'static str {
        match self {
            Taxonomy::Random => "Random",
            Taxonomy::Rnp => "RNP",
            Taxonomy::Cnp => "CNP",
            Taxonomy::Rudp => "RUDP",
            Taxonomy::Cudp => "CUDP",
            Taxonomy::Rtcp => "RTCP",
            Taxonomy::Ctcp => "CTCP",
        }
    }

    /// Class implied by a credibility mode and kernel.
    pub fn classify(credibility: CredibilitySource, kernel: KernelKind) -> Self {
        let weighted = credibility != CredibilitySource::None;
        match (weighted, kernel) {
            (false, KernelKind::NonPropagating) => Taxonomy::Rnp,
            (true, KernelKind::NonPropagating) => Taxonomy::Cnp,
            (false, KernelKind::Uniform) => Taxonomy::Rudp,
            (true, KernelKind::Uniform) => Taxonomy::Cudp,
            (false, KernelKind::ThresholdControlled) => Taxonomy::Rtcp,
            (true, KernelKind::ThresholdControlled) => Taxonomy::Ctcp,
        }
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CredibilitySource {
    None,
    RaterLevel,
    PairwiseSimilarity,
    ThirdPartySimilarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustMetricSpec {
    pub name: String,
    pub taxonomy: Taxonomy,
    pub local_rule: LocalRule,
    pub credibility: CredibilitySource,
    pub kernel: KernelConfig,
    pub amend_on_bad_service: bool,
    /// Score every participant holds before the first evaluation.
    pub initial_score: Option<f64>,
}

impl TrustMetricSpec {
    /// Builds a spec, rejecting taxonomy labels that contradict the pipeline.
    pub fn new(
        name: impl Into<String>,
        taxonomy: Taxonomy,
        local_rule: LocalRule,
        credibility: CredibilitySource,
        kernel: KernelConfig,
    ) -> Result<Self, MetricError> {
        let spec = Self {
            name: name.into(),
            taxonomy,
            local_rule,
            credibility,
            kernel,
            amend_on_bad_service: false,
            initial_score: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let ok = match self.taxonomy {
            Taxonomy::Random => self.credibility == CredibilitySource::None,
            t => t == Taxonomy::classify(self.credibility, self.kernel.kind),
        };
        if ok {
            Ok(())
        } else {
            Err(MetricError::InconsistentTaxonomy {
                name: self.name.clone(),
                taxonomy: self.taxonomy,
            })
        }
    }

    pub fn with_amending(mut self, initial_score: f64) -> Self {
        self.amend_on_bad_service = true;
        self.initial_score = Some(initial_score);
        self
    }
}

/// The eight reference metrics.
pub fn builtin_metrics() -> Vec<TrustMetricSpec> {
    use CredibilitySource as C;
    use KernelKind as K;
    let ratio = LocalRule::SuccessRatio { theta: DEFAULT_THETA };
    let beta = LocalRule::BetaExpectation { base_rate: 0.5 };
    let np = KernelConfig::new(K::NonPropagating);
    let udp = KernelConfig::new(K::Uniform);
    let build = |name, tax, rule, cred, kernel| {
        TrustMetricSpec::new(name, tax, rule, cred, kernel).expect("builtin metric is consistent")
    };
    vec![
        build("NoneTrust", Taxonomy::Random, ratio, C::None, np),
        build("BetaTrust", Taxonomy::Rnp, beta, C::None, np),
        build(
            "AdaptiveTrust",
            Taxonomy::Rtcp,
            beta,
            C::None,
            KernelConfig::new(K::ThresholdControlled)
                .with_threshold(ThresholdPolicy::Fixed(ADAPTIVE_THRESHOLD)),
        )
        .with_amending(ADAPTIVE_THRESHOLD),
        build("EigenTrust", Taxonomy::Rudp, ratio, C::None, udp),
        build(
            "PeerTrustTVM",
            Taxonomy::Cudp,
            LocalRule::Decayed { a: DEFAULT_DECAY },
            C::RaterLevel,
            udp,
        ),
        build("PeerTrustPSM", Taxonomy::Cnp, ratio, C::ThirdPartySimilarity, np),
        build("ServiceTrust", Taxonomy::Cudp, ratio, C::PairwiseSimilarity, udp),
        build(
            "ServiceTrust++",
            Taxonomy::Ctcp,
            ratio,
            C::PairwiseSimilarity,
            KernelConfig::new(K::ThresholdControlled).with_threshold(ThresholdPolicy::Fixed(0.5)),
        ),
    ]
}

/// Looks a builtin metric up by name, ignoring ASCII case.
pub fn metric_by_name(name: &str) -> Result<TrustMetricSpec, MetricError> {
    builtin_metrics()
        .into_iter()
        .find(|m| m.name.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| MetricError::UnknownMetric(name.to_string()))
}

/// A metric together with its latest global trust and amended participants.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub spec: TrustMetricSpec,
    pub trust: GlobalTrustVector,
    pub amended: BTreeSet<ParticipantId>,
    pub pretrust: PreTrustVector,
}

impl MetricState {
    /// Fresh state: the metric's view of an empty history.
    pub fn new(spec: TrustMetricSpec, pretrust: PreTrustVector) -> Result<Self, MetricError> {
        spec.validate()?;
        let n = pretrust.len();
        let trust = match spec.initial_score {
            Some(v) => GlobalTrustVector::from_scores(vec![v; n]),
            None => GlobalTrustVector::uniform(n),
        };
        let state = Self {
            spec,
            trust,
            amended: BTreeSet::new(),
            pretrust,
        };
        if state.spec.initial_score.is_some() || state.spec.taxonomy == Taxonomy::Random {
            Ok(state)
        } else {
            state.evaluate(&InteractionLedger::new(n))
        }
    }

    /// Re-evaluates the metric on `ledger` (similarities computed sequentially).
    pub fn evaluate(&self, ledger: &InteractionLedger) -> Result<Self, MetricError> {
        self.evaluate_with(ledger, Execution::Sequential)
    }

    pub fn evaluate_with(&self, ledger: &InteractionLedger, exec: Execution) -> Result<Self, MetricError> {
        let n = ledger.len();
        if n != self.pretrust.len() {
            return Err(MetricError::DimensionMismatch {
                pre: self.pretrust.len(),
                ledger: n,
            });
        }
        let mut trust = if self.spec.taxonomy == Taxonomy::Random {
            GlobalTrustVector::uniform(n)
        } else {
            let raw = DirectTrustMatrix::from_ledger(ledger, self.spec.local_rule)?;
            let sim = match self.spec.credibility {
                CredibilitySource::PairwiseSimilarity | CredibilitySource::ThirdPartySimilarity => {
                    Some(SimilarityMatrix::compute(ledger, exec))
                }
                _ => None,
            };
            match self.spec.kernel.kind {
                KernelKind::NonPropagating => self.one_hop(&raw, sim.as_ref())?,
                KernelKind::Uniform | KernelKind::ThresholdControlled => {
                    self.propagate(&raw, sim.as_ref())?
                }
            }
        };
        for &id in &self.amended {
            trust.set(id, 0.0);
        }
        Ok(Self {
            spec: self.spec.clone(),
            trust,
            amended: self.amended.clone(),
            pretrust: self.pretrust.clone(),
        })
    }

    fn one_hop(
        &self,
        raw: &DirectTrustMatrix,
        sim: Option<&SimilarityMatrix>,
    ) -> Result<GlobalTrustVector, MetricError> {
        let n = raw.len();
        let viewpoints: Vec<ParticipantId> = match self.pretrust.members().collect::<Vec<_>>() {
            v if v.is_empty() => (0..n).map(ParticipantId).collect(),
            v => v,
        };
        let fcw = match (self.spec.credibility, sim) {
            (CredibilitySource::PairwiseSimilarity, Some(sim)) => {
                Some(fcw_direct_trust(raw, &CredibilityWeights::pairwise(raw, sim))?)
            }
            _ => None,
        };
        let mut scores = Vec::with_capacity(n);
        for j in (0..n).map(ParticipantId) {
            let raters = raw.raters_of(j);
            let score = match self.spec.credibility {
                CredibilitySource::None => one_hop_aggregate(raw, None, j),
                CredibilitySource::PairwiseSimilarity => {
                    one_hop_aggregate(fcw.as_ref().unwrap_or(raw), None, j)
                }
                _ if raters.is_empty() => one_hop_aggregate(raw, None, j),
                CredibilitySource::RaterLevel => {
                    let w = rater_level_credibility(&self.trust, &raters)?;
                    one_hop_aggregate(raw, Some(&w), j)
                }
                CredibilitySource::ThirdPartySimilarity => {
                    let sim = sim.expect("similarity computed for third-party credibility");
                    let mut w = RaterWeights::new();
                    for &v in &viewpoints {
                        for (k, c) in third_party_weights(sim, v, &raters) {
                            *w.entry(k).or_insert(0.0) += c / viewpoints.len() as f64;
                        }
                    }
                    one_hop_aggregate(raw, Some(&w), j)
                }
            };
            scores.push(score);
        }
        Ok(GlobalTrustVector::from_scores(scores))
    }

    fn propagate(
        &self,
        raw: &DirectTrustMatrix,
        sim: Option<&SimilarityMatrix>,
    ) -> Result<GlobalTrustVector, MetricError> {
        let weights = match (self.spec.credibility, sim) {
            (CredibilitySource::None, _) => None,
            (CredibilitySource::RaterLevel, _) => Some(CredibilityWeights::rater_level(raw, &self.trust)?),
            (CredibilitySource::PairwiseSimilarity, Some(sim)) => {
                Some(CredibilityWeights::pairwise(raw, sim))
            }
            (CredibilitySource::ThirdPartySimilarity, Some(sim)) => {
                Some(CredibilityWeights::ThirdPartyScoreLevel(sim.clone()))
            }
            _ => unreachable!("similarity computed for similarity credibility"),
        };
        let mut s = match &weights {
            Some(w) => fcw_direct_trust(raw, w)?,
            None => raw.clone(),
        };
        if self.spec.kernel.kind == KernelKind::ThresholdControlled {
            match resolve_threshold(&s, self.spec.kernel.threshold) {
                Ok(tau) => s = tctp_filter(&s, tau),
                Err(PropagationError::EmptyMatrix) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(power_iterate(&normalize(&s), &self.pretrust, &self.spec.kernel)?)
    }

    /// Pins `offender` to zero trust for the rest of the run.
    pub fn amend_on_bad_service(&mut self, offender: ParticipantId) -> Result<(), MetricError> {
        if !self.spec.amend_on_bad_service {
            return Err(MetricError::NotSupported(self.spec.name.clone()));
        }
        self.amended.insert(offender);
        if offender.index() < self.trust.len() {
            self.trust.set(offender, 0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{HonestyTag, RatingEvent, ServiceOutcome};

    fn p(i: usize) -> ParticipantId {
        ParticipantId(i)
    }

    fn rate(l: &mut InteractionLedger, i: usize, j: usize, t: u64, v: f64) {
        let outcome = if v >= 0.5 {
            ServiceOutcome::Authentic
        } else {
            ServiceOutcome::Inauthentic
        };
        l.record_transaction(RatingEvent {
            rater: p(i),
            ratee: p(j),
            time: t,
            value: v,
            outcome,
            honesty_tag: HonestyTag::Honest,
        })
        .unwrap();
    }

    fn state(name: &str, n: usize) -> MetricState {
        let pre = PreTrustVector::new(n, &[p(0)], 0.15).unwrap();
        MetricState::new(metric_by_name(name).unwrap(), pre).unwrap()
    }

    #[test]
    fn roster() {
        let all = builtin_metrics();
        assert_eq!(all.len(), 8);
        let mut classes: Vec<_> = all.iter().map(|m| m.taxonomy).collect();
        classes.sort();
        assert_eq!(
            classes,
            vec![
                Taxonomy::Random,
                Taxonomy::Rnp,
                Taxonomy::Cnp,
                Taxonomy::Rudp,
                Taxonomy::Cudp,
                Taxonomy::Cudp,
                Taxonomy::Rtcp,
                Taxonomy::Ctcp
            ]
        );
        for m in &all {
            m.validate().unwrap();
        }
        let e = metric_by_name("eigentrust").unwrap();
        assert!(matches!(e.local_rule, LocalRule::SuccessRatio { .. }));
        assert_eq!(e.credibility, CredibilitySource::None);
        assert_eq!(e.kernel.kind, KernelKind::Uniform);
        assert!(metric_by_name("TrustWalker").is_err());
    }

    #[test]
    fn inconsistent_taxonomy_rejected() {
        let r = TrustMetricSpec::new(
            "bad",
            Taxonomy::Rudp,
            LocalRule::SuccessRatio { theta: 0.05 },
            CredibilitySource::RaterLevel,
            KernelConfig::new(KernelKind::Uniform),
        );
        assert!(matches!(r, Err(MetricError::InconsistentTaxonomy { .. })));
    }

    #[test]
    fn random_is_uniform() {
        let mut l = InteractionLedger::new(4);
        rate(&mut l, 0, 1, 0, 1.0);
        let s = state("NoneTrust", 4).evaluate(&l).unwrap();
        assert_eq!(s.trust.scores(), &[0.25; 4]);
    }

    #[test]
    fn rudp_gives_unrated_positive_targets_zero() {
        let mut l = InteractionLedger::new(4);
        rate(&mut l, 0, 1, 0, 1.0);
        rate(&mut l, 1, 0, 1, 1.0);
        rate(&mut l, 0, 3, 2, 0.0);
        rate(&mut l, 1, 3, 3, 0.0);
        rate(&mut l, 3, 2, 4, 1.0);
        let s = state("EigenTrust", 4).evaluate(&l).unwrap();
        assert_eq!(s.trust.score(p(3)), 0.0);
        assert_eq!(s.trust.score(p(2)), 0.0);
        assert!((s.trust.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn amend_pins_and_gates() {
        let mut a = state("AdaptiveTrust", 4);
        assert_eq!(a.trust.scores(), &[0.5; 4]);
        a.amend_on_bad_service(p(3)).unwrap();
        a.amend_on_bad_service(p(3)).unwrap();
        assert_eq!(a.amended.len(), 1);
        let mut l = InteractionLedger::new(4);
        for t in 0..5 {
            rate(&mut l, 0, 3, t, 1.0);
        }
        let a = a.evaluate(&l).unwrap();
        assert_eq!(a.trust.score(p(3)), 0.0);
        let mut e = state("EigenTrust", 4);
        assert!(matches!(e.amend_on_bad_service(p(1)), Err(MetricError::NotSupported(_))));
    }

    #[test]
    fn cold_start_for_one_hop() {
        let s = state("BetaTrust", 3);
        assert_eq!(s.trust.scores(), &[0.5; 3]);
    }
}
