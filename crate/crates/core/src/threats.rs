//! Behavioral policies of the six threat models and the good-participant
//! baseline. Every decision is a pure function of its inputs and one
//! uniform draw supplied by the simulation engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{HonestyTag, ParticipantId, ServiceOutcome};

/// Default probability that a good rater accidentally flips a rating.
pub const DEFAULT_NOISE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ThreatError {
    #[error("a collusion chain needs at least 2 members, got {0}")]
    ChainTooSmall(usize),
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("type split {n_type_b} + {n_type_d} does not match {malicious} malicious participants")]
    Split {
        n_type_b: usize,
        n_type_d: usize,
        malicious: usize,
    },
    #[error("chain covers {chain} ids but there are {malicious} malicious participants")]
    ChainCoverage { chain: usize, malicious: usize },
    #[error("unknown threat model {0:?}")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThreatModel {
    /// Independently mischievous.
    A,
    /// Collective chain.
    B,
    /// Camouflage collective.
    C,
    /// Group-based spies.
    D,
    /// Camouflage collective with honest rating.
    E,
    /// Group-based spies with honest rating.
    F,
}

impl ThreatModel {
    pub const ALL: [ThreatModel; 6] = [
        ThreatModel::A,
        ThreatModel::B,
        ThreatModel::C,
        ThreatModel::D,
        ThreatModel::E,
        ThreatModel::F,
    ];

    pub fn parse(s: &str) -> Result<Self, ThreatError> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ThreatModel::A),
            "B" => Ok(ThreatModel::B),
            "C" => Ok(ThreatModel::C),
            "D" => Ok(ThreatModel::D),
            "E" => Ok(ThreatModel::E),
            "F" => Ok(ThreatModel::F),
            _ => Err(ThreatError::UnknownModel(s.to_string())),
        }
    }

    pub fn letter(self) -> char {
        match self {
            ThreatModel::A => 'A',
            ThreatModel::B => 'B',
            ThreatModel::C => 'C',
            ThreatModel::D => 'D',
            ThreatModel::E => 'E',
            ThreatModel::F => 'F',
        }
    }

    /// Models whose attackers are wired into a ring.
    pub fn uses_chain(self) -> bool {
        matches!(self, ThreatModel::B | ThreatModel::C | ThreatModel::E)
    }

    /// Models splitting attackers into Type-B and Type-D.
    pub fn uses_split(self) -> bool {
        matches!(self, ThreatModel::D | ThreatModel::F)
    }
}

impl std::fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parameters of the active threat model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatModelConfig {
    pub model: ThreatModel,
    /// Authentic-service probability of camouflage participants (C, E).
    pub f: f64,
    /// Honest-rating probability of camouflage participants (E).
    pub eta: f64,
    /// Honest-rating probability of spies (F).
    pub gamma: f64,
    /// Type-B / Type-D split (D, F).
    pub n_type_b: usize,
    pub n_type_d: usize,
    /// Collusion ring over the malicious population (B, C, E).
    pub chain: Vec<ParticipantId>,
}

impl ThreatModelConfig {
    /// Config with the defaults used throughout the experiments.
    pub fn new(model: ThreatModel) -> Self {
        Self {
            model,
            f: 0.4,
            eta: 0.2,
            gamma: 0.2,
            n_type_b: 0,
            n_type_d: 0,
            chain: Vec::new(),
        }
    }

    pub fn validate(&self, malicious: &[ParticipantId]) -> Result<(), ThreatError> {
        for (name, value) in [("f", self.f), ("eta", self.eta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ThreatError::Probability { name, value });
            }
        }
        if self.model.uses_split() && self.n_type_b + self.n_type_d != malicious.len() {
            return Err(ThreatError::Split {
                n_type_b: self.n_type_b,
                n_type_d: self.n_type_d,
                malicious: malicious.len(),
            });
        }
        if self.model.uses_chain() && !malicious.is_empty() {
            let mut a = self.chain.clone();
            let mut b = malicious.to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(ThreatError::ChainCoverage {
                    chain: self.chain.len(),
                    malicious: malicious.len(),
                });
            }
        }
        Ok(())
    }

    /// Role of each malicious participant, in the order given.
    pub fn roles(&self, malicious: &[ParticipantId]) -> Vec<Role> {
        malicious
            .iter()
            .enumerate()
            .map(|(k, _)| match self.model {
                ThreatModel::A => Role::IndependentMalicious,
                ThreatModel::B => Role::Colluder,
                ThreatModel::C | ThreatModel::E => Role::Camouflage,
                ThreatModel::D | ThreatModel::F => {
                    if k < self.n_type_b {
                        Role::TypeB
                    } else {
                        Role::TypeD
                    }
                }
            })
            .collect()
    }

    /// Honest-rating probability of malicious raters under this model.
    fn honest_rating_probability(&self) -> f64 {
        match self.model {
            ThreatModel::E => self.eta,
            ThreatModel::F => self.gamma,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Good,
    IndependentMalicious,
    Colluder,
    Camouflage,
    TypeB,
    TypeD,
}

impl Role {
    pub fn is_malicious(self) -> bool {
        self != Role::Good
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Good => "good",
            Role::IndependentMalicious => "independent",
            Role::Colluder => "colluder",
            Role::Camouflage => "camouflage",
            Role::TypeB => "type_b",
            Role::TypeD => "type_d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorProfile {
    pub role: Role,
    /// Probability that a good rater's rating is accidentally flipped.
    pub noise: f64,
}

impl BehaviorProfile {
    pub fn good(noise: f64) -> Self {
        Self { role: Role::Good, noise }
    }

    pub fn malicious(role: Role) -> Self {
        Self { role, noise: 0.0 }
    }
}

/// Service delivered by a server with `profile`.
pub fn decide_service(profile: &BehaviorProfile, cfg: &ThreatModelConfig, draw: f64) -> ServiceOutcome {
    match profile.role {
        Role::Good | Role::TypeD => ServiceOutcome::Authentic,
        Role::IndependentMalicious | Role::Colluder | Role::TypeB => ServiceOutcome::Inauthentic,
        Role::Camouflage => {
            if draw < cfg.f {
                ServiceOutcome::Authentic
            } else {
                ServiceOutcome::Inauthentic
            }
        }
    }
}

fn honest_value(outcome: ServiceOutcome) -> f64 {
    match outcome {
        ServiceOutcome::Authentic => 1.0,
        ServiceOutcome::Inauthentic => 0.0,
    }
}

fn tag_for(value: f64, outcome: ServiceOutcome) -> HonestyTag {
    if (value >= 0.5) == (outcome == ServiceOutcome::Authentic) {
        HonestyTag::Honest
    } else {
        HonestyTag::Dishonest
    }
}

/// Rating a client with `rater` profile gives a server with `ratee` profile
/// after receiving `outcome`.
///
/// Good raters report the outcome, flipped when `draw < noise`. Independent
/// attackers always rate 0. Colluders, camouflage participants and spies
/// rate good participants 0 and fellow attackers 1; under models E and F
/// they report the true outcome instead when `draw` falls under η or γ.
pub fn decide_rating(
    rater: &BehaviorProfile,
    ratee: &BehaviorProfile,
    outcome: ServiceOutcome,
    cfg: &ThreatModelConfig,
    draw: f64,
) -> (f64, HonestyTag) {
    match rater.role {
        Role::Good => {
            let honest = honest_value(outcome);
            let value = if draw < rater.noise { 1.0 - honest } else { honest };
            (value, tag_for(value, outcome))
        }
        Role::IndependentMalicious => (0.0, HonestyTag::NonCreditable),
        Role::Colluder | Role::Camouflage | Role::TypeB | Role::TypeD => {
            let value = if draw < cfg.honest_rating_probability() {
                honest_value(outcome)
            } else if ratee.role.is_malicious() {
                1.0
            } else {
                0.0
            };
            (value, tag_for(value, outcome))
        }
    }
}

/// Ring over `ids`: each member rates its successor, the last wraps to the first.
pub fn build_chain(ids: &[ParticipantId]) -> Result<Vec<(ParticipantId, ParticipantId)>, ThreatError> {
    if ids.len() < 2 {
        return Err(ThreatError::ChainTooSmall(ids.len()));
    }
    Ok(ids
        .iter()
        .zip(ids.iter().cycle().skip(1))
        .map(|(&a, &b)| (a, b))
        .collect())
}

/// Rating value carried by every chain edge.
pub const CHAIN_RATING: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: usize) -> ParticipantId {
        ParticipantId(i)
    }

    #[test]
    fn service_examples() {
        let cfg = ThreatModelConfig::new(ThreatModel::C);
        let d = BehaviorProfile::malicious(Role::TypeD);
        for draw in [0.0, 0.5, 0.999] {
            assert_eq!(decide_service(&d, &cfg, draw), ServiceOutcome::Authentic);
        }
        let cam = BehaviorProfile::malicious(Role::Camouflage);
        assert_eq!(decide_service(&cam, &cfg, 0.39), ServiceOutcome::Authentic);
        assert_eq!(decide_service(&cam, &cfg, 0.41), ServiceOutcome::Inauthentic);
        let col = BehaviorProfile::malicious(Role::Colluder);
        for draw in [0.0, 0.5, 0.999] {
            assert_eq!(decide_service(&col, &cfg, draw), ServiceOutcome::Inauthentic);
        }
        assert_eq!(
            decide_service(&BehaviorProfile::good(0.05), &cfg, 0.99),
            ServiceOutcome::Authentic
        );
    }

    #[test]
    fn rating_examples() {
        let good = BehaviorProfile::good(0.0);
        let cfg_b = ThreatModelConfig::new(ThreatModel::B);
        assert_eq!(
            decide_rating(&good, &good, ServiceOutcome::Authentic, &cfg_b, 0.3),
            (1.0, HonestyTag::Honest)
        );
        let col = BehaviorProfile::malicious(Role::Colluder);
        assert_eq!(
            decide_rating(&col, &col, ServiceOutcome::Inauthentic, &cfg_b, 0.3),
            (1.0, HonestyTag::Dishonest)
        );
        assert_eq!(
            decide_rating(&col, &good, ServiceOutcome::Authentic, &cfg_b, 0.0),
            (0.0, HonestyTag::Dishonest)
        );
        let mut cfg_e = ThreatModelConfig::new(ThreatModel::E);
        cfg_e.eta = 0.2;
        let cam = BehaviorProfile::malicious(Role::Camouflage);
        assert_eq!(
            decide_rating(&cam, &good, ServiceOutcome::Authentic, &cfg_e, 0.1),
            (1.0, HonestyTag::Honest)
        );
        assert_eq!(
            decide_rating(&cam, &good, ServiceOutcome::Authentic, &cfg_e, 0.3),
            (0.0, HonestyTag::Dishonest)
        );
    }

    #[test]
    fn noisy_good_rater_flips_value_only() {
        let good = BehaviorProfile::good(0.05);
        let cfg = ThreatModelConfig::new(ThreatModel::A);
        assert_eq!(
            decide_rating(&good, &good, ServiceOutcome::Authentic, &cfg, 0.01),
            (0.0, HonestyTag::Dishonest)
        );
        assert_eq!(
            decide_rating(&good, &good, ServiceOutcome::Authentic, &cfg, 0.06),
            (1.0, HonestyTag::Honest)
        );
    }

    #[test]
    fn independent_attackers_never_rate_positively() {
        let ind = BehaviorProfile::malicious(Role::IndependentMalicious);
        let cfg = ThreatModelConfig::new(ThreatModel::A);
        for outcome in [ServiceOutcome::Authentic, ServiceOutcome::Inauthentic] {
            for ratee in [BehaviorProfile::good(0.0), ind] {
                assert_eq!(
                    decide_rating(&ind, &ratee, outcome, &cfg, 0.0),
                    (0.0, HonestyTag::NonCreditable)
                );
            }
        }
    }

    #[test]
    fn spies_under_d() {
        let cfg = ThreatModelConfig::new(ThreatModel::D);
        let d = BehaviorProfile::malicious(Role::TypeD);
        let b = BehaviorProfile::malicious(Role::TypeB);
        assert_eq!(
            decide_rating(&d, &b, ServiceOutcome::Inauthentic, &cfg, 0.0),
            (1.0, HonestyTag::Dishonest)
        );
        assert_eq!(
            decide_rating(&d, &BehaviorProfile::good(0.0), ServiceOutcome::Authentic, &cfg, 0.0),
            (0.0, HonestyTag::Dishonest)
        );
    }

    #[test]
    fn chain_examples() {
        assert_eq!(
            build_chain(&[p(5), p(6), p(7)]).unwrap(),
            vec![(p(5), p(6)), (p(6), p(7)), (p(7), p(5))]
        );
        assert_eq!(build_chain(&[p(1), p(2)]).unwrap(), vec![(p(1), p(2)), (p(2), p(1))]);
        assert_eq!(build_chain(&[p(1)]), Err(ThreatError::ChainTooSmall(1)));
        assert_eq!(CHAIN_RATING, 1.0);
    }

    #[test]
    fn config_validation() {
        let mal: Vec<_> = (10..14).map(p).collect();
        let mut cfg = ThreatModelConfig::new(ThreatModel::D);
        cfg.n_type_b = 1;
        cfg.n_type_d = 2;
        assert!(matches!(cfg.validate(&mal), Err(ThreatError::Split { .. })));
        cfg.n_type_d = 3;
        cfg.validate(&mal).unwrap();
        assert_eq!(
            cfg.roles(&mal),
            vec![Role::TypeB, Role::TypeD, Role::TypeD, Role::TypeD]
        );
        let mut c = ThreatModelConfig::new(ThreatModel::C);
        assert!(matches!(c.validate(&mal), Err(ThreatError::ChainCoverage { .. })));
        c.chain = mal.clone();
        c.validate(&mal).unwrap();
        c.f = 1.2;
        assert!(matches!(c.validate(&mal), Err(ThreatError::Probability { name: "f", .. })));
        assert_eq!(ThreatModel::parse("e").unwrap(), ThreatModel::E);
        assert!(ThreatModel::parse("G").is_err());
    }
}
