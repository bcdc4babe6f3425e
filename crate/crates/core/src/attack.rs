//! Trust and distrust ingredients, the attack success ratio, closed-form
//! attack costs for the six threat models, and an oracle that checks each
//! closed form against an explicitly constructed one-shot scenario.

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{HonestyTag, InteractionLedger, ParticipantId, RatingEvent, ServiceOutcome};
use crate::local_trust::{DirectTrustMatrix, LocalRule};
use crate::par::{self, Execution};
use crate::propagation::{GlobalTrustVector, NormalizedTrustMatrix};
use crate::threats::ThreatModel;

/// Slack used when snapping near-integers and judging `As > 1`.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// Anything that assigns a weight to the edge `i → j`.
pub trait EdgeWeight {
    fn weight(&self, i: ParticipantId, j: ParticipantId) -> f64;
}

impl EdgeWeight for NormalizedTrustMatrix {
    fn weight(&self, i: ParticipantId, j: ParticipantId) -> f64 {
        self.get(i, j)
    }
}

impl EdgeWeight for DirectTrustMatrix {
    fn weight(&self, i: ParticipantId, j: ParticipantId) -> f64 {
        self.get(i, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IngredientBreakdown {
    pub target: ParticipantId,
    pub trust_ingredient: f64,
    pub distrust_ingredient: f64,
}

impl IngredientBreakdown {
    /// Splits every incoming edge `u → target` worth `m_u · T(u)` between the
    /// two ingredients in proportion to the honest and the dishonest or
    /// non-creditable ratings on that edge.
    pub fn compute(
        ledger: &InteractionLedger,
        trust: &GlobalTrustVector,
        m: &impl EdgeWeight,
        target: ParticipantId,
    ) -> Self {
        let n = ledger.len();
        let mut honest = vec![0u32; n];
        let mut other = vec![0u32; n];
        for e in ledger.events().iter().filter(|e| e.ratee == target) {
            match e.honesty_tag {
                HonestyTag::Honest => honest[e.rater.index()] += 1,
                HonestyTag::Dishonest | HonestyTag::NonCreditable => other[e.rater.index()] += 1,
            }
        }
        let mut ti = 0.0;
        let mut di = 0.0;
        for u in 0..n {
            let total = honest[u] + other[u];
            if total == 0 {
                continue;
            }
            let id = ParticipantId(u);
            let contrib = m.weight(id, target) * trust.score(id);
            ti += contrib * honest[u] as f64 / total as f64;
            di += contrib * other[u] as f64 / total as f64;
        }
        Self {
            target,
            trust_ingredient: ti,
            distrust_ingredient: di,
        }
    }
}

/// Weighted trust reaching `target` through honest ratings.
pub fn trust_ingredient(
    ledger: &InteractionLedger,
    trust: &GlobalTrustVector,
    m: &impl EdgeWeight,
    target: ParticipantId,
) -> f64 {
    IngredientBreakdown::compute(ledger, trust, m, target).trust_ingredient
}

/// Weighted trust reaching `target` through dishonest or non-creditable ratings.
pub fn distrust_ingredient(
    ledger: &InteractionLedger,
    trust: &GlobalTrustVector,
    m: &impl EdgeWeight,
    target: ParticipantId,
) -> f64 {
    IngredientBreakdown::compute(ledger, trust, m, target).distrust_ingredient
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AttackSuccess {
    Ratio(f64),
    /// No trust ingredient but some distrust.
    Infinite,
    /// Neither ingredient present.
    Undefined,
}

impl AttackSuccess {
    /// Whether the attack strictly outweighs the honest evidence.
    pub fn is_successful(self) -> bool {
        match self {
            AttackSuccess::Ratio(r) => r > 1.0 + SNAP_EPS,
            AttackSuccess::Infinite => true,
            AttackSuccess::Undefined => false,
        }
    }
}

/// Distrust over trust ingredient.
pub fn attack_success_ratio(b: &IngredientBreakdown) -> AttackSuccess {
    match (b.trust_ingredient > 0.0, b.distrust_ingredient > 0.0) {
        (true, _) => AttackSuccess::Ratio(b.distrust_ingredient / b.trust_ingredient),
        (false, true) => AttackSuccess::Infinite,
        (false, false) => AttackSuccess::Undefined,
    }
}

/// Inputs of the closed-form costs. Fields a model does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    /// Honest positive ratings the target holds (`N_H`).
    pub n_honest: u32,
    /// Authentic services an attacker delivers (`I_H`).
    pub authentic_services: u32,
    /// Average trust of good raters.
    pub trust_good: f64,
    /// Average trust of malicious raters.
    pub trust_malicious: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Type-B population; `None` matches the Type-D count.
    pub n_type_b: Option<u32>,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            n_honest: 10,
            authentic_services: 10,
            trust_good: 0.85,
            trust_malicious: 0.35,
            eta: 0.2,
            gamma: 0.2,
            n_type_b: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackCostReport {
    pub model: ThreatModel,
    /// Attackers needed (Type-D for D and F).
    pub n_malicious: u64,
    pub n_type_b: u64,
    pub dishonest_ratings: u64,
    pub honest_ratings: u64,
    pub authentic_services: u64,
    pub total_ratings: u64,
    /// Real-valued bound before flooring.
    pub raw_bound: f64,
    /// Real values behind the total and honest rating counts (E and F).
    pub raw_total_ratings: f64,
    pub raw_honest_ratings: f64,
    pub params: CostParams,
}

/// `⌊x⌋ + 1`, treating values within a relative 1e-9 of an integer as that integer.
pub fn floor_plus_one(x: f64) -> u64 {
    let r = x.round();
    let f = if (x - r).abs() <= SNAP_EPS * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    };
    f.max(0.0) as u64 + 1
}

fn violated(msg: impl Into<String>) -> AttackError {
    AttackError::PreconditionViolated(msg.into())
}

fn check_params(model: ThreatModel, p: &CostParams) -> Result<(), AttackError> {
    match model {
        ThreatModel::A | ThreatModel::B => {
            if p.trust_malicious.is_nan() || p.trust_malicious <= 0.0 {
                return Err(violated("T_M > 0"));
            }
            if p.trust_good.is_nan() || p.trust_good < 0.0 {
                return Err(violated("T_G >= 0"));
            }
        }
        _ => {
            if p.authentic_services == 0 {
                return Err(violated("I_H > 0"));
            }
        }
    }
    if model == ThreatModel::E {
        if !(p.eta > 0.0 && p.eta < 1.0) {
            return Err(violated("0 < eta < 1"));
        }
        if f64::from(p.authentic_services) <= 3.0 * f64::from(p.n_honest) * p.eta {
            return Err(violated("I_H > 3 * N_H * eta"));
        }
    }
    if model == ThreatModel::F && !(p.gamma >= 0.0 && p.gamma < 1.0) {
        return Err(violated("0 <= gamma < 1"));
    }
    Ok(())
}

/// Real-valued lower bound on the attacker count.
fn raw_bound(model: ThreatModel, p: &CostParams) -> f64 {
    let nh = p.n_honest as f64;
    let ih = p.authentic_services as f64;
    match model {
        ThreatModel::A | ThreatModel::B => 2.0 * nh * p.trust_good / p.trust_malicious,
        ThreatModel::C => 3.0 * nh / ih,
        ThreatModel::D => 3.0 * nh / (2.0 * ih),
        ThreatModel::E => (1.0 - 3.0 * nh * p.eta / ih).ln() / (1.0 - p.eta).ln(),
        ThreatModel::F => 3.0 * nh / ((2.0 - p.gamma) * ih),
    }
}

/// Minimal attack cost under `model`.
pub fn closed_form_cost(model: ThreatModel, p: &CostParams) -> Result<AttackCostReport, AttackError> {
    check_params(model, p)?;
    let bound = raw_bound(model, p);
    let n = floor_plus_one(bound);
    let ih = p.authentic_services as u64;
    let mut r = AttackCostReport {
        model,
        n_malicious: n,
        n_type_b: 0,
        dishonest_ratings: 0,
        honest_ratings: 0,
        authentic_services: 0,
        total_ratings: 0,
        raw_bound: bound,
        raw_total_ratings: 0.0,
        raw_honest_ratings: 0.0,
        params: *p,
    };
    match model {
        ThreatModel::A => r.dishonest_ratings = n,
        ThreatModel::B => r.dishonest_ratings = 2 * n,
        ThreatModel::C => {
            r.authentic_services = ih;
            r.dishonest_ratings = 2 * n;
        }
        ThreatModel::E => {
            r.authentic_services = ih;
            r.dishonest_ratings = 2 * n;
            r.raw_total_ratings = 2.0 * n as f64 / (1.0 - p.eta);
            r.raw_honest_ratings = 2.0 * p.eta * n as f64 / (1.0 - p.eta);
            r.total_ratings = floor_plus_one(r.raw_total_ratings);
            r.honest_ratings = floor_plus_one(r.raw_honest_ratings);
        }
        ThreatModel::D | ThreatModel::F => {
            let nb = p.n_type_b.map(u64::from).unwrap_or(n);
            r.n_type_b = nb;
            r.authentic_services = n * ih;
            r.dishonest_ratings = n * nb + n + nb;
            if model == ThreatModel::F {
                r.raw_total_ratings = n as f64 * (1.0 + nb as f64) / (1.0 - p.gamma);
                r.raw_honest_ratings = n as f64 * (1.0 + nb as f64) * p.gamma / (1.0 - p.gamma);
                r.total_ratings = floor_plus_one(r.raw_total_ratings);
                r.honest_ratings = floor_plus_one(r.raw_honest_ratings);
            }
        }
    }
    if !matches!(model, ThreatModel::E | ThreatModel::F) {
        r.total_ratings = r.dishonest_ratings;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OracleVerdict {
    Confirmed,
    Refuted {
        count: u64,
        at_count: AttackSuccess,
        at_previous: AttackSuccess,
    },
}

impl OracleVerdict {
    pub fn is_confirmed(self) -> bool {
        self == OracleVerdict::Confirmed
    }
}

struct Scenario {
    ledger: InteractionLedger,
    trust: Vec<f64>,
    clock: u64,
}

impl Scenario {
    fn new(n: usize) -> Self {
        Self {
            ledger: InteractionLedger::new(n),
            trust: vec![0.0; n],
            clock: 0,
        }
    }

    fn rate(&mut self, rater: usize, ratee: usize, positive: bool, tag: HonestyTag) {
        self.ledger
            .record_transaction(RatingEvent {
                rater: ParticipantId(rater),
                ratee: ParticipantId(ratee),
                time: self.clock,
                value: if positive { 1.0 } else { 0.0 },
                outcome: if positive == (tag == HonestyTag::Honest) {
                    ServiceOutcome::Authentic
                } else {
                    ServiceOutcome::Inauthentic
                },
                honesty_tag: tag,
            })
            .expect("scenario events are valid");
        self.clock += 1;
    }

    fn ingredients(&self, target: usize) -> IngredientBreakdown {
        let m = DirectTrustMatrix::from_ledger(&self.ledger, LocalRule::BetaExpectation { base_rate: 0.5 })
            .expect("beta rule never fails");
        let t = GlobalTrustVector::from_scores(self.trust.clone());
        IngredientBreakdown::compute(&self.ledger, &t, &m, ParticipantId(target))
    }
}

/// One-shot scenario with `count` attackers (Type-D for D and F) and
/// `n_type_b` Type-B partners. Every rating is a single binary transaction,
/// so each edge carries beta-expectation trust 2/3 (positive) or 1/3
/// (negative). Participant 0 is the target.
fn scenario_success(model: ThreatModel, p: &CostParams, count: u64, n_type_b: u64) -> AttackSuccess {
    let nh = p.n_honest as usize;
    let ih = p.authentic_services as usize;
    let count = count as usize;
    let nb = if model.uses_split() { n_type_b as usize } else { 0 };
    let uses_services = !matches!(model, ThreatModel::A | ThreatModel::B);
    let receivers = if uses_services { ih } else { 0 };

    let honest0 = 1;
    let recv0 = honest0 + nh;
    let att0 = recv0 + receivers;
    let b0 = att0 + count;
    let n = b0 + nb;
    let mut s = Scenario::new(n);
    for h in honest0..recv0 {
        s.trust[h] = p.trust_good;
        s.rate(h, 0, true, HonestyTag::Honest);
    }
    for r in recv0..att0 {
        s.trust[r] = p.trust_good;
    }

    let attack_tag = if model == ThreatModel::A {
        HonestyTag::NonCreditable
    } else {
        HonestyTag::Dishonest
    };
    match model {
        ThreatModel::A | ThreatModel::B => {
            for a in att0..b0 {
                s.trust[a] = p.trust_malicious;
            }
        }
        ThreatModel::C | ThreatModel::E => {
            if count > 0 {
                // only the head of the chain serves; the rest inherit along the ring
                for r in recv0..att0 {
                    s.rate(r, att0, true, HonestyTag::Honest);
                }
                let head = s.ingredients(att0).trust_ingredient;
                let keep = if model == ThreatModel::E { 1.0 - p.eta } else { 1.0 };
                for (k, a) in (att0..b0).enumerate() {
                    s.trust[a] = head * keep.powi(k as i32);
                }
            }
        }
        ThreatModel::D | ThreatModel::F => {
            for d in att0..b0 {
                for r in recv0..att0 {
                    s.rate(r, d, true, HonestyTag::Honest);
                }
            }
            let mut received = 0.0;
            for d in att0..b0 {
                s.trust[d] = s.ingredients(d).trust_ingredient;
                received += s.trust[d];
            }
            let keep = if model == ThreatModel::F { 1.0 - p.gamma } else { 1.0 };
            for b in b0..n {
                s.trust[b] = received / nb as f64 * keep;
            }
        }
    }
    for a in att0..n {
        s.rate(a, 0, false, attack_tag);
    }
    attack_success_ratio(&s.ingredients(0))
}

/// Checks that the closed-form count is the smallest one that succeeds.
pub fn verify_cost_oracle(model: ThreatModel, p: &CostParams) -> Result<OracleVerdict, AttackError> {
    let report = closed_form_cost(model, p)?;
    let count = report.n_malicious;
    let nb = report.n_type_b;
    let at_count = scenario_success(model, p, count, nb);
    let at_previous = scenario_success(model, p, count - 1, nb);
    if at_count.is_successful() && !at_previous.is_successful() {
        Ok(OracleVerdict::Confirmed)
    } else {
        Ok(OracleVerdict::Refuted {
            count,
            at_count,
            at_previous,
        })
    }
}

/// One point of a cost sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub model: ThreatModel,
    pub params: CostParams,
}

pub const GOOD_TRUST_LEVELS: [f64; 3] = [0.75, 0.85, 0.95];
pub const MALICIOUS_TRUST: f64 = 0.35;
pub const HONEST_LEVELS: [u32; 3] = [5, 10, 15];
pub const SWEEP_MAX: u32 = 19;

/// The reference grid: A/B sweep `N_H` over 1..=19 for each good-trust level;
/// C–F sweep `I_H` over 1..=19 for `N_H ∈ {5, 10, 15}` with η = γ = 0.2.
/// Points outside a model's feasibility region are left out.
pub fn cost_grid() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for model in [ThreatModel::A, ThreatModel::B] {
        for tg in GOOD_TRUST_LEVELS {
            for nh in 1..=SWEEP_MAX {
                out.push(GridPoint {
                    model,
                    params: CostParams {
                        n_honest: nh,
                        trust_good: tg,
                        trust_malicious: MALICIOUS_TRUST,
                        ..CostParams::default()
                    },
                });
            }
        }
    }
    for model in [ThreatModel::C, ThreatModel::D, ThreatModel::E, ThreatModel::F] {
        for nh in HONEST_LEVELS {
            for ih in 1..=SWEEP_MAX {
                let params = CostParams {
                    n_honest: nh,
                    authentic_services: ih,
                    ..CostParams::default()
                };
                if check_params(model, &params).is_ok() {
                    out.push(GridPoint { model, params });
                }
            }
        }
    }
    out
}

/// Oracle verdict for every grid point, fanned out according to `exec`.
pub fn verify_grid(points: &[GridPoint], exec: Execution) -> Vec<Result<OracleVerdict, AttackError>> {
    par::map(exec, points, |g| verify_cost_oracle(g.model, &g.params))
}
