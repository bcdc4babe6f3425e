//! Pairwise direct trust: raw aggregation rules, time decay, feedback
//! similarity and credibility weighting.

use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

use crate::ledger::{decay_weight, InteractionLedger, LedgerError, ParticipantId};
use crate::par::{self, Execution};
use crate::propagation::GlobalTrustVector;

/// Default tolerated failure ratio for the success-ratio rule.
pub const DEFAULT_THETA: f64 = 0.05;

/// Similarity assigned to two participants with no commonly rated target.
pub const EMPTY_COMMON_SIMILARITY: f64 = 0.0;

#[derive(Debug, Error)]
pub enum LocalTrustError {
    #[error("{rater} has never rated {ratee}")]
    NoHistory {
        rater: ParticipantId,
        ratee: ParticipantId,
    },
    #[error("rater set is empty")]
    EmptyRaterSet,
    #[error("credibility weights do not cover edge {rater} -> {ratee}")]
    ModeMismatch {
        rater: ParticipantId,
        ratee: ParticipantId,
    },
    #[error("direct trust {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("self-trust edge at {0}")]
    Diagonal(ParticipantId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Which stage of local aggregation produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustVariant {
    Raw,
    Decayed,
    Fcw,
}

/// Rule turning a pair's rating history into a direct trust value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalRule {
    /// Transaction success ratio with tolerated failure ratio `theta`.
    SuccessRatio { theta: f64 },
    /// Beta expectation `(δ + 2a) / (δ + σ + 2)`; `base_rate = 0.5` is the plain expectation.
    BetaExpectation { base_rate: f64 },
    /// Time-decayed mean rating with decay base `a`.
    Decayed { a: f64 },
}

/// Sparse `n × n` direct trust matrix. Stored keys are the pairs with
/// rating history; a stored zero still marks the rater as part of `tr(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectTrustMatrix {
    n: usize,
    entries: BTreeMap<(ParticipantId, ParticipantId), f64>,
    variant: TrustVariant,
}

impl DirectTrustMatrix {
    pub fn new(n: usize, variant: TrustVariant) -> Self {
        Self {
            n,
            entries: BTreeMap::new(),
            variant,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn variant(&self) -> TrustVariant {
        self.variant
    }

    pub fn set(&mut self, i: ParticipantId, j: ParticipantId, s: f64) -> Result<(), LocalTrustError> {
        if i == j {
            return Err(LocalTrustError::Diagonal(i));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(LocalTrustError::ValueOutOfRange(s));
        }
        assert!(i.0 < self.n && j.0 < self.n, "participant out of range");
        self.entries.insert((i, j), s);
        Ok(())
    }

    /// Direct trust `s_ij`; absent edges read as 0.
    #[inline]
    pub fn get(&self, i: ParticipantId, j: ParticipantId) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, i: ParticipantId, j: ParticipantId) -> bool {
        self.entries.contains_key(&(i, j))
    }

    /// All stored edges in `(rater, ratee)` order.
    pub fn edges(&self) -> impl Iterator<Item = (ParticipantId, ParticipantId, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &s)| (i, j, s))
    }

    pub fn edge_count(&self) -> usize {
        self.entries.len()
    }

    /// Strictly positive entries, in edge order.
    pub fn nonzero_values(&self) -> Vec<f64> {
        self.entries.values().copied().filter(|&s| s > 0.0).collect()
    }

    /// Participants with a stored edge into `j`.
    pub fn raters_of(&self, j: ParticipantId) -> Vec<ParticipantId> {
        self.entries
            .keys()
            .filter(|(_, t)| *t == j)
            .map(|&(i, _)| i)
            .collect()
    }

    /// Builds the direct trust matrix for every interacting pair.
    ///
    /// Under the success-ratio rule a pair with no satisfied transaction
    /// carries zero trust; the neutral fallback only applies once the rater
    /// has been satisfied at least once.
    pub fn from_ledger(ledger: &InteractionLedger, rule: LocalRule) -> Result<Self, LocalTrustError> {
        let n = ledger.len();
        match rule {
            LocalRule::SuccessRatio { theta } => {
                let mut m = Self::new(n, TrustVariant::Raw);
                for (i, j, c) in ledger.interacting_pairs() {
                    let s = if c.satisfied == 0 {
                        0.0
                    } else {
                        success_ratio_trust(c.satisfied, c.unsatisfied, theta)
                    };
                    m.entries.insert((i, j), s);
                }
                Ok(m)
            }
            LocalRule::BetaExpectation { base_rate } => {
                let mut m = Self::new(n, TrustVariant::Raw);
                for (i, j, c) in ledger.interacting_pairs() {
                    let s = beta_base_rate_trust(c.satisfied, c.unsatisfied, base_rate);
                    m.entries.insert((i, j), s);
                }
                Ok(m)
            }
            LocalRule::Decayed { a } => {
                // single pass: Σ w·v and Σ w per pair
                let now = ledger.now();
                let mut acc: BTreeMap<(ParticipantId, ParticipantId), (f64, f64)> = BTreeMap::new();
                for e in ledger.events() {
                    let w = decay_weight(e.time, now, a)?;
                    let slot = acc.entry((e.rater, e.ratee)).or_insert((0.0, 0.0));
                    slot.0 += w * e.value;
                    slot.1 += w;
                }
                let mut m = Self::new(n, TrustVariant::Decayed);
                for (k, (num, den)) in acc {
                    m.entries.insert(k, (num / den).clamp(0.0, 1.0));
                }
                Ok(m)
            }
        }
    }

    /// Keeps only entries for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(ParticipantId, ParticipantId, f64) -> bool) {
        self.entries.retain(|&(i, j), s| keep(i, j, *s));
    }

    pub(crate) fn with_variant(mut self, variant: TrustVariant) -> Self {
        self.variant = variant;
        self
    }

    /// Writes the stored edges as `i,j,s` triples.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), LocalTrustError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "s"])?;
        for (i, j, s) in self.edges() {
            w.write_record(&[i.0.to_string(), j.0.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Success-ratio direct trust: `δ / (δ + σ + 1)` while the failure ratio
/// `σ / (δ + σ + 1)` stays within `theta`, otherwise the neutral `1/2`.
pub fn success_ratio_trust(satisfied: u32, unsatisfied: u32, theta: f64) -> f64 {
    let denom = f64::from(satisfied) + f64::from(unsatisfied) + 1.0;
    if f64::from(unsatisfied) / denom <= theta {
        f64::from(satisfied) / denom
    } else {
        0.5
    }
}

/// Expectation of `Beta(δ + 1, σ + 1)`.
pub fn beta_expectation_trust(satisfied: u32, unsatisfied: u32) -> f64 {
    (f64::from(satisfied) + 1.0) / (f64::from(satisfied) + f64::from(unsatisfied) + 2.0)
}

/// Beta reputation score with a base rate `a`: `(δ + 2a) / (δ + σ + 2)`.
pub fn beta_base_rate_trust(satisfied: u32, unsatisfied: u32, base_rate: f64) -> f64 {
    (f64::from(satisfied) + 2.0 * base_rate) / (f64::from(satisfied) + f64::from(unsatisfied) + 2.0)
}

/// Time-decayed mean of the ratings `i` gave `j`, weighted by `a^(now - t)`.
pub fn decayed_direct_trust(
    ledger: &InteractionLedger,
    i: ParticipantId,
    j: ParticipantId,
    a: f64,
) -> Result<f64, LocalTrustError> {
    let now = ledger.now();
    let mut num = 0.0;
    let mut den = 0.0;
    for e in ledger.events().iter().filter(|e| e.rater == i && e.ratee == j) {
        let w = decay_weight(e.time, now, a)?;
        num += w * e.value;
        den += w;
    }
    if den == 0.0 {
        // also validates `a` when there is no history
        decay_weight(0, 0, a)?;
        return Err(LocalTrustError::NoHistory { rater: i, ratee: j });
    }
    Ok(num / den)
}

/// Feedback similarity of `v` and `w`: one minus the root-mean-square
/// difference of their mean ratings over commonly rated targets.
pub fn feedback_similarity(ledger: &InteractionLedger, v: ParticipantId, w: ParticipantId) -> f64 {
    let mut sum_sq = 0.0;
    let mut common = 0usize;
    for x in ledger.participants() {
        let (Some(a), Some(b)) = (
            ledger.pair_counts(v, x).mean_rating(),
            ledger.pair_counts(w, x).mean_rating(),
        ) else {
            continue;
        };
        sum_sq += (a - b) * (a - b);
        common += 1;
    }
    if common == 0 {
        return EMPTY_COMMON_SIMILARITY;
    }
    (1.0 - (sum_sq / common as f64).sqrt()).clamp(0.0, 1.0)
}

/// All-pairs feedback similarity, symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn compute(ledger: &InteractionLedger, exec: Execution) -> Self {
        let n = ledger.len();
        // mean rating table, NaN where no history
        let means: Vec<f64> = (0..n * n)
            .map(|k| {
                ledger
                    .pair_counts(ParticipantId(k / n), ParticipantId(k % n))
                    .mean_rating()
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let rows: Vec<Vec<f64>> = par::map_range(exec, n, |v| {
            let rv = &means[v * n..(v + 1) * n];
            (0..n)
                .map(|w| {
                    let rw = &means[w * n..(w + 1) * n];
                    let mut sum_sq = 0.0;
                    let mut common = 0usize;
                    for (a, b) in rv.iter().zip(rw) {
                        if a.is_nan() || b.is_nan() {
                            continue;
                        }
                        sum_sq += (a - b) * (a - b);
                        common += 1;
                    }
                    if common == 0 {
                        EMPTY_COMMON_SIMILARITY
                    } else {
                        (1.0 - (sum_sq / common as f64).sqrt()).clamp(0.0, 1.0)
                    }
                })
                .collect()
        });
        Self {
            n,
            values: rows.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, v: ParticipantId, w: ParticipantId) -> f64 {
        self.values[v.0 * self.n + w.0]
    }

    pub fn row(&self, v: ParticipantId) -> &[f64] {
        &self.values[v.0 * self.n..(v.0 + 1) * self.n]
    }
}

/// Per-rater weights for a single ratee.
pub type RaterWeights = BTreeMap<ParticipantId, f64>;

/// Rater-level credibility `T(i) / Σ_m T(m)` over the raters of one ratee.
/// Falls back to uniform weights when every rater has zero trust.
pub fn rater_level_credibility(
    trust: &GlobalTrustVector,
    raters_of_j: &[ParticipantId],
) -> Result<RaterWeights, LocalTrustError> {
    if raters_of_j.is_empty() {
        return Err(LocalTrustError::EmptyRaterSet);
    }
    let total: f64 = raters_of_j.iter().map(|&i| trust.score(i)).sum();
    Ok(raters_of_j
        .iter()
        .map(|&i| {
            let w = if total > 0.0 {
                trust.score(i) / total
            } else {
                1.0 / raters_of_j.len() as f64
            };
            (i, w)
        })
        .collect())
}

/// Third-party credibility `sim(i, k) / Σ_m sim(i, m)` with `m` ranging over
/// the raters of the target. Zero when every similarity is zero.
pub fn third_party_similarity_credibility(
    ledger: &InteractionLedger,
    i: ParticipantId,
    k: ParticipantId,
    raters_of_j: &[ParticipantId],
) -> f64 {
    let denom: f64 = raters_of_j
        .iter()
        .map(|&m| feedback_similarity(ledger, i, m))
        .sum();
    if denom > 0.0 {
        feedback_similarity(ledger, i, k) / denom
    } else {
        0.0
    }
}

/// [`third_party_similarity_credibility`] for every rater at once, using a
/// precomputed similarity matrix.
pub fn third_party_weights(
    sim: &SimilarityMatrix,
    i: ParticipantId,
    raters_of_j: &[ParticipantId],
) -> RaterWeights {
    let denom: f64 = raters_of_j.iter().map(|&m| sim.get(i, m)).sum();
    raters_of_j
        .iter()
        .map(|&k| {
            let w = if denom > 0.0 { sim.get(i, k) / denom } else { 0.0 };
            (k, w)
        })
        .collect()
}

/// Exponential credibility `exp(1 - 1/sim)`, taken as 0 at `sim = 0`.
pub fn exp_credibility(sim: f64) -> f64 {
    if sim <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / sim.min(1.0)).exp()
    }
}

pub type EdgeWeights = BTreeMap<(ParticipantId, ParticipantId), f64>;

/// Credibility attached to a direct trust matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum CredibilityWeights {
    /// `Cr_i` of the rater on each edge, normalized over that ratee's raters.
    RaterLevel(EdgeWeights),
    /// `Cr'_ij` derived from the similarity of the two endpoints.
    PairwiseScoreLevel(EdgeWeights),
    /// Raw similarities; third-party weights are normalized per ratee on use.
    ThirdPartyScoreLevel(SimilarityMatrix),
}

impl CredibilityWeights {
    /// Rater-level weights for every edge of `raw` from the trust vector.
    pub fn rater_level(raw: &DirectTrustMatrix, trust: &GlobalTrustVector) -> Result<Self, LocalTrustError> {
        let mut by_ratee: BTreeMap<ParticipantId, Vec<ParticipantId>> = BTreeMap::new();
        for (i, j, _) in raw.edges() {
            by_ratee.entry(j).or_default().push(i);
        }
        let mut out = EdgeWeights::new();
        for (j, raters) in by_ratee {
            for (i, w) in rater_level_credibility(trust, &raters)? {
                out.insert((i, j), w);
            }
        }
        Ok(CredibilityWeights::RaterLevel(out))
    }

    /// Exponential pairwise credibility for every edge of `raw`.
    pub fn pairwise(raw: &DirectTrustMatrix, sim: &SimilarityMatrix) -> Self {
        CredibilityWeights::PairwiseScoreLevel(
            raw.edges()
                .map(|(i, j, _)| ((i, j), exp_credibility(sim.get(i, j))))
                .collect(),
        )
    }

    /// Unit weight on every edge of `raw`.
    pub fn unit(raw: &DirectTrustMatrix) -> Self {
        CredibilityWeights::RaterLevel(raw.edges().map(|(i, j, _)| ((i, j), 1.0)).collect())
    }
}

/// Applies credibility weights to a raw or decayed direct trust matrix.
///
/// Rater and pairwise modes scale each edge by its weight. The third-party
/// mode replaces `s_ij` by `Σ_k Cr_ik · s_kj` over the raters `k` of `j`,
/// i.e. the credibility-weighted mean of the third-party opinions.
pub fn fcw_direct_trust(
    raw: &DirectTrustMatrix,
    cred: &CredibilityWeights,
) -> Result<DirectTrustMatrix, LocalTrustError> {
    let mut out = DirectTrustMatrix::new(raw.len(), TrustVariant::Fcw);
    match cred {
        CredibilityWeights::RaterLevel(w) | CredibilityWeights::PairwiseScoreLevel(w) => {
            for (i, j, s) in raw.edges() {
                let c = *w
                    .get(&(i, j))
                    .ok_or(LocalTrustError::ModeMismatch { rater: i, ratee: j })?;
                out.entries.insert((i, j), (c * s).clamp(0.0, 1.0));
            }
        }
        CredibilityWeights::ThirdPartyScoreLevel(sim) => {
            if sim.len() != raw.len() {
                return Err(LocalTrustError::ModeMismatch {
                    rater: ParticipantId(sim.len()),
                    ratee: ParticipantId(raw.len()),
                });
            }
            let mut by_ratee: BTreeMap<ParticipantId, Vec<ParticipantId>> = BTreeMap::new();
            for (i, j, _) in raw.edges() {
                by_ratee.entry(j).or_default().push(i);
            }
            for (j, raters) in &by_ratee {
                for &i in raters {
                    let est: f64 = third_party_weights(sim, i, raters)
                        .into_iter()
                        .map(|(k, c)| c * raw.get(k, *j))
                        .sum();
                    out.entries.insert((i, *j), est.clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(out.with_variant(TrustVariant::Fcw))
}
