//! Row normalization, pre-trust blending and the three propagation kernels:
//! non-propagating (1-hop), uniformly distributed (power iteration) and
//! threshold-controlled.

use std::io;

use thiserror::Error;

use crate::ledger::ParticipantId;
use crate::local_trust::{DirectTrustMatrix, RaterWeights};

pub const DEFAULT_EPSILON: f64 = 0.15;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Score of a participant nobody has rated yet under a 1-hop kernel.
pub const COLD_START_SCORE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("threshold policy needs at least one positive edge")]
    EmptyMatrix,
    #[error("blend weight {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("threshold parameter {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("pre-trusted participant {0} out of range")]
    UnknownPretrusted(ParticipantId),
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Convergence status of a kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    Converged,
    /// Iteration cap reached; carries the last L1 change.
    NotConverged { residual: f64 },
    /// Closed-form kernels (1-hop, random) need no iteration.
    Direct,
}

impl Convergence {
    pub fn is_converged(self) -> bool {
        !matches!(self, Convergence::NotConverged { .. })
    }
}

/// Per-participant global trust scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrustVector {
    scores: Vec<f64>,
    pub iterations: usize,
    pub convergence: Convergence,
}

impl GlobalTrustVector {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self {
            scores,
            iterations: 0,
            convergence: Convergence::Direct,
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_scores(vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    #[inline]
    pub fn score(&self, id: ParticipantId) -> f64 {
        self.scores[id.0]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn set(&mut self, id: ParticipantId, value: f64) {
        self.scores[id.0] = value;
    }

    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Writes `id,score,iteration` rows.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), PropagationError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "score", "iteration"])?;
        for (i, s) in self.scores.iter().enumerate() {
            w.write_record(&[i.to_string(), s.to_string(), self.iterations.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row-normalized direct trust. Every row sums to 1 or is empty (dangling).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrustMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedTrustMatrix {
    /// Builds directly from dense rows; each non-zero row is rescaled to sum 1.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let rows = rows
            .iter()
            .map(|r| {
                let total: f64 = r.iter().sum();
                if total > 0.0 {
                    r.iter()
                        .enumerate()
                        .filter(|(_, &v)| v > 0.0)
                        .map(|(j, &v)| (j, v / total))
                        .collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self { n, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: ParticipantId, j: ParticipantId) -> f64 {
        self.rows[i.0]
            .iter()
            .find(|(k, _)| *k == j.0)
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn row(&self, i: ParticipantId) -> &[(usize, f64)] {
        &self.rows[i.0]
    }

    pub fn is_dangling(&self, i: ParticipantId) -> bool {
        self.rows[i.0].is_empty()
    }

    /// Views the normalized matrix as a direct trust matrix.
    pub fn to_direct(&self) -> DirectTrustMatrix {
        let mut m = DirectTrustMatrix::new(self.n, crate::local_trust::TrustVariant::Raw);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m.set(ParticipantId(i), ParticipantId(j), v.min(1.0))
                    .expect("normalized entries lie in [0, 1]");
            }
        }
        m
    }
}

/// `m_ij = s_ij / Σ_k s_ik`, or an all-zero row when the row sum is 0.
pub fn normalize(s: &DirectTrustMatrix) -> NormalizedTrustMatrix {
    let n = s.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in s.edges() {
        if v > 0.0 {
            rows[i.0].push((j.0, v));
        }
    }
    for row in &mut rows {
        let total: f64 = row.iter().map(|&(_, v)| v).sum();
        for entry in row.iter_mut() {
            entry.1 /= total;
        }
    }
    NormalizedTrustMatrix { n, rows }
}

/// Pre-trusted distribution and the blend weight toward it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreTrustVector {
    p: Vec<f64>,
    members: Vec<ParticipantId>,
    epsilon: f64,
}

impl PreTrustVector {
    /// Uniform mass over `pretrusted`; uniform over everyone when the set is empty.
    pub fn new(n: usize, pretrusted: &[ParticipantId], epsilon: f64) -> Result<Self, PropagationError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(PropagationError::InvalidEpsilon(epsilon));
        }
        let mut p = vec![0.0; n];
        let mut members: Vec<ParticipantId> = pretrusted.to_vec();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            p.iter_mut().for_each(|x| *x = 1.0 / n.max(1) as f64);
        } else {
            for &id in &members {
                if id.0 >= n {
                    return Err(PropagationError::UnknownPretrusted(id));
                }
                p[id.0] = 1.0 / members.len() as f64;
            }
        }
        Ok(Self { p, members, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Explicit pre-trusted set; empty when the mass is spread over everyone.
    pub fn members(&self) -> impl Iterator<Item = ParticipantId> + '_ {
        self.members.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// 1-hop aggregation, no propagation.
    NonPropagating,
    /// Power iteration over every positive edge.
    Uniform,
    /// Power iteration over edges whose direct trust exceeds a threshold.
    ThresholdControlled,
}

/// How the threshold-controlled kernel picks its cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// q-quantile (linear interpolation) of the positive entries.
    Percentile(f64),
    /// Mean of the positive entries.
    MeanNonzero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub threshold: ThresholdPolicy,
    pub tol: f64,
    pub max_iter: usize,
}

impl KernelConfig {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            threshold: ThresholdPolicy::MeanNonzero,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_threshold(mut self, policy: ThresholdPolicy) -> Self {
        self.threshold = policy;
        self
    }
}

/// Blended power iteration `T ← (1-ε)·Mᵀ·T + ε·P`, starting from `P`.
///
/// Mass sitting on dangling rows is handed to `P` before every step, so the
/// output always sums to 1. Stops at the first iterate whose L1 change drops
/// below `cfg.tol`; otherwise returns the `max_iter`-th iterate flagged as
/// not converged.
pub fn power_iterate(
    m: &NormalizedTrustMatrix,
    pre: &PreTrustVector,
    cfg: &KernelConfig,
) -> Result<GlobalTrustVector, PropagationError> {
    let n = m.len();
    if pre.len() != n {
        return Err(PropagationError::DimensionMismatch {
            matrix: n,
            vector: pre.len(),
        });
    }
    let eps = pre.epsilon();
    let p = pre.values();
    let mut t = p.to_vec();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for iter in 1..=cfg.max_iter.max(1) {
        let dangling: f64 = (0..n)
            .filter(|&i| m.rows[i].is_empty())
            .map(|i| t[i])
            .sum();
        for (x, &pj) in next.iter_mut().zip(p) {
            *x = (1.0 - eps) * dangling * pj + eps * pj;
        }
        for (i, row) in m.rows.iter().enumerate() {
            let ti = t[i];
            if ti == 0.0 {
                continue;
            }
            for &(j, v) in row {
                next[j] += (1.0 - eps) * v * ti;
            }
        }
        residual = t.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut t, &mut next);
        if residual < cfg.tol {
            return Ok(GlobalTrustVector {
                scores: t,
                iterations: iter,
                convergence: Convergence::Converged,
            });
        }
    }
    Ok(GlobalTrustVector {
        scores: t,
        iterations: cfg.max_iter.max(1),
        convergence: Convergence::NotConverged { residual },
    })
}

/// Resolves the cut-off of the threshold-controlled kernel.
pub fn resolve_threshold(s: &DirectTrustMatrix, policy: ThresholdPolicy) -> Result<f64, PropagationError> {
    match policy {
        ThresholdPolicy::Fixed(v) => {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(PropagationError::InvalidThreshold(v))
            }
        }
        ThresholdPolicy::Percentile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(PropagationError::InvalidThreshold(q));
            }
            let mut vals = s.nonzero_values();
            if vals.is_empty() {
                return Err(PropagationError::EmptyMatrix);
            }
            vals.sort_by(f64::total_cmp);
            let pos = q * (vals.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            Ok(vals[lo] + (vals[hi] - vals[lo]) * (pos - lo as f64))
        }
        ThresholdPolicy::MeanNonzero => {
            let vals = s.nonzero_values();
            if vals.is_empty() {
                return Err(PropagationError::EmptyMatrix);
            }
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Keeps the entries strictly above `tau`; everything else is dropped.
pub fn tctp_filter(s: &DirectTrustMatrix, tau: f64) -> DirectTrustMatrix {
    let mut out = s.clone();
    out.retain(|_, _, v| v > tau);
    out
}

/// 1-hop score of `j`: the weighted mean of the direct trust its raters
/// place on it. `None` weights mean uniform. A ratee without raters gets
/// [`COLD_START_SCORE`]; raters whose weights are all zero yield 0.
pub fn one_hop_aggregate(s: &DirectTrustMatrix, weights: Option<&RaterWeights>, j: ParticipantId) -> f64 {
    let raters = s.raters_of(j);
    if raters.is_empty() {
        return COLD_START_SCORE;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in raters {
        let w = match weights {
            Some(ws) => ws.get(&i).copied().unwrap_or(0.0),
            None => 1.0,
        };
        num += w * s.get(i, j);
        den += w;
    }
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_trust::TrustVariant;

    fn p(i: usize) -> ParticipantId {
        ParticipantId(i)
    }

    fn matrix(n: usize, edges: &[(usize, usize, f64)]) -> DirectTrustMatrix {
        let mut m = DirectTrustMatrix::new(n, TrustVariant::Raw);
        for &(i, j, v) in edges {
            m.set(p(i), p(j), v).unwrap();
        }
        m
    }

    #[test]
    fn normalize_examples() {
        let m = normalize(&matrix(3, &[(0, 1, 0.2), (0, 2, 0.2), (1, 0, 0.9)]));
        assert_eq!(m.get(p(0), p(1)), 0.5);
        assert_eq!(m.get(p(0), p(2)), 0.5);
        assert_eq!(m.get(p(1), p(0)), 1.0);
        assert!(m.is_dangling(p(2)));
        let zero = normalize(&matrix(2, &[(0, 1, 0.0)]));
        assert!(zero.is_dangling(p(0)));
        assert_eq!(normalize(&m.to_direct()), m);
    }

    #[test]
    fn full_blend_returns_pretrust() {
        let m = normalize(&matrix(3, &[(0, 1, 1.0), (1, 2, 1.0)]));
        let pre = PreTrustVector::new(3, &[p(0)], 1.0).unwrap();
        let t = power_iterate(&m, &pre, &KernelConfig::new(KernelKind::Uniform)).unwrap();
        assert_eq!(t.scores(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_two_cycle_is_fixed() {
        let m = normalize(&matrix(2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let pre = PreTrustVector::new(2, &[], 0.0).unwrap();
        let t = power_iterate(&m, &pre, &KernelConfig::new(KernelKind::Uniform)).unwrap();
        assert_eq!(t.scores(), &[0.5, 0.5]);
        assert_eq!(t.convergence, Convergence::Converged);
    }

    #[test]
    fn non_convergence_is_flagged() {
        // period-2 oscillation without damping never settles
        let m = normalize(&matrix(2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let pre = PreTrustVector::new(2, &[p(0)], 0.0).unwrap();
        let cfg = KernelConfig {
            max_iter: 10,
            ..KernelConfig::new(KernelKind::Uniform)
        };
        let t = power_iterate(&m, &pre, &cfg).unwrap();
        assert!(matches!(t.convergence, Convergence::NotConverged { residual } if residual > 1.0));
        assert!((t.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_in_edge_participant_gets_nothing() {
        let m = normalize(&matrix(4, &[(0, 1, 0.8), (1, 0, 0.5), (3, 0, 1.0)]));
        let pre = PreTrustVector::new(4, &[p(0)], 0.15).unwrap();
        let t = power_iterate(&m, &pre, &KernelConfig::new(KernelKind::Uniform)).unwrap();
        assert_eq!(t.score(p(2)), 0.0);
        assert_eq!(t.score(p(3)), 0.0);
        assert!((t.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let s = matrix(4, &[(0, 1, 0.2), (0, 2, 0.4), (1, 2, 0.8), (3, 0, 0.0)]);
        assert_eq!(resolve_threshold(&s, ThresholdPolicy::Fixed(0.5)).unwrap(), 0.5);
        assert_eq!(resolve_threshold(&s, ThresholdPolicy::Percentile(0.5)).unwrap(), 0.4);
        let s2 = matrix(3, &[(0, 1, 0.2), (0, 2, 0.4)]);
        assert!((resolve_threshold(&s2, ThresholdPolicy::MeanNonzero).unwrap() - 0.3).abs() < 1e-15);
        let empty = matrix(2, &[(0, 1, 0.0)]);
        assert!(matches!(
            resolve_threshold(&empty, ThresholdPolicy::MeanNonzero),
            Err(PropagationError::EmptyMatrix)
        ));
        assert!(matches!(
            resolve_threshold(&empty, ThresholdPolicy::Percentile(0.1)),
            Err(PropagationError::EmptyMatrix)
        ));
        assert!(resolve_threshold(&s, ThresholdPolicy::Fixed(1.5)).is_err());
    }

    #[test]
    fn filter_examples() {
        let s = matrix(3, &[(0, 1, 0.3), (0, 2, 0.6), (1, 2, 0.0)]);
        let kept = tctp_filter(&s, 0.0);
        assert_eq!(kept.edge_count(), 2);
        let f = tctp_filter(&s, 0.5);
        assert_eq!(f.get(p(0), p(1)), 0.0);
        assert_eq!(f.get(p(0), p(2)), 0.6);
        assert_eq!(tctp_filter(&f, 0.5), f);
        assert_eq!(tctp_filter(&s, 1.0).edge_count(), 0);
    }

    #[test]
    fn one_hop_examples() {
        let s = matrix(3, &[(0, 2, 0.8), (1, 2, 0.4)]);
        assert!((one_hop_aggregate(&s, None, p(2)) - 0.6).abs() < 1e-15);
        let w: RaterWeights = [(p(0), 0.75), (p(1), 0.25)].into();
        assert!((one_hop_aggregate(&s, Some(&w), p(2)) - 0.7).abs() < 1e-15);
        assert_eq!(one_hop_aggregate(&s, None, p(0)), COLD_START_SCORE);
        let zero: RaterWeights = [(p(0), 0.0), (p(1), 0.0)].into();
        assert_eq!(one_hop_aggregate(&s, Some(&zero), p(2)), 0.0);
    }

    #[test]
    fn pretrust_validation() {
        assert!(PreTrustVector::new(3, &[p(5)], 0.1).is_err());
        assert!(PreTrustVector::new(3, &[p(0)], 1.5).is_err());
        let pre = PreTrustVector::new(4, &[p(1), p(3), p(1)], 0.2).unwrap();
        assert_eq!(pre.values(), &[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(pre.members().collect::<Vec<_>>(), vec![p(1), p(3)]);
    }

    #[test]
    fn csv_export() {
        let t = GlobalTrustVector::from_scores(vec![0.25, 0.75]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,score,iteration\n0,0.25,0\n1,0.75,0\n");
    }
}
