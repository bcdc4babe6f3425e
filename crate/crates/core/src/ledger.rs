//! Participant identities, rating events and the interaction ledger.
//!
//! The ledger is the single source of truth for every trust computation in
//! the crate. It is append-only: events arrive in non-decreasing tick order
//! and the per-pair satisfied/unsatisfied counts are a pure fold over them.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense participant index in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub usize);

impl ParticipantId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl From<usize> for ParticipantId {
    fn from(v: usize) -> Self {
        ParticipantId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceOutcome {
    Authentic,
    Inauthentic,
}

/// Ground-truth label of a rating. Never visible to trust metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HonestyTag {
    Honest,
    Dishonest,
    NonCreditable,
}

/// Ratings at or above this value count as satisfied transactions.
pub const SATISFIED_THRESHOLD: f64 = 0.5;

/// Maps a binary rating `{-1, +1}` onto the unit scale.
pub fn binary_rating(r: i8) -> Result<f64, LedgerError> {
    match r {
        -1 => Ok(0.0),
        1 => Ok(1.0),
        _ => Err(LedgerError::RatingScale(r)),
    }
}

/// Maps a multiscale rating `{-1, 0, .., 5}` onto the unit scale via `(s + 1) / 6`.
pub fn multiscale_rating(s: i8) -> Result<f64, LedgerError> {
    if (-1..=5).contains(&s) {
        Ok((f64::from(s) + 1.0) / 6.0)
    } else {
        Err(LedgerError::RatingScale(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub rater: ParticipantId,
    pub ratee: ParticipantId,
    pub time: u64,
    pub value: f64,
    pub outcome: ServiceOutcome,
    pub honesty_tag: HonestyTag,
}

impl RatingEvent {
    #[inline]
    pub fn is_satisfied(&self) -> bool {
        self.value >= SATISFIED_THRESHOLD
    }

    /// Whether the rating agrees with the service actually delivered.
    #[inline]
    pub fn is_consistent(&self) -> bool {
        self.is_satisfied() == (self.outcome == ServiceOutcome::Authentic)
    }
}

/// Satisfied (δ) and unsatisfied (σ) transaction counts for one directed pair,
/// plus the running sum of rating values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairCounts {
    pub satisfied: u32,
    pub unsatisfied: u32,
    pub value_sum: f64,
}

impl PairCounts {
    #[inline]
    pub fn total(&self) -> u32 {
        self.satisfied + self.unsatisfied
    }

    /// Mean rating value, `None` when the pair never interacted.
    #[inline]
    pub fn mean_rating(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.value_sum / f64::from(n))
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("participant {id} out of range for a network of {n}")]
    UnknownParticipant { id: ParticipantId, n: usize },
    #[error("self-rating by {0} is not allowed")]
    SelfRating(ParticipantId),
    #[error("rating value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("time regression: event at tick {event} after ledger reached tick {now}")]
    TimeRegression { event: u64, now: u64 },
    #[error("honesty tag {tag:?} contradicts value {value} for a {outcome:?} service")]
    InconsistentTag {
        tag: HonestyTag,
        value: f64,
        outcome: ServiceOutcome,
    },
    #[error("rating {0} is not on the accepted scale")]
    RatingScale(i8),
    #[error("decay base {0} must lie in (0, 1]")]
    DecayBase(f64),
    #[error("rating tick {t_i} is later than the evaluation tick {t_n}")]
    FutureTick { t_i: u64, t_n: u64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Append-only record of rating events over a fixed population.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLedger {
    n: usize,
    events: Vec<RatingEvent>,
    counts: Vec<PairCounts>,
    now: u64,
}

impl InteractionLedger {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            events: Vec::new(),
            counts: vec![PairCounts::default(); n * n],
            now: 0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn events(&self) -> &[RatingEvent] {
        &self.events
    }

    pub fn participants(&self) -> impl Iterator<Item = ParticipantId> {
        (0..self.n).map(ParticipantId)
    }

    fn check_id(&self, id: ParticipantId) -> Result<(), LedgerError> {
        if id.0 < self.n {
            Ok(())
        } else {
            Err(LedgerError::UnknownParticipant { id, n: self.n })
        }
    }

    /// Validates and appends one event, updating the pair counts.
    pub fn record_transaction(&mut self, event: RatingEvent) -> Result<(), LedgerError> {
        self.check_id(event.rater)?;
        self.check_id(event.ratee)?;
        if event.rater == event.ratee {
            return Err(LedgerError::SelfRating(event.rater));
        }
        if !(0.0..=1.0).contains(&event.value) {
            return Err(LedgerError::ValueOutOfRange(event.value));
        }
        if event.time < self.now {
            return Err(LedgerError::TimeRegression {
                event: event.time,
                now: self.now,
            });
        }
        let tag_ok = match event.honesty_tag {
            HonestyTag::Honest => event.is_consistent(),
            HonestyTag::Dishonest => !event.is_consistent(),
            HonestyTag::NonCreditable => true,
        };
        if !tag_ok {
            return Err(LedgerError::InconsistentTag {
                tag: event.honesty_tag,
                value: event.value,
                outcome: event.outcome,
            });
        }

        let slot = &mut self.counts[event.rater.0 * self.n + event.ratee.0];
        if event.is_satisfied() {
            slot.satisfied += 1;
        } else {
            slot.unsatisfied += 1;
        }
        slot.value_sum += event.value;
        self.now = event.time;
        self.events.push(event);
        Ok(())
    }

    /// Counts for the directed pair `i -> j`; `(0, 0)` when they never interacted.
    ///
    /// Panics if either id is outside the population.
    #[inline]
    pub fn pair_counts(&self, i: ParticipantId, j: ParticipantId) -> PairCounts {
        assert!(i.0 < self.n && j.0 < self.n, "participant out of range");
        self.counts[i.0 * self.n + j.0]
    }

    /// Ratees `i` has rated at least once, in id order.
    pub fn rated_by(&self, i: ParticipantId) -> impl Iterator<Item = ParticipantId> + '_ {
        let row = &self.counts[i.0 * self.n..(i.0 + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(|(_, c)| c.total() > 0)
            .map(|(j, _)| ParticipantId(j))
    }

    /// Raters that have rated `j` at least once (the set `tr(j)`), in id order.
    pub fn raters_of(&self, j: ParticipantId) -> Vec<ParticipantId> {
        (0..self.n)
            .filter(|&i| self.counts[i * self.n + j.0].total() > 0)
            .map(ParticipantId)
            .collect()
    }

    /// Iterates every directed pair with at least one event.
    pub fn interacting_pairs(
        &self,
    ) -> impl Iterator<Item = (ParticipantId, ParticipantId, PairCounts)> + '_ {
        let n = self.n;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.total() > 0)
            .map(move |(k, c)| (ParticipantId(k / n), ParticipantId(k % n), *c))
    }

    /// Rebuilds a ledger by replaying `events` in order.
    pub fn replay<'a>(
        n: usize,
        events: impl IntoIterator<Item = &'a RatingEvent>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(n);
        for e in events {
            ledger.record_transaction(*e)?;
        }
        Ok(ledger)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), LedgerError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            w.serialize(CsvRow::from(e))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a ledger exported by [`write_csv`](Self::write_csv). When `n` is
    /// `None` the population is the largest id seen plus one.
    pub fn read_csv<R: io::Read>(reader: R, n: Option<usize>) -> Result<Self, LedgerError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let events = r
            .deserialize::<CsvRow>()
            .map(|row| row.map(RatingEvent::from))
            .collect::<Result<Vec<_>, _>>()?;
        let n = n.unwrap_or_else(|| {
            events
                .iter()
                .map(|e| e.rater.0.max(e.ratee.0) + 1)
                .max()
                .unwrap_or(0)
        });
        Self::replay(n, &events)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    rater: usize,
    ratee: usize,
    time: u64,
    value: f64,
    outcome: ServiceOutcome,
    honesty_tag: HonestyTag,
}

impl From<&RatingEvent> for CsvRow {
    fn from(e: &RatingEvent) -> Self {
        CsvRow {
            rater: e.rater.0,
            ratee: e.ratee.0,
            time: e.time,
            value: e.value,
            outcome: e.outcome,
            honesty_tag: e.honesty_tag,
        }
    }
}

impl From<CsvRow> for RatingEvent {
    fn from(r: CsvRow) -> Self {
        RatingEvent {
            rater: ParticipantId(r.rater),
            ratee: ParticipantId(r.ratee),
            time: r.time,
            value: r.value,
            outcome: r.outcome,
            honesty_tag: r.honesty_tag,
        }
    }
}

/// Time-decay weight `a^(t_n - t_i)` of a rating issued at `t_i`.
pub fn decay_weight(t_i: u64, t_n: u64, a: f64) -> Result<f64, LedgerError> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(LedgerError::DecayBase(a));
    }
    if t_i > t_n {
        return Err(LedgerError::FutureTick { t_i, t_n });
    }
    let gap = t_n - t_i;
    if a == 1.0 || gap == 0 {
        return Ok(1.0);
    }
    Ok(match i32::try_from(gap) {
        Ok(g) => a.powi(g),
        Err(_) => a.powf(gap as f64),
    })
}
