//! Experiment configs, presets, the synthetic similarity study and CSV output.
//!
//! Every CSV starts with a `#` metadata block (seed, config digest, artifact
//! version, notes) followed by a header row.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attack::{closed_form_cost, cost_grid, AttackError};
use crate::ledger::{HonestyTag, InteractionLedger, LedgerError, ParticipantId, RatingEvent, ServiceOutcome};
use crate::local_trust::SimilarityMatrix;
use crate::metrics::builtin_metrics;
use crate::par::{self, Execution};
use crate::simulation::{run_batch, seed_batch, ExperimentReport, SimulationConfig, SimulationError};
use crate::threats::{build_chain, Role, ThreatError, ThreatModel, CHAIN_RATING};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid config")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Threat(#[from] ThreatError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("csv output")]
    Csv(#[from] csv::Error),
    #[error("file access")]
    Io(#[from] io::Error),
}

fn schema(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::SchemaViolation(msg.into())
}

/// Keys accepted in an experiment file; anything else is rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_good: Option<usize>,
    pub n_malicious: Option<usize>,
    pub n_pretrusted: Option<usize>,
    pub transactions: Option<usize>,
    pub metric: Option<String>,
    pub model: Option<String>,
    pub f: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub n_type_b: Option<usize>,
    pub n_type_d: Option<usize>,
    pub explore_p: Option<f64>,
    pub responders_k: Option<usize>,
    pub reeval_every: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub epsilon: Option<f64>,
}

impl ConfigFile {
    /// Overlays the keys present here onto `base`.
    pub fn apply(&self, mut base: SimulationConfig) -> Result<SimulationConfig, ExperimentError> {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { base.$field = v; } )* };
        }
        set!(n_good, n_malicious, n_pretrusted, transactions, metric, explore_p, responders_k);
        set!(reeval_every, seed, noise, epsilon);
        if let Some(m) = &self.model {
            base.threat.model = ThreatModel::parse(m)?;
        }
        let t = &mut base.threat;
        if let Some(v) = self.f {
            t.f = v;
        }
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.gamma {
            t.gamma = v;
        }
        if let Some(v) = self.n_type_b {
            t.n_type_b = v;
        }
        if let Some(v) = self.n_type_d {
            t.n_type_d = v;
        }
        Ok(base)
    }
}

/// Parses an experiment file: either flat keys (one experiment named
/// `default`) or one table per named experiment.
pub fn parse_config(text: &str) -> Result<Vec<(String, SimulationConfig)>, ExperimentError> {
    let table: toml::Table = text.parse()?;
    let sectioned = !table.is_empty() && table.values().all(|v| v.is_table());
    let mut out = Vec::new();
    if sectioned {
        for (name, value) in table {
            let file: ConfigFile = value.try_into()?;
            let cfg = file.apply(SimulationConfig::default())?;
            cfg.validate()?;
            out.push((name, cfg));
        }
    } else {
        let file: ConfigFile = toml::Value::Table(table).try_into()?;
        let cfg = file.apply(SimulationConfig::default())?;
        cfg.validate()?;
        out.push(("default".to_string(), cfg));
    }
    Ok(out)
}

/// Parses `key=value`, reading the value as TOML and falling back to a bare string.
pub fn parse_override(kv: &str) -> Result<(String, toml::Value), ExperimentError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| schema(format!("override {kv:?} is not key=value")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k, value))
}

fn overrides_table(overrides: &[(String, toml::Value)]) -> toml::Table {
    overrides.iter().cloned().collect()
}

/// Hex SHA-256 prefix identifying a configuration text.
pub fn config_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Canonical text of a simulation config, used for digests.
pub fn describe(cfg: &SimulationConfig) -> String {
    format!("{cfg:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub seed: u64,
    pub digest: String,
    pub notes: Vec<String>,
}

impl Metadata {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Self {
            seed,
            digest: config_digest(config_text),
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# config_digest={}", self.digest)?;
        writeln!(w, "# artifact_version={ARTIFACT_VERSION}")?;
        for n in &self.notes {
            writeln!(w, "# {n}")?;
        }
        Ok(())
    }
}

/// Opens `path`, writes the metadata block and hands back a CSV writer.
pub fn csv_with_metadata(path: &Path, meta: &Metadata) -> Result<csv::Writer<BufWriter<File>>, ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    meta.write_to(&mut f)?;
    Ok(csv::Writer::from_writer(f))
}

/// Reads a CSV written by this module, skipping the metadata block.
pub fn read_csv_records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = rdr.headers()?.clone();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

/// A run labelled for output.
pub struct LabelledReport<'a> {
    pub label: &'a str,
    pub report: &'a ExperimentReport,
}

pub fn write_summary(path: &Path, meta: &Metadata, runs: &[LabelledReport]) -> Result<(), ExperimentError> {
    let mut w = csv_with_metadata(path, meta)?;
    w.write_record([
        "experiment", "metric", "model", "seed", "n_good", "n_malicious", "f", "eta", "gamma",
        "n_type_b", "n_type_d", "transactions", "failed", "failed_fraction", "converged",
    ])?;
    for r in runs {
        let c = &r.report.config;
        let t = c.resolved_threat();
        w.write_record([
            r.label.to_string(),
            r.report.metric.name.clone(),
            t.model.to_string(),
            c.seed.to_string(),
            c.n_good.to_string(),
            c.n_malicious.to_string(),
            t.f.to_string(),
            t.eta.to_string(),
            t.gamma.to_string(),
            t.n_type_b.to_string(),
            t.n_type_d.to_string(),
            c.transactions.to_string(),
            r.report.failed.to_string(),
            r.report.failed_fraction.to_string(),
            r.report.all_converged().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory rows for every participant whose role passes `keep`.
pub fn write_trajectories(
    path: &Path,
    meta: &Metadata,
    runs: &[LabelledReport],
    keep: impl Fn(Role) -> bool,
) -> Result<(), ExperimentError> {
    let mut w = csv_with_metadata(path, meta)?;
    w.write_record(["experiment", "metric", "model", "seed", "participant", "role", "round", "score"])?;
    for r in runs {
        let rep = r.report;
        for (round, row) in rep.trajectories.iter().enumerate() {
            for (id, &score) in row.iter().enumerate() {
                if !keep(rep.roles[id]) {
                    continue;
                }
                w.write_record([
                    r.label.to_string(),
                    rep.metric.name.clone(),
                    rep.config.threat.model.to_string(),
                    rep.config.seed.to_string(),
                    id.to_string(),
                    rep.roles[id].label().to_string(),
                    (round + 1).to_string(),
                    score.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_services(path: &Path, meta: &Metadata, runs: &[LabelledReport]) -> Result<(), ExperimentError> {
    let mut w = csv_with_metadata(path, meta)?;
    w.write_record(["experiment", "metric", "model", "seed", "group", "authentic", "inauthentic"])?;
    for r in runs {
        for c in &r.report.services {
            w.write_record([
                r.label.to_string(),
                r.report.metric.name.clone(),
                r.report.config.threat.model.to_string(),
                r.report.config.seed.to_string(),
                c.group.label().to_string(),
                c.authentic.to_string(),
                c.inauthentic.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one file per threat model with its closed-form cost sweep.
pub fn write_cost_curves(
    out_dir: &Path,
    meta: &Metadata,
    models: &[ThreatModel],
) -> Result<Vec<PathBuf>, ExperimentError> {
    let grid = cost_grid();
    let mut paths = Vec::new();
    for &model in models {
        let path = out_dir.join(format!("cost_{model}.csv"));
        let mut w = csv_with_metadata(&path, meta)?;
        w.write_record([
            "model", "n_honest", "authentic_services_in", "trust_good", "trust_malicious", "eta",
            "gamma", "n_malicious", "n_type_b", "dishonest_ratings", "honest_ratings",
            "authentic_services", "total_ratings", "raw_bound", "raw_total_ratings",
            "raw_honest_ratings",
        ])?;
        for g in grid.iter().filter(|g| g.model == model) {
            let r = closed_form_cost(model, &g.params)?;
            let p = &r.params;
            w.write_record([
                model.to_string(),
                p.n_honest.to_string(),
                p.authentic_services.to_string(),
                p.trust_good.to_string(),
                p.trust_malicious.to_string(),
                p.eta.to_string(),
                p.gamma.to_string(),
                r.n_malicious.to_string(),
                r.n_type_b.to_string(),
                r.dishonest_ratings.to_string(),
                r.honest_ratings.to_string(),
                r.authentic_services.to_string(),
                r.total_ratings.to_string(),
                r.raw_bound.to_string(),
                r.raw_total_ratings.to_string(),
                r.raw_honest_ratings.to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Synthetic rating graph for the similarity study.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGraphSpec {
    pub n_regular: usize,
    pub n_malicious: usize,
    pub eta: f64,
    pub zipf_exponent: f64,
    /// Lower end of the band regular participants rate each other in.
    pub regular_floor: f64,
    pub regular_to_malicious: (f64, f64),
    pub eta_halfwidth: f64,
}

impl Default for SyntheticGraphSpec {
    fn default() -> Self {
        Self {
            n_regular: 100,
            n_malicious: 30,
            eta: 0.5,
            zipf_exponent: 1.0,
            regular_floor: 0.85,
            regular_to_malicious: (0.85, 1.0),
            eta_halfwidth: 0.05,
        }
    }
}

impl SyntheticGraphSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_regular < 2 {
            return Err(schema("n_regular must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(schema("eta outside [0, 1]"));
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent <= 0.0 {
            return Err(schema("zipf_exponent must be positive"));
        }
        let (lo, hi) = self.regular_to_malicious;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) || !(0.0..=1.0).contains(&self.regular_floor) {
            return Err(schema("rating intervals must lie in [0, 1]"));
        }
        Ok(())
    }

    fn apply(&mut self, overrides: &[(String, toml::Value)]) -> Result<(), ExperimentError> {
        for (k, v) in overrides {
            let num = || v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
            let count = || v.as_integer().filter(|&i| i >= 0).map(|i| i as usize);
            let bad = || schema(format!("bad value for {k}"));
            match k.as_str() {
                "n_regular" => self.n_regular = count().ok_or_else(bad)?,
                "n_malicious" => self.n_malicious = count().ok_or_else(bad)?,
                "zipf_exponent" => self.zipf_exponent = num().ok_or_else(bad)?,
                "eta" => self.eta = num().ok_or_else(bad)?,
                _ => return Err(schema(format!("unknown key {k:?} for similarity study"))),
            }
        }
        Ok(())
    }

    /// Rating ledger of the synthetic graph. Regular participants rate each
    /// other at `floor + (1 - floor)·w` with `w` the normalized Zipf rank
    /// weight, rate malicious ones uniformly in `regular_to_malicious`, and
    /// receive `η ± halfwidth` from malicious ones; malicious participants
    /// are wired in a ring at 1.0.
    pub fn build_ledger(&self, seed: u64) -> Result<InteractionLedger, ExperimentError> {
        self.validate()?;
        let nr = self.n_regular;
        let n = nr + self.n_malicious;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zipf = Zipf::new(nr as u64, self.zipf_exponent).map_err(|e| schema(e.to_string()))?;
        let mut ledger = InteractionLedger::new(n);
        let push = |l: &mut InteractionLedger, i: usize, j: usize, value: f64| {
            let value = value.clamp(0.0, 1.0);
            l.record_transaction(RatingEvent {
                rater: ParticipantId(i),
                ratee: ParticipantId(j),
                time: 0,
                value,
                outcome: if value >= 0.5 {
                    ServiceOutcome::Authentic
                } else {
                    ServiceOutcome::Inauthentic
                },
                honesty_tag: HonestyTag::Honest,
            })
        };
        let (lo, hi) = self.regular_to_malicious;
        for u in 0..nr {
            for v in 0..nr {
                if u != v {
                    let rank: f64 = zipf.sample(&mut rng);
                    let w = rank.powf(-self.zipf_exponent);
                    push(&mut ledger, u, v, self.regular_floor + (1.0 - self.regular_floor) * w)?;
                }
            }
            for m in nr..n {
                push(&mut ledger, u, m, rng.gen_range(lo..=hi))?;
            }
        }
        for m in nr..n {
            for v in 0..nr {
                let d = rng.gen_range(-self.eta_halfwidth..=self.eta_halfwidth);
                push(&mut ledger, m, v, self.eta + d)?;
            }
        }
        if self.n_malicious >= 2 {
            let ids: Vec<_> = (nr..n).map(ParticipantId).collect();
            for (a, b) in build_chain(&ids)? {
                push(&mut ledger, a.index(), b.index(), CHAIN_RATING)?;
            }
        }
        Ok(ledger)
    }
}

/// Similarity matrix of a synthetic graph with its group means.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStudy {
    pub eta: f64,
    pub seed: u64,
    pub n_regular: usize,
    pub matrix: SimilarityMatrix,
    pub mean_good_good: f64,
    pub mean_cross: f64,
    pub mean_malicious_malicious: f64,
}

fn mean_over(sim: &SimilarityMatrix, a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in a {
        for j in b.clone() {
            if i != j {
                sum += sim.get(ParticipantId(i), ParticipantId(j));
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn similarity_heatmap(
    spec: &SyntheticGraphSpec,
    seed: u64,
    exec: Execution,
) -> Result<SimilarityStudy, ExperimentError> {
    let ledger = spec.build_ledger(seed)?;
    let matrix = SimilarityMatrix::compute(&ledger, exec);
    let nr = spec.n_regular;
    let n = nr + spec.n_malicious;
    Ok(SimilarityStudy {
        eta: spec.eta,
        seed,
        n_regular: nr,
        mean_good_good: mean_over(&matrix, 0..nr, 0..nr),
        mean_cross: mean_over(&matrix, 0..nr, nr..n),
        mean_malicious_malicious: mean_over(&matrix, nr..n, nr..n),
        matrix,
    })
}

pub fn write_similarity_matrix(path: &Path, meta: &Metadata, study: &SimilarityStudy) -> Result<(), ExperimentError> {
    let mut w = csv_with_metadata(path, meta)?;
    let n = study.matrix.len();
    let mut header = vec!["id".to_string()];
    header.extend((0..n).map(|j| j.to_string()));
    w.write_record(&header)?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend(study.matrix.row(ParticipantId(i)).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_similarity_summary(
    path: &Path,
    meta: &Metadata,
    studies: &[SimilarityStudy],
) -> Result<(), ExperimentError> {
    let mut w = csv_with_metadata(path, meta)?;
    w.write_record(["eta", "seed", "mean_good_good", "mean_cross", "mean_malicious_malicious"])?;
    for s in studies {
        w.write_record([
            s.eta.to_string(),
            s.seed.to_string(),
            s.mean_good_good.to_string(),
            s.mean_cross.to_string(),
            s.mean_malicious_malicious.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetId {
    CostCurves,
    SmpBehavior,
    Trajectories,
    FailedFraction,
    SimilarityHeatmap,
}

impl PresetId {
    pub const ALL: [PresetId; 5] = [
        PresetId::CostCurves,
        PresetId::SmpBehavior,
        PresetId::Trajectories,
        PresetId::FailedFraction,
        PresetId::SimilarityHeatmap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::CostCurves => "cost-curves",
            PresetId::SmpBehavior => "smp-behavior",
            PresetId::Trajectories => "trajectories",
            PresetId::FailedFraction => "failed-fraction",
            PresetId::SimilarityHeatmap => "similarity-heatmap",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ExperimentError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ExperimentError::UnknownPreset(s.to_string()))
    }
}

pub const SIMILARITY_ETAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
pub const TRAJECTORY_METRICS: [&str; 4] = ["EigenTrust", "PeerTrustTVM", "ServiceTrust", "ServiceTrust++"];
pub const SMP_METRICS: [&str; 4] = ["BetaTrust", "EigenTrust", "ServiceTrust", "ServiceTrust++"];
pub const SWEEP_PROBABILITIES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const TYPE_SPLITS: [(usize, usize); 3] = [(10, 30), (20, 20), (30, 10)];

/// Base config of the simulation presets with overrides applied.
fn preset_base(overrides: &[(String, toml::Value)], seed: u64) -> Result<SimulationConfig, ExperimentError> {
    let file: ConfigFile = toml::Value::Table(overrides_table(overrides)).try_into()?;
    let mut base = file.apply(SimulationConfig::default())?;
    if file.seed.is_none() {
        base.seed = seed;
    }
    Ok(base)
}

fn with_threat(base: &SimulationConfig, metric: &str, model: ThreatModel) -> SimulationConfig {
    let mut cfg = base.clone();
    cfg.metric = metric.to_string();
    cfg.threat.model = model;
    cfg.threat.chain.clear();
    cfg
}

/// Configs of the failed-fraction sweep for one metric, labelled by sweep point.
pub fn failed_fraction_sweep(base: &SimulationConfig, metric: &str) -> Vec<(String, SimulationConfig)> {
    let mut out = Vec::new();
    let total = base.n_good + base.n_malicious;
    for model in [ThreatModel::A, ThreatModel::B] {
        for pct in (0..=60).step_by(10) {
            let mut c = with_threat(base, metric, model);
            c.n_malicious = total * pct / 100;
            c.n_good = total - c.n_malicious;
            out.push((format!("{model}:malicious={pct}%"), c));
        }
    }
    for f in SWEEP_PROBABILITIES {
        let mut c = with_threat(base, metric, ThreatModel::C);
        c.threat.f = f;
        out.push((format!("C:f={f}"), c));
    }
    for (b, d) in TYPE_SPLITS {
        let mut c = with_threat(base, metric, ThreatModel::D);
        c.threat.n_type_b = b;
        c.threat.n_type_d = d;
        out.push((format!("D:split={b}/{d}"), c));
    }
    for eta in SWEEP_PROBABILITIES {
        let mut c = with_threat(base, metric, ThreatModel::E);
        c.threat.eta = eta;
        out.push((format!("E:eta={eta}"), c));
    }
    for gamma in SWEEP_PROBABILITIES {
        let mut c = with_threat(base, metric, ThreatModel::F);
        c.threat.gamma = gamma;
        c.threat.n_type_b = 20;
        c.threat.n_type_d = 20;
        out.push((format!("F:gamma={gamma}"), c));
    }
    out
}

/// Trajectory preset configs: the reference population with f = 0.4, η = 0.5.
pub fn trajectory_configs(base: &SimulationConfig) -> Vec<(String, SimulationConfig)> {
    let mut out = Vec::new();
    for model in [ThreatModel::C, ThreatModel::E] {
        for metric in TRAJECTORY_METRICS {
            let mut c = with_threat(base, metric, model);
            c.threat.f = 0.4;
            c.threat.eta = 0.5;
            out.push((format!("{model}:{metric}"), c));
        }
    }
    out
}

fn run_labelled(
    labelled: Vec<(String, SimulationConfig)>,
    seeds: usize,
    exec: Execution,
) -> Result<Vec<(String, ExperimentReport)>, ExperimentError> {
    let mut labels = Vec::new();
    let mut cfgs = Vec::new();
    for (label, cfg) in labelled {
        for c in seed_batch(&cfg, seeds) {
            labels.push(label.clone());
            cfgs.push(c);
        }
    }
    let reports = run_batch(&cfgs, exec);
    labels
        .into_iter()
        .zip(reports)
        .map(|(l, r)| Ok((l, r?)))
        .collect()
}

fn labelled(runs: &[(String, ExperimentReport)]) -> Vec<LabelledReport<'_>> {
    runs.iter()
        .map(|(label, report)| LabelledReport { label, report })
        .collect()
}

/// Runs a preset and writes its CSVs under `out_dir`.
pub fn run_preset(
    preset: PresetId,
    overrides: &[(String, toml::Value)],
    seed: u64,
    seeds: usize,
    out_dir: &Path,
    exec: Execution,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let seeds = seeds.max(1);
    let digest_text = format!("{}|{:?}|{seed}|{seeds}", preset.name(), overrides);
    let meta = Metadata::new(seed, &digest_text).note(format!("preset={}", preset.name()));
    match preset {
        PresetId::CostCurves => {
            if !overrides.is_empty() {
                return Err(schema("cost-curves takes no overrides"));
            }
            write_cost_curves(out_dir, &meta, &ThreatModel::ALL)
        }
        PresetId::SimilarityHeatmap => {
            let mut spec = SyntheticGraphSpec::default();
            spec.apply(overrides)?;
            let etas: Vec<f64> = if overrides.iter().any(|(k, _)| k == "eta") {
                vec![spec.eta]
            } else {
                SIMILARITY_ETAS.to_vec()
            };
            let jobs: Vec<(f64, u64)> = etas
                .iter()
                .flat_map(|&eta| (0..seeds as u64).map(move |s| (eta, seed.wrapping_add(s))))
                .collect();
            let studies = par::map(exec, &jobs, |&(eta, s)| {
                similarity_heatmap(&SyntheticGraphSpec { eta, ..spec.clone() }, s, Execution::Sequential)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            let meta = meta.note("malicious-malicious ratings: ring edges at 1.0");
            let mut paths = Vec::new();
            for s in studies.iter().filter(|s| s.seed == seed) {
                let path = out_dir.join(format!("similarity_eta{}.csv", s.eta));
                write_similarity_matrix(&path, &meta, s)?;
                paths.push(path);
            }
            let path = out_dir.join("similarity_summary.csv");
            write_similarity_summary(&path, &meta, &studies)?;
            paths.push(path);
            Ok(paths)
        }
        PresetId::Trajectories => {
            let base = preset_base(overrides, seed)?;
            let runs = run_labelled(trajectory_configs(&base), seeds, exec)?;
            let path = out_dir.join("trajectories.csv");
            write_trajectories(&path, &meta, &labelled(&runs), |r| r == Role::Camouflage)?;
            let summary = out_dir.join("summary.csv");
            write_summary(&summary, &meta, &labelled(&runs))?;
            Ok(vec![path, summary])
        }
        PresetId::SmpBehavior => {
            let base = preset_base(overrides, seed)?;
            let mut cfgs = Vec::new();
            for model in [ThreatModel::C, ThreatModel::D, ThreatModel::E, ThreatModel::F] {
                for metric in SMP_METRICS {
                    let mut c = with_threat(&base, metric, model);
                    if model.uses_split() && c.threat.n_type_b + c.threat.n_type_d == 0 {
                        c.threat.n_type_b = c.n_malicious / 2;
                        c.threat.n_type_d = c.n_malicious - c.n_malicious / 2;
                    }
                    cfgs.push((format!("{model}:{metric}"), c));
                }
            }
            let runs = run_labelled(cfgs, seeds, exec)?;
            let path = out_dir.join("services.csv");
            write_services(&path, &meta, &labelled(&runs))?;
            Ok(vec![path])
        }
        PresetId::FailedFraction => {
            let base = preset_base(overrides, seed)?;
            let cfgs: Vec<_> = builtin_metrics()
                .iter()
                .flat_map(|m| failed_fraction_sweep(&base, &m.name))
                .collect();
            let runs = run_labelled(cfgs, seeds, exec)?;
            let path = out_dir.join("summary.csv");
            write_summary(&path, &meta, &labelled(&runs))?;
            Ok(vec![path])
        }
    }
}

/// Runs every experiment of a config file over `seeds` seeds and writes
/// `summary.csv`, `trajectories.csv` and `services.csv`.
pub fn run_config_file(
    text: &str,
    seed_override: Option<u64>,
    seeds: usize,
    out_dir: &Path,
    exec: Execution,
) -> Result<Vec<(String, ExperimentReport)>, ExperimentError> {
    let mut experiments = parse_config(text)?;
    if let Some(s) = seed_override {
        for (_, c) in &mut experiments {
            c.seed = s;
        }
    }
    let seed = experiments.first().map(|(_, c)| c.seed).unwrap_or(0);
    let runs = run_labelled(experiments, seeds.max(1), exec)?;
    let meta = Metadata::new(seed, text);
    write_summary(&out_dir.join("summary.csv"), &meta, &labelled(&runs))?;
    write_trajectories(&out_dir.join("trajectories.csv"), &meta, &labelled(&runs), |_| true)?;
    write_services(&out_dir.join("services.csv"), &meta, &labelled(&runs))?;
    Ok(runs)
}
