//! Confusion counts, parameter sweeps for the baselines and the weighted
//! network, and the CSV report they produce.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::naive::{
    fit_normal, gamma_for_alpha, Naive1Model, Naive2Model, Naive3Model, NaiveError,
};
use crate::nnet::{
    self, Activation, Architecture, LossKind, LossSpec, Model, NnetError, TrainConfig,
};
use crate::simulator::SimTrace;

pub const REPORT_HEADER: [&str; 9] = [
    "algorithm",
    "param1",
    "param2",
    "tp",
    "fp",
    "tn",
    "fn",
    "accuracy",
    "seed",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: predictions {preds:?} vs labels {labels:?}")]
    Shape {
        preds: (usize, usize),
        labels: (usize, usize),
    },
    #[error("empty report")]
    EmptyReport,
    #[error("empty output path")]
    EmptyPath,
    #[error("dataset does not match trace: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Naive(#[from] NaiveError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("report format: {0}")]
    Format(String),
}

/// Positive class is a stock-out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return f64::NAN;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn record(&mut self, pred: u8, label: u8) {
        match (pred, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::Shape {
            preds: (preds.len(), 1),
            labels: (labels.len(), 1),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        c.record(p, l);
    }
    Ok(c)
}

/// Counts over the selected label columns of every row.
pub fn confusion_columns(
    preds: &Array2<u8>,
    labels: &Array2<u8>,
    columns: &[usize],
) -> Result<ConfusionCounts, EvalError> {
    if preds.dim() != labels.dim() || columns.iter().any(|&c| c >= labels.ncols()) {
        return Err(EvalError::Shape {
            preds: preds.dim(),
            labels: labels.dim(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, l) in preds.axis_iter(Axis(0)).zip(labels.axis_iter(Axis(0))) {
        for &col in columns {
            c.record(p[col], l[col]);
        }
    }
    Ok(c)
}

/// Counts of the constant predictor that always answers the more frequent
/// label of `labels` over `columns`.
pub fn majority_counts(labels: &Array2<u8>, columns: &[usize]) -> ConfusionCounts {
    let mut ones = 0u64;
    let mut zeros = 0u64;
    for row in labels.axis_iter(Axis(0)) {
        for &c in columns {
            if row[c] == 1 {
                ones += 1;
            } else {
                zeros += 1;
            }
        }
    }
    if ones > zeros {
        ConfusionCounts {
            tp: ones,
            fp: zeros,
            tn: 0,
            fn_: 0,
        }
    } else {
        ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: zeros,
            fn_: ones,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub algorithm: String,
    pub param1: Option<f64>,
    pub param2: Option<f64>,
    pub counts: ConfusionCounts,
    /// NaN for a run that diverged.
    pub accuracy: f64,
    pub seed: u64,
}

impl ReportRow {
    pub fn new(
        algorithm: &str,
        param1: Option<f64>,
        param2: Option<f64>,
        counts: ConfusionCounts,
        seed: u64,
    ) -> Self {
        ReportRow {
            algorithm: algorithm.to_string(),
            param1,
            param2,
            counts,
            accuracy: counts.accuracy(),
            seed,
        }
    }

    pub fn diverged(&self) -> bool {
        self.accuracy.is_nan()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.algorithm
            .cmp(&other.algorithm)
            .then(opt(self.param1, other.param1))
            .then(opt(self.param2, other.param2))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
}

impl SweepReport {
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(ReportRow::key_cmp);
        SweepReport { rows }
    }

    pub fn extend(&mut self, rows: Vec<ReportRow>) {
        self.rows.extend(rows);
        self.rows.sort_by(ReportRow::key_cmp);
    }

    pub fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    /// Highest accuracy over rows whose algorithm starts with `prefix`.
    pub fn best(&self, prefix: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.algorithm.starts_with(prefix) && !r.diverged())
            .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REPORT_HEADER)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.algorithm.clone(),
                opt(r.param1),
                opt(r.param2),
                r.counts.tp.to_string(),
                r.counts.fp.to_string(),
                r.counts.tn.to_string(),
                r.counts.fn_.to_string(),
                r.accuracy.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<SweepReport, EvalError> {
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().ne(REPORT_HEADER) {
            return Err(EvalError::Format("unexpected report header".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| EvalError::Format(format!("row {}: bad {what}", i + 1));
            let opt = |s: &str, what: &str| -> Result<Option<f64>, EvalError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(what))
                }
            };
            let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(what));
            rows.push(ReportRow {
                algorithm: rec[0].to_string(),
                param1: opt(&rec[1], "param1")?,
                param2: opt(&rec[2], "param2")?,
                counts: ConfusionCounts {
                    tp: int(&rec[3], "tp")?,
                    fp: int(&rec[4], "fp")?,
                    tn: int(&rec[5], "tn")?,
                    fn_: int(&rec[6], "fn")?,
                },
                accuracy: rec[7].parse().map_err(|_| bad("accuracy"))?,
                seed: int(&rec[8], "seed")?,
            });
        }
        Ok(SweepReport { rows })
    }

    /// Companion `algorithm,param1,param2,fp,fn` table for trade-off plots.
    pub fn write_tradeoff_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["algorithm", "param1", "param2", "fp", "fn"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in self.rows.iter().filter(|r| !r.diverged()) {
            w.write_record([
                r.algorithm.clone(),
                opt(r.param1),
                opt(r.param2),
                r.counts.fp.to_string(),
                r.counts.fn_.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn emit_report(report: &SweepReport, path: &Path) -> Result<(), EvalError> {
    if path.as_os_str().is_empty() {
        return Err(EvalError::EmptyPath);
    }
    if report.rows.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<SweepReport, EvalError> {
    SweepReport::read_csv(std::fs::File::open(path)?)
}

/// `period,y_0,...` rows of binary predictions.
pub fn write_predictions<W: Write>(
    periods: &[usize],
    preds: &Array2<u8>,
    writer: W,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = std::iter::once("period".to_string())
        .chain((0..preds.ncols()).map(|i| format!("y_{i}")))
        .collect();
    w.write_record(&header)?;
    for (t, row) in periods.iter().zip(preds.axis_iter(Axis(0))) {
        let fields: Vec<String> = std::iter::once(t.to_string())
            .chain(row.iter().map(u8::to_string))
            .collect();
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` evenly spaced probabilities `i / (n + 1)`; 99 gives 0.01..=0.99.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveKind {
    One,
    Two,
    Three,
}

impl NaiveKind {
    pub const ALL: [NaiveKind; 3] = [NaiveKind::One, NaiveKind::Two, NaiveKind::Three];

    pub fn id(self) -> &'static str {
        match self {
            NaiveKind::One => "naive1",
            NaiveKind::Two => "naive2",
            NaiveKind::Three => "naive3",
        }
    }
}

/// One scored output (retailer, item) seen through its own inventory
/// position: next-period labels on both sides of the split.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries {
    pub node: usize,
    pub item: usize,
    pub lead_time: u32,
    pub level: f64,
    pub train: Vec<(f64, u8)>,
    pub train_demand: Vec<f64>,
    pub test_ip: Vec<f64>,
    pub test_labels: Vec<u8>,
}

/// Builds per-retailer series from a trace and the two halves of a dataset
/// derived from it; labels are the datasets' next-period columns.
pub fn node_series(
    trace: &SimTrace,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<NodeSeries>, EvalError> {
    let meta = &train.meta;
    if meta.nodes != trace.nodes() || meta.items != trace.items() {
        return Err(EvalError::Mismatch(format!(
            "dataset has {}x{} outputs, trace {}x{}",
            meta.nodes,
            meta.items,
            trace.nodes(),
            trace.items()
        )));
    }
    if let Some(&t) = test.meta.periods.last() {
        if t + 1 >= trace.periods() {
            return Err(EvalError::Mismatch(format!(
                "sample period {t} beyond trace"
            )));
        }
    }
    let mut out = Vec::new();
    for &r in &meta.retailers {
        for item in 0..meta.items {
            let col = meta.label_index(1, r, item);
            let pairs = |ds: &Dataset| -> Vec<(f64, u8)> {
                ds.meta
                    .periods
                    .iter()
                    .enumerate()
                    .map(|(row, &t)| (trace.record(t, r, item).ip, ds.y[[row, col]]))
                    .collect()
            };
            let test_pairs = pairs(test);
            out.push(NodeSeries {
                node: r,
                item,
                lead_time: trace.meta.lead_times[r],
                level: meta.threshold,
                train: pairs(train),
                train_demand: train
                    .meta
                    .periods
                    .iter()
                    .map(|&t| trace.record(t, r, item).demand)
                    .collect(),
                test_ip: test_pairs.iter().map(|p| p.0).collect(),
                test_labels: test_pairs.iter().map(|p| p.1).collect(),
            });
        }
    }
    Ok(out)
}

/// One row per grid value. Naive-2 maps each value `a` to `gamma = a/(1-a)`
/// and reports gamma as its parameter.
pub fn sweep_naive(
    kind: NaiveKind,
    series: &[NodeSeries],
    grid: &[f64],
    bins: usize,
    seed: u64,
) -> Result<Vec<ReportRow>, EvalError> {
    let mut rows = Vec::with_capacity(grid.len());
    match kind {
        NaiveKind::One => {
            let fits = series
                .iter()
                .map(|s| Naive1Model::fit(&s.train, 0.5).map(|m| m.fit))
                .collect::<Result<Vec<_>, _>>()?;
            for &a in grid {
                let mut c = ConfusionCounts::default();
                for (s, fit) in series.iter().zip(&fits) {
                    let m = Naive1Model::from_fit(*fit, a)?;
                    score(&mut c, s, |ip| m.predict(ip));
                }
                rows.push(ReportRow::new(kind.id(), Some(a), None, c, seed));
            }
        }
        NaiveKind::Two => {
            let models = series
                .iter()
                .map(|s| Naive2Model::fit(&s.train, bins, 1.0))
                .collect::<Result<Vec<_>, _>>()?;
            for &a in grid {
                let gamma = gamma_for_alpha(a);
                let mut c = ConfusionCounts::default();
                for (s, m) in series.iter().zip(&models) {
                    let m = m.clone().with_gamma(gamma)?;
                    score(&mut c, s, |ip| m.predict(ip));
                }
                rows.push(ReportRow::new(kind.id(), Some(gamma), None, c, seed));
            }
        }
        NaiveKind::Three => {
            let fits = series
                .iter()
                .map(|s| fit_normal(&s.train_demand))
                .collect::<Result<Vec<_>, _>>()?;
            for &a in grid {
                let mut c = ConfusionCounts::default();
                for (s, fit) in series.iter().zip(&fits) {
                    let m = Naive3Model::from_fit(*fit, s.lead_time, a, s.level)?;
                    score(&mut c, s, |ip| m.predict(ip));
                }
                rows.push(ReportRow::new(kind.id(), Some(a), None, c, seed));
            }
        }
    }
    Ok(rows)
}

fn score(c: &mut ConfusionCounts, s: &NodeSeries, predict: impl Fn(f64) -> u8) {
    for (&ip, &y) in s.test_ip.iter().zip(&s.test_labels) {
        c.record(predict(ip), y);
    }
}

/// Majority-class row over the next-period retailer labels of `series`.
pub fn majority_row(series: &[NodeSeries], seed: u64) -> ReportRow {
    let labels: Vec<u8> = series
        .iter()
        .flat_map(|s| s.test_labels.iter().copied())
        .collect();
    let ones = labels.iter().filter(|&&l| l == 1).count() as u64;
    let zeros = labels.len() as u64 - ones;
    let counts = if ones > zeros {
        ConfusionCounts {
            tp: ones,
            fp: zeros,
            tn: 0,
            fn_: 0,
        }
    } else {
        ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: zeros,
            fn_: ones,
        }
    };
    ReportRow::new("majority", None, None, counts, seed)
}

/// Stable per-pair seed; adding grid points never changes existing rows.
pub fn pair_seed(base: u64, c_p: f64, c_n: f64) -> u64 {
    let mut h = splitmix(base);
    h = splitmix(h ^ c_p.to_bits());
    splitmix(h ^ c_n.to_bits().rotate_left(32))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Network shape and optimizer settings shared by every job of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSetup {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for NetSetup {
    fn default() -> Self {
        NetSetup {
            hidden: nnet::DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Sigmoid,
            train: TrainConfig::default(),
        }
    }
}

/// Algorithm id used in reports for a trained network.
pub fn dnn_id(loss: &LossSpec) -> String {
    if loss.c_p == 1.0 && loss.c_n == 1.0 {
        format!("dnn-{}", loss.kind.name())
    } else {
        format!("wdnn-{}", loss.kind.name())
    }
}

/// Outcome of one training job.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub history: Vec<f64>,
    pub predictions: Array2<u8>,
}

/// Trains on standardized `train` with a seed derived from `base_seed` and
/// the class weights, and predicts on `test`.
pub fn train_one(
    train: &Dataset,
    test: &Dataset,
    loss: &LossSpec,
    setup: &NetSetup,
    base_seed: u64,
) -> Result<Trained, NnetError> {
    let seed = pair_seed(base_seed, loss.c_p, loss.c_n);
    let mut arch = Architecture::new(train.input_dim(), &setup.hidden, train.label_dim());
    arch.activation = setup.activation;
    let mut model = Model::init(&arch, seed)?;
    let cfg = TrainConfig {
        seed,
        ..setup.train.clone()
    };
    let out = nnet::train(&mut model, train.x.view(), train.y.view(), loss, &cfg)?;
    let predictions = model.predict(test.x.view(), loss)?;
    Ok(Trained {
        model,
        history: out.history,
        predictions,
    })
}

/// Trains one network per `(c_p, c_n)` pair on up to `workers` threads.
/// A diverged pair yields a row with zero counts and NaN accuracy.
pub fn sweep_weights(
    train: &Dataset,
    test: &Dataset,
    kind: LossKind,
    grid: &[(f64, f64)],
    setup: &NetSetup,
    base_seed: u64,
    columns: &[usize],
    workers: usize,
) -> Result<Vec<ReportRow>, EvalError> {
    let job = |&(c_p, c_n): &(f64, f64)| -> Result<ReportRow, EvalError> {
        let loss = LossSpec { kind, c_p, c_n };
        let seed = pair_seed(base_seed, c_p, c_n);
        match train_one(train, test, &loss, setup, base_seed) {
            Ok(t) => {
                let c = confusion_columns(&t.predictions, &test.y, columns)?;
                Ok(ReportRow::new(
                    &format!("wdnn-{}", kind.name()),
                    Some(c_p),
                    Some(c_n),
                    c,
                    seed,
                ))
            }
            Err(NnetError::Diverged { .. }) => Ok(ReportRow {
                algorithm: format!("wdnn-{}", kind.name()),
                param1: Some(c_p),
                param2: Some(c_n),
                counts: ConfusionCounts::default(),
                accuracy: f64::NAN,
                seed,
            }),
            Err(e) => Err(e.into()),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Format(e.to_string()))?;
    let rows: Result<Vec<ReportRow>, EvalError> =
        pool.install(|| grid.par_iter().map(job).collect());
    Ok(SweepReport::new(rows?).rows)
}

/// Small grid spanning both sides of equal weights.
pub fn default_weight_grid() -> Vec<(f64, f64)> {
    vec![
        (1.0, 1.0),
        (2.0, 1.0),
        (5.0, 1.0),
        (10.0, 1.0),
        (15.0, 1.0),
        (1.0, 2.0),
        (1.0, 5.0),
        (1.0, 10.0),
        (1.0, 15.0),
    ]
}

/// 118 pairs in `[0.3, 15]`: `c_n = 1` with `c_p = 0.3, 0.55, ..., 14.8`,
/// and the mirror image with the roles swapped.
pub fn full_weight_grid() -> Vec<(f64, f64)> {
    let arm: Vec<f64> = (0..59).map(|i| 0.3 + 0.25 * i as f64).collect();
    arm.iter()
        .map(|&c| (c, 1.0))
        .chain(arm.iter().map(|&c| (1.0, c)))
        .collect()
}
