//! Sliding-window samples built from a simulation trace.
//!
//! A sample whose window ends at period `t` has input
//! `[features(t), (IL, IT) for every node, item and period t-k+1..=t]`,
//! laid out node-major, then item-major, then period-ascending. Its label
//! vector holds one entry per (horizon m, node, item): `IL_{t+m} < threshold`.
//! Label index is `(m - 1) * nodes * items + node * items + item`, so the
//! first `nodes * items` labels always describe the next period.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::weekday_of_period;
use crate::simulator::{meta_path, SimTrace};
use crate::topology::NodeId;

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("trace has {periods} periods; need at least {needed} for k={k}, q={q}")]
    TooShort {
        periods: usize,
        needed: usize,
        k: usize,
        q: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("split at fraction {fraction} of {samples} samples leaves one side empty")]
    EmptySplit { fraction: f64, samples: usize },
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Exogenous per-period features placed ahead of the state window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feature {
    /// `t mod 7`, Monday = 0.
    DayOfWeek,
}

impl Feature {
    pub fn value(self, period: usize) -> f64 {
        match self {
            Feature::DayOfWeek => weekday_of_period(period) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub k: usize,
    pub q: usize,
    pub threshold: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            k: DEFAULT_WINDOW,
            q: 1,
            threshold: 0.0,
        }
    }
}

/// Per-coordinate affine map fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Population statistics per column; a constant column gets std 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let rows = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / rows;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / rows;
            let sd = var.sqrt();
            mean.push(m);
            std.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Standardization { mean, std }
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[j]) / self.std[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub k: usize,
    pub q: usize,
    pub threshold: f64,
    pub features: Vec<Feature>,
    pub nodes: usize,
    pub items: usize,
    pub retailers: Vec<NodeId>,
    pub seed: u64,
    pub topology: String,
    /// Window-end period of every sample, ascending.
    pub periods: Vec<usize>,
    /// Chronological share of samples used for training.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Fitted on the training share.
    pub standardization: Option<Standardization>,
}

fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

impl DatasetMeta {
    pub fn input_dim(&self) -> usize {
        self.features.len() + 2 * self.nodes * self.items * self.k
    }

    pub fn label_dim(&self) -> usize {
        self.nodes * self.items * self.q
    }

    pub fn label_index(&self, m: usize, node: NodeId, item: usize) -> usize {
        (m - 1) * self.nodes * self.items + node * self.items + item
    }

    /// Label columns of retailer outputs, optionally restricted to one horizon.
    pub fn retailer_columns(&self, horizon: Option<usize>) -> Vec<usize> {
        let ms: Vec<usize> = match horizon {
            Some(m) => vec![m],
            None => (1..=self.q).collect(),
        };
        let mut cols = Vec::new();
        for m in ms {
            for &r in &self.retailers {
                for item in 0..self.items {
                    cols.push(self.label_index(m, r, item));
                }
            }
        }
        cols
    }
}

/// Inputs `x` (samples x D) and binary labels `y` (samples x n*items*q).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub x: Array2<f64>,
    pub y: Array2<u8>,
}

pub fn build_samples(
    trace: &SimTrace,
    window: WindowSpec,
    features: &[Feature],
) -> Result<Dataset, DatasetError> {
    let WindowSpec { k, q, threshold } = window;
    if k == 0 || q == 0 {
        return Err(DatasetError::InvalidParameter(format!(
            "k and q must be positive (k={k}, q={q})"
        )));
    }
    if !threshold.is_finite() {
        return Err(DatasetError::InvalidParameter(
            "threshold must be finite".into(),
        ));
    }
    let periods = trace.periods();
    let warmup = trace.meta.warmup;
    let needed = warmup + k + q;
    if periods < needed {
        return Err(DatasetError::TooShort {
            periods,
            needed,
            k,
            q,
        });
    }
    let (n, items) = (trace.nodes(), trace.items());
    let starts: Vec<usize> = (warmup + k - 1..periods - q).collect();
    let mut meta = DatasetMeta {
        k,
        q,
        threshold,
        features: features.to_vec(),
        nodes: n,
        items,
        retailers: trace.meta.retailers.clone(),
        seed: trace.meta.seed,
        topology: trace.meta.topology.clone(),
        periods: Vec::new(),
        train_fraction: DEFAULT_TRAIN_FRACTION,
        standardization: None,
    };
    let d = meta.input_dim();
    let g = meta.label_dim();
    let mut x = Array2::<f64>::zeros((starts.len(), d));
    let mut y = Array2::<u8>::zeros((starts.len(), g));
    for (row, &t) in starts.iter().enumerate() {
        let mut xr = x.row_mut(row);
        let mut col = 0;
        for f in features {
            xr[col] = f.value(t);
            col += 1;
        }
        for node in 0..n {
            for item in 0..items {
                for p in t + 1 - k..=t {
                    let r = trace.record(p, node, item);
                    xr[col] = r.il;
                    xr[col + 1] = r.it;
                    col += 2;
                }
            }
        }
        let mut yr = y.row_mut(row);
        for m in 1..=q {
            for node in 0..n {
                for item in 0..items {
                    let il = trace.record(t + m, node, item).il;
                    yr[meta.label_index(m, node, item)] = u8::from(il < threshold);
                }
            }
        }
    }
    meta.periods = starts;
    Ok(Dataset { meta, x, y })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn label_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn labels(&self, row: usize) -> ArrayView1<'_, u8> {
        self.y.row(row)
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let mut meta = self.meta.clone();
        meta.periods = self.meta.periods[range.clone()].to_vec();
        Dataset {
            meta,
            x: self.x.slice(s![range.clone(), ..]).to_owned(),
            y: self.y.slice(s![range, ..]).to_owned(),
        }
    }

    /// Chronological prefix/suffix split at `floor(fraction * len)`.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DatasetError::InvalidParameter(format!(
                "train fraction {fraction} not in (0, 1)"
            )));
        }
        let cut = (fraction * self.len() as f64).floor() as usize;
        if cut == 0 || cut == self.len() {
            return Err(DatasetError::EmptySplit {
                fraction,
                samples: self.len(),
            });
        }
        Ok((self.slice(0..cut), self.slice(cut..self.len())))
    }

    /// Split at the recorded training share.
    pub fn train_test(&self) -> Result<(Dataset, Dataset), DatasetError> {
        self.split(self.meta.train_fraction)
    }

    /// Fraction of label entries equal to 1 over the given columns.
    pub fn label_rate(&self, columns: &[usize]) -> f64 {
        let total = self.len() * columns.len();
        if total == 0 {
            return 0.0;
        }
        let ones: usize = self
            .y
            .axis_iter(Axis(0))
            .map(|row| columns.iter().filter(|&&c| row[c] == 1).count())
            .sum();
        ones as f64 / total as f64
    }

    /// Applies `stats` and records them in the metadata.
    pub fn standardized(mut self, stats: &Standardization) -> Dataset {
        stats.apply(&mut self.x);
        self.meta.standardization = Some(stats.clone());
        self
    }

    /// CSV with header `x_0..x_{D-1},y_0..y_{G-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x_{i}"))
            .chain((0..self.label_dim()).map(|i| format!("y_{i}")))
            .collect();
        w.write_record(&header)?;
        let mut fields = Vec::with_capacity(header.len());
        for row in 0..self.len() {
            fields.clear();
            fields.extend(self.x.row(row).iter().map(f64::to_string));
            fields.extend(self.y.row(row).iter().map(u8::to_string));
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(meta: DatasetMeta, reader: R) -> Result<Dataset, DatasetError> {
        let d = meta.input_dim();
        let g = meta.label_dim();
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width != d + g {
            return Err(DatasetError::Format(format!(
                "expected {} columns (D={d}, labels={g}), found {width}",
                d + g
            )));
        }
        let rows = meta.periods.len();
        let mut x = Array2::<f64>::zeros((rows, d));
        let mut y = Array2::<u8>::zeros((rows, g));
        let mut count = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if row >= rows {
                return Err(DatasetError::Format(format!("more than {rows} rows")));
            }
            for (j, field) in rec.iter().enumerate() {
                let bad = |e: &dyn std::fmt::Display| {
                    DatasetError::Format(format!("row {} column {j}: {e}", row + 1))
                };
                if j < d {
                    x[[row, j]] = field.parse().map_err(|e| bad(&e))?;
                } else {
                    let v: u8 = field.parse().map_err(|e| bad(&e))?;
                    if v > 1 {
                        return Err(bad(&"label must be 0 or 1"));
                    }
                    y[[row, j - d]] = v;
                }
            }
            count += 1;
        }
        if count != rows {
            return Err(DatasetError::Format(format!(
                "expected {rows} rows, found {count}"
            )));
        }
        Ok(Dataset { meta, x, y })
    }

    /// Writes `path` (CSV) and `path` + `.meta.json`.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut file = BufWriter::new(File::create(path)?);
        self.write_csv(&mut file)?;
        file.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        std::fs::write(meta_path(path), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        let text = std::fs::read_to_string(meta_path(path))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| DatasetError::Format(e.to_string()))?;
        let file = std::io::BufReader::new(File::open(path)?);
        Dataset::read_csv(meta, file)
    }
}

/// Fits statistics on `train` and applies them to both sides.
pub fn standardize(train: Dataset, test: Dataset) -> (Dataset, Dataset, Standardization) {
    let stats = Standardization::fit(&train.x);
    (train.standardized(&stats), test.standardized(&stats), stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{PeriodRecord, TraceMeta};
    use ndarray::array;

    fn hand_trace(il: &[f64], it: &[f64]) -> SimTrace {
        let meta = TraceMeta {
            topology: "hand".into(),
            nodes: 1,
            items: 1,
            periods: il.len(),
            seed: 0,
            warmup: 0,
            retailers: vec![0],
            lead_times: vec![1],
            base_stock: vec![vec![10.0]],
        };
        let records = il
            .iter()
            .zip(it)
            .map(|(&il, &it)| PeriodRecord {
                il,
                it,
                ip: il + it,
                demand: 0.0,
                stockout: il < 0.0,
            })
            .collect();
        SimTrace::from_records(meta, records).unwrap()
    }

    #[test]
    fn window_layout_matches_hand_example() {
        let trace = hand_trace(&[5.0, 3.0, -1.0], &[0.0, 2.0, 4.0]);
        let win = WindowSpec {
            k: 2,
            q: 1,
            threshold: 0.0,
        };
        let ds = build_samples(&trace, win, &[]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.x.row(0).to_vec(), vec![5.0, 0.0, 3.0, 2.0]);
        assert_eq!(ds.y.row(0).to_vec(), vec![1]);
        assert_eq!(ds.meta.periods, vec![1]);

        let ds10 = build_samples(
            &trace,
            WindowSpec {
                threshold: 10.0,
                ..win
            },
            &[],
        )
        .unwrap();
        assert!(ds10.y.iter().all(|&v| v == 1));
    }

    #[test]
    fn multi_period_labels_follow_horizon() {
        let il = [4.0, -2.0, 1.0, -3.0, 0.0, 5.0];
        let trace = hand_trace(&il, &[0.0; 6]);
        let ds = build_samples(
            &trace,
            WindowSpec {
                k: 1,
                q: 3,
                threshold: 0.0,
            },
            &[],
        )
        .unwrap();
        assert_eq!(ds.label_dim(), 3);
        for (row, &t) in ds.meta.periods.iter().enumerate() {
            for m in 1..=3 {
                assert_eq!(ds.y[[row, m - 1]], u8::from(il[t + m] < 0.0));
            }
        }
        // IL = 0 is not below a zero threshold.
        assert_eq!(ds.y[[2, 1]], 0);
    }

    #[test]
    fn day_of_week_feature_leads_the_row() {
        let trace = hand_trace(&[1.0; 10], &[0.0; 10]);
        let ds = build_samples(
            &trace,
            WindowSpec {
                k: 1,
                q: 1,
                threshold: 0.0,
            },
            &[Feature::DayOfWeek],
        )
        .unwrap();
        assert_eq!(ds.input_dim(), 3);
        let days: Vec<f64> = ds.x.column(0).to_vec();
        assert_eq!(days, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 1.0]);
    }

    #[test]
    fn too_short_trace_is_rejected() {
        let trace = hand_trace(&[1.0, 2.0], &[0.0, 0.0]);
        let err = build_samples(
            &trace,
            WindowSpec {
                k: 2,
                q: 1,
                threshold: 0.0,
            },
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::TooShort { .. }));
    }

    #[test]
    fn split_sizes_and_order() {
        let trace = hand_trace(&[0.0; 101], &[0.0; 101]);
        let ds = build_samples(
            &trace,
            WindowSpec {
                k: 1,
                q: 1,
                threshold: 0.0,
            },
            &[],
        )
        .unwrap();
        assert_eq!(ds.len(), 100);
        let (a, b) = ds.split(0.75).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
        let joined: Vec<usize> = a
            .meta
            .periods
            .iter()
            .chain(&b.meta.periods)
            .copied()
            .collect();
        assert_eq!(joined, ds.meta.periods);

        let small = ds.slice(0..4);
        let (a, b) = small.split(0.75).unwrap();
        assert_eq!((a.len(), b.len()), (3, 1));
        assert!(matches!(
            small.slice(0..1).split(0.75),
            Err(DatasetError::EmptySplit { .. })
        ));
        assert!(ds.split(1.0).is_err());
    }

    #[test]
    fn standardization_examples() {
        let train = array![[0.0, 7.0], [2.0, 7.0]];
        let stats = Standardization::fit(&train);
        assert_eq!(stats.mean, vec![1.0, 7.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
        let mut t = train.clone();
        stats.apply(&mut t);
        assert_eq!(t, array![[-1.0, 0.0], [1.0, 0.0]]);
        let mut test = array![[1.0, 7.0]];
        stats.apply(&mut test);
        assert_eq!(test, array![[0.0, 0.0]]);
        assert_eq!(Standardization::fit(&train), stats);
    }

    #[test]
    fn csv_round_trip() {
        let trace = hand_trace(&[5.0, 3.0, -1.0, 2.5, 0.125], &[0.0, 2.0, 4.0, 1.0, 3.0]);
        let ds = build_samples(
            &trace,
            WindowSpec {
                k: 2,
                q: 2,
                threshold: 0.0,
            },
            &[Feature::DayOfWeek],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("x_0,x_1,x_2,x_3,x_4,y_0,y_1\n"));
        let back = Dataset::read_csv(ds.meta.clone(), &buf[..]).unwrap();
        assert_eq!(back, ds);
    }
}
