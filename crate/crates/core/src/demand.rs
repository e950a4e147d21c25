//! Seeded customer demand: i.i.d. normal per retailer, and a seven-item
//! day-of-week model. Draws are truncated at zero and kept real-valued.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Topology};

pub const DAYS_PER_WEEK: usize = 7;
pub const WEEKLY_ITEMS: usize = 7;

const WEEKLY_TABLES: &str = include_str!("../data/weekly_demand.toml");

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("no demand configured for retailer {0}")]
    UnknownRetailer(NodeId),
    #[error("item {0} out of range 1..={WEEKLY_ITEMS}")]
    ItemOutOfRange(usize),
    #[error("invalid demand parameter: {0}")]
    InvalidParameter(String),
}

/// A single-owner random stream. Each `(seed, stream)` pair is an independent
/// ChaCha8 keystream; no state is shared between streams.
#[derive(Debug, Clone)]
pub struct DemandRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl DemandRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        DemandRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

fn truncated_normal(mean: f64, std: f64, rng: &mut DemandRng) -> f64 {
    (mean + std * rng.standard_normal()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidNormalDemand {
    /// `(mean, std)` per retailer.
    pub params: BTreeMap<NodeId, (f64, f64)>,
}

impl IidNormalDemand {
    pub fn new(params: BTreeMap<NodeId, (f64, f64)>) -> Result<Self, DemandError> {
        for (&node, &(mean, std)) in &params {
            if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                return Err(DemandError::InvalidParameter(format!(
                    "retailer {node}: mean {mean}, std {std} (std must be positive)"
                )));
            }
        }
        Ok(IidNormalDemand { params })
    }

    /// `max(0, X)` with `X ~ N(mean, std^2)` for the given retailer.
    pub fn sample(&self, retailer: NodeId, rng: &mut DemandRng) -> Result<f64, DemandError> {
        let &(mean, std) = self
            .params
            .get(&retailer)
            .ok_or(DemandError::UnknownRetailer(retailer))?;
        Ok(truncated_normal(mean, std, rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyDependentDemand {
    /// `mean[item][weekday]`, item and weekday 0-based, Monday = 0.
    pub mean: [[f64; DAYS_PER_WEEK]; WEEKLY_ITEMS],
    pub std: [[f64; DAYS_PER_WEEK]; WEEKLY_ITEMS],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeeklyTables {
    mean: Vec<Vec<f64>>,
    std: Vec<Vec<f64>>,
}

fn to_table(rows: &[Vec<f64>], what: &str) -> Result<[[f64; 7]; 7], DemandError> {
    if rows.len() != WEEKLY_ITEMS || rows.iter().any(|r| r.len() != DAYS_PER_WEEK) {
        return Err(DemandError::InvalidParameter(format!(
            "{what} table must be {WEEKLY_ITEMS}x{DAYS_PER_WEEK}"
        )));
    }
    let mut out = [[0.0; DAYS_PER_WEEK]; WEEKLY_ITEMS];
    for (dst, src) in out.iter_mut().zip(rows) {
        dst.copy_from_slice(src);
    }
    Ok(out)
}

/// Weekday of a period: period 0 is a Monday.
pub fn weekday_of_period(period: usize) -> usize {
    period % DAYS_PER_WEEK
}

impl WeeklyDependentDemand {
    pub fn new(
        mean: [[f64; DAYS_PER_WEEK]; WEEKLY_ITEMS],
        std: [[f64; DAYS_PER_WEEK]; WEEKLY_ITEMS],
    ) -> Result<Self, DemandError> {
        if std.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(DemandError::InvalidParameter(
                "every weekly std must be positive".into(),
            ));
        }
        Ok(WeeklyDependentDemand { mean, std })
    }

    /// The checked-in seven-item tables.
    pub fn standard() -> Self {
        Self::parse(WEEKLY_TABLES).expect("bundled weekly tables are valid")
    }

    pub fn parse(text: &str) -> Result<Self, DemandError> {
        let t: WeeklyTables =
            toml::from_str(text).map_err(|e| DemandError::InvalidParameter(e.to_string()))?;
        Self::new(to_table(&t.mean, "mean")?, to_table(&t.std, "std")?)
    }

    /// Parameters for `item` in 1..=7 on the weekday of `period`.
    pub fn params(&self, item: usize, period: usize) -> Result<(f64, f64), DemandError> {
        if !(1..=WEEKLY_ITEMS).contains(&item) {
            return Err(DemandError::ItemOutOfRange(item));
        }
        let day = weekday_of_period(period);
        Ok((self.mean[item - 1][day], self.std[item - 1][day]))
    }

    /// Truncated draw for `item` (1..=7) in `period`.
    pub fn sample(
        &self,
        item: usize,
        period: usize,
        rng: &mut DemandRng,
    ) -> Result<f64, DemandError> {
        let (mean, std) = self.params(item, period)?;
        Ok(truncated_normal(mean, std, rng))
    }

    /// Mean and variance of one item's demand over a uniformly random weekday.
    pub fn weekly_moments(&self, item: usize) -> (f64, f64) {
        let mu = &self.mean[item];
        let sd = &self.std[item];
        let days = DAYS_PER_WEEK as f64;
        let mean = mu.iter().sum::<f64>() / days;
        let within = sd.iter().map(|s| s * s).sum::<f64>() / days;
        let between = mu.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / days;
        (mean, within + between)
    }
}

/// The demand process driving a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DemandModel {
    Iid(IidNormalDemand),
    /// Every retailer draws all seven items from the weekly tables.
    Weekly {
        tables: WeeklyDependentDemand,
        retailers: Vec<NodeId>,
    },
}

impl DemandModel {
    pub fn iid_uniform(retailers: &[NodeId], mean: f64, std: f64) -> Result<Self, DemandError> {
        let params = retailers.iter().map(|&r| (r, (mean, std))).collect();
        Ok(DemandModel::Iid(IidNormalDemand::new(params)?))
    }

    pub fn items(&self) -> usize {
        match self {
            DemandModel::Iid(_) => 1,
            DemandModel::Weekly { .. } => WEEKLY_ITEMS,
        }
    }

    pub fn is_weekly(&self) -> bool {
        matches!(self, DemandModel::Weekly { .. })
    }

    /// Mean and variance of one period's demand (item 0-based), ignoring the
    /// small shift from truncation.
    pub fn moments(&self, retailer: NodeId, item: usize) -> Result<(f64, f64), DemandError> {
        match self {
            DemandModel::Iid(m) => {
                let &(mean, std) = m
                    .params
                    .get(&retailer)
                    .ok_or(DemandError::UnknownRetailer(retailer))?;
                Ok((mean, std * std))
            }
            DemandModel::Weekly { tables, retailers } => {
                if !retailers.contains(&retailer) {
                    return Err(DemandError::UnknownRetailer(retailer));
                }
                if item >= WEEKLY_ITEMS {
                    return Err(DemandError::ItemOutOfRange(item + 1));
                }
                Ok(tables.weekly_moments(item))
            }
        }
    }

    /// One draw for `retailer`, `item` (0-based) in `period`.
    pub fn sample(
        &self,
        retailer: NodeId,
        item: usize,
        period: usize,
        rng: &mut DemandRng,
    ) -> Result<f64, DemandError> {
        match self {
            DemandModel::Iid(m) => m.sample(retailer, rng),
            DemandModel::Weekly { tables, retailers } => {
                if !retailers.contains(&retailer) {
                    return Err(DemandError::UnknownRetailer(retailer));
                }
                tables.sample(item + 1, period, rng)
            }
        }
    }
}

pub const DEFAULT_MEAN: f64 = 10.0;
pub const DEFAULT_STD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandKind {
    #[default]
    Iid,
    Weekly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetailerDemand {
    pub node: NodeId,
    pub mean: f64,
    pub std: f64,
}

/// The `[demand]` section of a network or experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default)]
    pub kind: DemandKind,
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default = "default_std")]
    pub std: f64,
    /// Per-retailer overrides for the i.i.d. model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retailers: Vec<RetailerDemand>,
}

fn default_mean() -> f64 {
    DEFAULT_MEAN
}

fn default_std() -> f64 {
    DEFAULT_STD
}

impl Default for DemandSpec {
    fn default() -> Self {
        DemandSpec {
            kind: DemandKind::Iid,
            mean: DEFAULT_MEAN,
            std: DEFAULT_STD,
            retailers: Vec::new(),
        }
    }
}

impl DemandSpec {
    pub fn build(&self, topology: &Topology) -> Result<DemandModel, DemandError> {
        let retailers = topology.retailers();
        match self.kind {
            DemandKind::Iid => {
                let mut params: BTreeMap<NodeId, (f64, f64)> = retailers
                    .iter()
                    .map(|&r| (r, (self.mean, self.std)))
                    .collect();
                for o in &self.retailers {
                    if !params.contains_key(&o.node) {
                        return Err(DemandError::UnknownRetailer(o.node));
                    }
                    params.insert(o.node, (o.mean, o.std));
                }
                Ok(DemandModel::Iid(IidNormalDemand::new(params)?))
            }
            DemandKind::Weekly => Ok(DemandModel::Weekly {
                tables: WeeklyDependentDemand::standard(),
                retailers,
            }),
        }
    }
}
