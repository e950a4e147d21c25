use std::path::Path;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandArg {
    Iid,
    Weekly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShippingArg {
    Partial,
    AllOrNothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Softmax,
    Hinge,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Sigmoid,
    Tanh,
    InnerProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaiveArg {
    All,
    None,
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    #[value(name = "3")]
    #[serde(rename = "3")]
    Three,
}

/// Every experiment setting. A flag beats the `--config` file, which beats
/// the built-in default.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin network name or path to a network TOML file.
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    /// Number of simulated periods [default: 100000].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    /// Seed for demand draws, network initialization and shuffling [default: 1].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Demand model [default: iid].
    #[arg(long, value_enum, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demand: Option<DemandArg>,
    /// Mean of i.i.d. retailer demand [default: 10].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Standard deviation of i.i.d. retailer demand [default: 2].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    /// Lead time on every edge of a builtin network [default: 2].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lead_time: Option<u32>,
    /// Safety factor z of the base-stock sizing rule [default: 0.2].
    #[arg(long, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_factor: Option<f64>,
    /// How a short supplier answers a request [default: partial].
    #[arg(long, value_enum, help_heading = "Simulation")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shipping: Option<ShippingArg>,

    /// Window length in periods [default: 11].
    #[arg(long, help_heading = "Dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Label is 1 when IL < threshold [default: 0].
    #[arg(long, allow_negative_numbers = true, help_heading = "Dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Number of future periods labelled per sample [default: 1].
    #[arg(long, help_heading = "Dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_q: Option<usize>,
    /// Prepend the day of week to every input.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub day_of_week: Option<bool>,
    /// Chronological training share [default: 0.75].
    #[arg(long, help_heading = "Dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,

    /// Hyper-parameter preset: serial, distribution, owmr, complex1,
    /// complex2, complex2-multi [default: from the dataset's network].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net: Option<String>,
    /// Loss function [default: softmax].
    #[arg(long, value_enum, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossArg>,
    /// Weight of samples labelled 1 [default: 1].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp: Option<f64>,
    /// Weight of samples labelled 0 [default: 1].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cn: Option<f64>,
    /// Learning rate [default: preset].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Momentum [default: preset].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    /// Weight decay [default: preset].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    /// Minibatch size [default: 50].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Maximum number of epochs [default: 3].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Stop once an epoch's mean loss falls below this [default: 1e-6].
    #[arg(long, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Hidden layer sizes, comma separated [default: 350,150].
    #[arg(long, value_delimiter = ',', help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Hidden activation [default: sigmoid].
    #[arg(long, value_enum, help_heading = "Training")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationArg>,

    /// Baselines to sweep [default: all].
    #[arg(long, value_enum, help_heading = "Sweep")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive: Option<NaiveArg>,
    /// Number of alpha values, spaced i/(n+1) [default: 99].
    #[arg(long, help_heading = "Sweep")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<usize>,
    /// Bin count of the range-frequency baseline [default: 20].
    #[arg(long, help_heading = "Sweep")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Class-weight grid: none, default (9 pairs), full (118 pairs) or a
    /// list such as 10:1,1:10 [default: default].
    #[arg(long, help_heading = "Sweep")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    /// Parallel training jobs [default: 1].
    #[arg(long, help_heading = "Sweep")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($field:ident),*) => {
        ExperimentConfig { $($field: $top.$field.clone().or_else(|| $base.$field.clone()),)* }
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(&self, base: &ExperimentConfig) -> ExperimentConfig {
        overlay!(
            self,
            base,
            topology,
            periods,
            seed,
            demand,
            mean,
            std,
            lead_time,
            safety_factor,
            shipping,
            k,
            threshold,
            horizon_q,
            day_of_week,
            train_fraction,
            net,
            loss,
            cp,
            cn,
            lr,
            momentum,
            weight_decay,
            batch,
            epochs,
            tol,
            hidden,
            activation,
            naive,
            alphas,
            bins,
            weights,
            workers
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: ExperimentConfig =
            toml::from_str("periods = 500\nseed = 3\nloss = \"hinge\"\n").unwrap();
        let flags = ExperimentConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = flags.over(&file);
        assert_eq!(merged.periods, Some(500));
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.loss, Some(LossArg::Hinge));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("period = 5\n").is_err());
    }

    #[test]
    fn archive_round_trips() {
        let cfg = ExperimentConfig {
            topology: Some("serial-11".into()),
            hidden: Some(vec![8, 4]),
            naive: Some(NaiveArg::Two),
            ..Default::default()
        };
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
