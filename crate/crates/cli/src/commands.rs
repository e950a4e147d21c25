use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stockout::dataset::{self, Dataset, Feature, Standardization, WindowSpec};
use stockout::demand::{DemandKind, DemandModel, DemandSpec, DEFAULT_MEAN, DEFAULT_STD};
use stockout::eval::{self, NaiveKind, NetSetup, SweepReport};
use stockout::naive::DEFAULT_BINS;
use stockout::nnet::{self, Activation, LossKind, LossSpec, TrainConfig, DEFAULT_HIDDEN};
use stockout::simulator::{self, ShippingRule, SimOptions, SimTrace};
use stockout::topology::{self, Topology, DEFAULT_LEAD_TIME, DEFAULT_SAFETY_FACTOR};

use crate::config::{ActivationArg, DemandArg, ExperimentConfig, LossArg, NaiveArg, ShippingArg};

pub const DEFAULT_PERIODS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ALPHAS: usize = 99;

/// Context stored next to the weights so `predict` can rebuild inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelContext {
    pub topology: String,
    pub k: usize,
    pub q: usize,
    pub threshold: f64,
    pub features: Vec<Feature>,
    pub standardization: Standardization,
}

/// Writes `cfg` with every default filled in to `<out>.config.toml`.
/// Training fields come from `setup` when the command built one.
pub fn archive(out: &Path, cfg: &ExperimentConfig, setup: Option<&NetSetup>) -> anyhow::Result<()> {
    let train = setup.map(|s| &s.train);
    let filled = ExperimentConfig {
        topology: Some(cfg.topology.clone().unwrap_or("serial-11".into())),
        periods: Some(cfg.periods.unwrap_or(DEFAULT_PERIODS)),
        seed: Some(cfg.seed.unwrap_or(DEFAULT_SEED)),
        demand: Some(cfg.demand.unwrap_or(DemandArg::Iid)),
        mean: Some(cfg.mean.unwrap_or(DEFAULT_MEAN)),
        std: Some(cfg.std.unwrap_or(DEFAULT_STD)),
        lead_time: Some(cfg.lead_time.unwrap_or(DEFAULT_LEAD_TIME)),
        safety_factor: Some(cfg.safety_factor.unwrap_or(DEFAULT_SAFETY_FACTOR)),
        shipping: Some(cfg.shipping.unwrap_or(ShippingArg::Partial)),
        k: Some(cfg.k.unwrap_or(dataset::DEFAULT_WINDOW)),
        threshold: Some(cfg.threshold.unwrap_or(0.0)),
        horizon_q: Some(cfg.horizon_q.unwrap_or(1)),
        day_of_week: Some(cfg.day_of_week.unwrap_or(false)),
        train_fraction: Some(
            cfg.train_fraction
                .unwrap_or(dataset::DEFAULT_TRAIN_FRACTION),
        ),
        net: cfg.net.clone(),
        loss: Some(cfg.loss.unwrap_or(LossArg::Softmax)),
        cp: Some(cfg.cp.unwrap_or(1.0)),
        cn: Some(cfg.cn.unwrap_or(1.0)),
        lr: train.map(|t| t.learning_rate).or(cfg.lr),
        momentum: train.map(|t| t.momentum).or(cfg.momentum),
        weight_decay: train.map(|t| t.weight_decay).or(cfg.weight_decay),
        batch: train.map(|t| t.batch_size).or(cfg.batch),
        epochs: train.map(|t| t.max_epochs).or(cfg.epochs),
        tol: train.map(|t| t.tol).or(cfg.tol),
        hidden: setup.map(|s| s.hidden.clone()).or(cfg.hidden.clone()),
        activation: Some(cfg.activation.unwrap_or(ActivationArg::Sigmoid)),
        naive: Some(cfg.naive.unwrap_or(NaiveArg::All)),
        alphas: Some(cfg.alphas.unwrap_or(DEFAULT_ALPHAS)),
        bins: Some(cfg.bins.unwrap_or(DEFAULT_BINS)),
        weights: Some(cfg.weights.clone().unwrap_or("default".into())),
        workers: Some(cfg.workers.unwrap_or(1)),
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".config.toml");
    std::fs::write(PathBuf::from(path), filled.to_toml()).context("archiving config")
}

fn demand_spec(cfg: &ExperimentConfig, file: Option<&DemandSpec>) -> DemandSpec {
    let mut spec = file.cloned().unwrap_or_default();
    if let Some(d) = cfg.demand {
        spec.kind = match d {
            DemandArg::Iid => DemandKind::Iid,
            DemandArg::Weekly => DemandKind::Weekly,
        };
    }
    spec.mean = cfg.mean.unwrap_or(if file.is_some() {
        spec.mean
    } else {
        DEFAULT_MEAN
    });
    spec.std = cfg.std.unwrap_or(if file.is_some() {
        spec.std
    } else {
        DEFAULT_STD
    });
    spec
}

/// Builtin name, or a network TOML file when the value names an existing file.
fn resolve_network(cfg: &ExperimentConfig) -> anyhow::Result<(Topology, DemandModel)> {
    let name = cfg.topology.as_deref().unwrap_or("serial-11");
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading network {}", path.display()))?;
        let net = topology::parse_network(&text)
            .with_context(|| format!("parsing network {}", path.display()))?;
        let spec = demand_spec(cfg, net.demand.as_ref());
        let model = spec.build(&net.topology)?;
        return Ok((net.topology, model));
    }
    let mut t = topology::builtin_structure(name)?;
    t.set_lead_time(cfg.lead_time.unwrap_or(DEFAULT_LEAD_TIME));
    let model = demand_spec(cfg, None).build(&t)?;
    t.apply_sizing(&model, cfg.safety_factor.unwrap_or(DEFAULT_SAFETY_FACTOR))?;
    Ok((t.check()?, model))
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let (topology, demand) = resolve_network(cfg)?;
    let z = cfg.safety_factor.unwrap_or(DEFAULT_SAFETY_FACTOR);
    let options = SimOptions {
        shipping: match cfg.shipping.unwrap_or(ShippingArg::Partial) {
            ShippingArg::Partial => ShippingRule::Partial,
            ShippingArg::AllOrNothing => ShippingRule::AllOrNothing,
        },
        base_stock: if demand.items() > 1 {
            Some(topology.sized_base_stocks(&demand, z)?)
        } else {
            None
        },
    };
    let periods = cfg.periods.unwrap_or(DEFAULT_PERIODS);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let trace = simulator::simulate_with(&topology, &demand, periods, seed, &options)?;
    trace
        .save(out)
        .with_context(|| format!("writing trace {}", out.display()))?;
    archive(out, cfg, None)?;
    println!(
        "{}: {} nodes, {} items, {} periods, seed {}",
        topology.name,
        trace.nodes(),
        trace.items(),
        periods,
        seed
    );
    for &r in &trace.meta.retailers {
        for item in 0..trace.items() {
            println!(
                "  retailer {r} item {item}: stock-out rate {:.4}",
                trace.stockout_rate(r, item)
            );
        }
    }
    Ok(())
}

fn load_trace(path: &Path) -> anyhow::Result<SimTrace> {
    SimTrace::load(path).with_context(|| format!("reading trace {}", path.display()))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn build_dataset(cfg: &ExperimentConfig, trace: &Path, out: &Path) -> anyhow::Result<()> {
    let trace = load_trace(trace)?;
    let window = WindowSpec {
        k: cfg.k.unwrap_or(dataset::DEFAULT_WINDOW),
        q: cfg.horizon_q.unwrap_or(1),
        threshold: cfg.threshold.unwrap_or(0.0),
    };
    let features = if cfg.day_of_week.unwrap_or(false) {
        vec![Feature::DayOfWeek]
    } else {
        Vec::new()
    };
    let mut ds = dataset::build_samples(&trace, window, &features)?;
    ds.meta.train_fraction = cfg
        .train_fraction
        .unwrap_or(dataset::DEFAULT_TRAIN_FRACTION);
    let (train, _) = ds.train_test()?;
    ds.meta.standardization = Some(Standardization::fit(&train.x));
    ds.save(out)
        .with_context(|| format!("writing dataset {}", out.display()))?;
    archive(out, cfg, None)?;
    let retail = ds.meta.retailer_columns(None);
    println!(
        "{} samples, D = {}, {} outputs, train {} / test {}",
        ds.len(),
        ds.input_dim(),
        ds.label_dim(),
        train.len(),
        ds.len() - train.len()
    );
    println!("retailer label rate {:.4}", ds.label_rate(&retail));
    Ok(())
}

/// Chronological split with inputs standardized on the training share.
fn prepared(ds: &Dataset) -> anyhow::Result<(Dataset, Dataset)> {
    let (train, test) = ds.train_test()?;
    let stats = match &ds.meta.standardization {
        Some(s) => s.clone(),
        None => Standardization::fit(&train.x),
    };
    Ok((train.standardized(&stats), test.standardized(&stats)))
}

fn loss_kind(cfg: &ExperimentConfig) -> LossKind {
    match cfg.loss.unwrap_or(LossArg::Softmax) {
        LossArg::Softmax => LossKind::Softmax,
        LossArg::Hinge => LossKind::Hinge,
        LossArg::Euclidean => LossKind::Euclidean,
    }
}

fn net_setup(cfg: &ExperimentConfig, topology: &str) -> anyhow::Result<NetSetup> {
    let family = match &cfg.net {
        Some(n) => n.as_str(),
        None => nnet::preset_family(topology).unwrap_or("serial"),
    };
    let Some((lr, momentum, decay)) = nnet::preset(family) else {
        bail!("unknown preset `{family}`");
    };
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        learning_rate: cfg.lr.unwrap_or(lr),
        momentum: cfg.momentum.unwrap_or(momentum),
        weight_decay: cfg.weight_decay.unwrap_or(decay),
        batch_size: cfg.batch.unwrap_or(defaults.batch_size),
        max_epochs: cfg.epochs.unwrap_or(defaults.max_epochs),
        tol: cfg.tol.unwrap_or(defaults.tol),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
    };
    train.validate()?;
    Ok(NetSetup {
        hidden: cfg.hidden.clone().unwrap_or(DEFAULT_HIDDEN.to_vec()),
        activation: match cfg.activation.unwrap_or(ActivationArg::Sigmoid) {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::InnerProduct => Activation::InnerProduct,
        },
        train,
    })
}

pub fn train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(data)?;
    let (train, test) = prepared(&ds)?;
    let loss = LossSpec {
        kind: loss_kind(cfg),
        c_p: cfg.cp.unwrap_or(1.0),
        c_n: cfg.cn.unwrap_or(1.0),
    };
    loss.validate()?;
    let setup = net_setup(cfg, &ds.meta.topology)?;
    let base = cfg.seed.unwrap_or(DEFAULT_SEED);
    let trained = eval::train_one(&train, &test, &loss, &setup, base)?;
    let context = ModelContext {
        topology: ds.meta.topology.clone(),
        k: ds.meta.k,
        q: ds.meta.q,
        threshold: ds.meta.threshold,
        features: ds.meta.features.clone(),
        standardization: train.meta.standardization.clone().expect("standardized"),
    };
    let cfg_used = TrainConfig {
        seed: trained.model.seed,
        ..setup.train.clone()
    };
    nnet::save_model(out, &trained.model, &loss, &cfg_used, &context)
        .with_context(|| format!("writing model {}", out.display()))?;
    archive(out, cfg, Some(&setup))?;
    println!(
        "{} lr {} momentum {} weight decay {}",
        eval::dnn_id(&loss),
        cfg_used.learning_rate,
        cfg_used.momentum,
        cfg_used.weight_decay
    );
    for (epoch, l) in trained.history.iter().enumerate() {
        println!("  epoch {:>3}: loss {l:.6}", epoch + 1);
    }
    let columns = ds.meta.retailer_columns(Some(1));
    let c = eval::confusion_columns(&trained.predictions, &test.y, &columns)?;
    println!(
        "test accuracy {:.4} (tp {} fp {} tn {} fn {})",
        c.accuracy(),
        c.tp,
        c.fp,
        c.tn,
        c.fn_
    );
    Ok(())
}

pub fn predict(model: &Path, data: &Path, out: &Path, all: bool) -> anyhow::Result<()> {
    let loaded: nnet::LoadedModel<ModelContext> =
        nnet::load_model(model).with_context(|| format!("reading model {}", model.display()))?;
    let ds = load_dataset(data)?;
    let expected = loaded.model.arch.input_dim;
    if ds.input_dim() != expected {
        bail!(nnet::NnetError::InputWidth {
            expected,
            actual: ds.input_dim()
        });
    }
    let target = if all { ds } else { ds.train_test()?.1 };
    let target = target.standardized(&loaded.extra.standardization);
    let preds = loaded.model.predict(target.x.view(), &loaded.loss)?;
    let file = BufWriter::new(File::create(out)?);
    eval::write_predictions(&target.meta.periods, &preds, file)
        .with_context(|| format!("writing predictions {}", out.display()))?;
    if preds.ncols() == target.label_dim() {
        let columns = target.meta.retailer_columns(Some(1));
        let c = eval::confusion_columns(&preds, &target.y, &columns)?;
        println!(
            "{} predictions, accuracy {:.4}",
            preds.nrows(),
            c.accuracy()
        );
    }
    Ok(())
}

fn parse_weights(spec: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    match spec {
        "none" => Ok(Vec::new()),
        "default" => Ok(eval::default_weight_grid()),
        "full" => Ok(eval::full_weight_grid()),
        list => list
            .split(',')
            .map(|pair| {
                let (p, n) = pair
                    .split_once(':')
                    .with_context(|| format!("weight pair `{pair}` is not cp:cn"))?;
                Ok((p.trim().parse()?, n.trim().parse()?))
            })
            .collect(),
    }
}

pub fn sweep(
    cfg: &ExperimentConfig,
    trace: &Path,
    data: &Path,
    out: &Path,
    tradeoff: Option<&Path>,
) -> anyhow::Result<()> {
    let trace = load_trace(trace)?;
    let ds = load_dataset(data)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let (train, test) = prepared(&ds)?;
    let series = eval::node_series(&trace, &train, &test)?;
    let grid = eval::alpha_grid(cfg.alphas.unwrap_or(DEFAULT_ALPHAS));
    let kinds: Vec<NaiveKind> = match cfg.naive.unwrap_or(NaiveArg::All) {
        NaiveArg::All => NaiveKind::ALL.to_vec(),
        NaiveArg::None => Vec::new(),
        NaiveArg::One => vec![NaiveKind::One],
        NaiveArg::Two => vec![NaiveKind::Two],
        NaiveArg::Three => vec![NaiveKind::Three],
    };
    let mut report = SweepReport::new(vec![eval::majority_row(&series, seed)]);
    let bins = cfg.bins.unwrap_or(DEFAULT_BINS);
    for kind in kinds {
        report.extend(eval::sweep_naive(kind, &series, &grid, bins, seed)?);
    }
    let weights = parse_weights(cfg.weights.as_deref().unwrap_or("default"))?;
    let setup = net_setup(cfg, &ds.meta.topology)?;
    if !weights.is_empty() {
        let columns = ds.meta.retailer_columns(Some(1));
        let rows = eval::sweep_weights(
            &train,
            &test,
            loss_kind(cfg),
            &weights,
            &setup,
            seed,
            &columns,
            cfg.workers.unwrap_or(1),
        )?;
        report.extend(rows);
    }
    eval::emit_report(&report, out).with_context(|| format!("writing report {}", out.display()))?;
    if let Some(path) = tradeoff {
        report.write_tradeoff_csv(BufWriter::new(File::create(path)?))?;
    }
    archive(out, cfg, Some(&setup))?;
    summarize(&report);
    Ok(())
}

pub fn report(input: &Path, tradeoff: Option<&Path>) -> anyhow::Result<()> {
    let report =
        eval::read_report(input).with_context(|| format!("reading report {}", input.display()))?;
    if let Some(path) = tradeoff {
        report.write_tradeoff_csv(BufWriter::new(File::create(path)?))?;
    }
    summarize(&report);
    Ok(())
}

fn summarize(report: &SweepReport) {
    let algorithms: BTreeSet<&str> = report.rows.iter().map(|r| r.algorithm.as_str()).collect();
    println!(
        "{:<16} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "algorithm", "param1", "param2", "accuracy", "fp", "fn"
    );
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for a in algorithms {
        let diverged = report.rows_for(a).filter(|r| r.diverged()).count();
        match report
            .rows_for(a)
            .filter(|r| !r.diverged())
            .max_by(|x, y| x.accuracy.total_cmp(&y.accuracy))
        {
            Some(r) => println!(
                "{:<16} {:>10} {:>10} {:>9.4} {:>9} {:>9}",
                a,
                opt(r.param1),
                opt(r.param2),
                r.accuracy,
                r.counts.fp,
                r.counts.fn_
            ),
            None => println!("{a:<16} all {diverged} runs diverged"),
        }
    }
}
