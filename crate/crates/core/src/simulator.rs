//! Period-by-period simulation of a network under base-stock policies.
//!
//! Within a period every node, in topological order, (1) receives the
//! shipments due this period, (2) serves customer demand if it is a retailer
//! (excess demand is backordered), and (3) orders `S - IP` from its suppliers.
//! By default a supplier ships as much of a request as its on-hand stock
//! covers ([`ShippingRule::Partial`]); under [`ShippingRule::AllOrNothing`]
//! an uncovered request is dropped instead. Either way the unshipped part is
//! re-derived from the base-stock gap next period. Sources order from an
//! unlimited external supplier. The state of every node is recorded
//! once all nodes have acted, so each record is an end-of-period snapshot.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{DemandError, DemandModel, DemandRng};
use crate::topology::{NodeId, Topology, DEFAULT_SAFETY_FACTOR};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be at least one period")]
    EmptyHorizon,
    #[error("invalid topology: {}", .0.join("; "))]
    InvalidTopology(Vec<String>),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("base stock table must be {nodes} nodes x {items} items")]
    BaseStockShape { nodes: usize, items: usize },
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shipment {
    pub arrival: usize,
    pub quantity: f64,
}

/// Inventory record of one item at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// On-hand minus backorders.
    pub il: f64,
    /// One queue per inbound supply slot, in predecessor order.
    pub pipeline: Vec<VecDeque<Shipment>>,
}

impl NodeState {
    pub fn new(il: f64, slots: usize) -> Self {
        NodeState {
            il,
            pipeline: vec![VecDeque::new(); slots.max(1)],
        }
    }

    pub fn in_transit(&self) -> f64 {
        self.pipeline
            .iter()
            .flat_map(|q| q.iter())
            .map(|s| s.quantity)
            .sum()
    }

    pub fn position(&self) -> f64 {
        self.il + self.in_transit()
    }
}

/// What happened at one (node, item) during a period.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeriodRecord {
    pub il: f64,
    pub it: f64,
    pub ip: f64,
    pub demand: f64,
    pub stockout: bool,
}

/// Quantities moved through one (node, item) during a period.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Flow {
    pub received: f64,
    /// Customer demand at retailers, shipments to successors elsewhere.
    pub outflow: f64,
}

/// How a supplier answers a request it cannot cover from on-hand stock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShippingRule {
    /// Ship whatever is on hand, up to the request.
    #[default]
    Partial,
    /// Ship the full request or nothing; an uncovered request is dropped.
    AllOrNothing,
}

/// Mutable state of the whole network: `nodes[node][item]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub nodes: Vec<Vec<NodeState>>,
}

impl NetworkState {
    /// Every node starts at its base stock with empty pipelines.
    pub fn initial(topology: &Topology, base_stock: &[Vec<f64>]) -> Self {
        let nodes = topology
            .nodes
            .iter()
            .map(|node| {
                let slots = node.predecessor_ids.len().max(1);
                base_stock[node.id]
                    .iter()
                    .map(|&s| NodeState::new(s, slots))
                    .collect()
            })
            .collect();
        NetworkState { nodes }
    }

    /// Advances one period. `demands[node * items + item]` is read for
    /// retailers only. Returns records and flows in the same layout.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        topology: &Topology,
        rule: ShippingRule,
        order: &[NodeId],
        base_stock: &[Vec<f64>],
        period: usize,
        demands: &[f64],
    ) -> (Vec<PeriodRecord>, Vec<Flow>) {
        let items = base_stock.first().map_or(1, Vec::len);
        let n = topology.n();
        let mut flows = vec![Flow::default(); n * items];

        for &id in order {
            let node = topology.node(id);
            let leads = topology.inbound_lead_times(id);
            for item in 0..items {
                let slot = id * items + item;
                let state = &mut self.nodes[id][item];

                for queue in &mut state.pipeline {
                    while queue.front().is_some_and(|s| s.arrival <= period) {
                        let s = queue.pop_front().expect("front checked");
                        state.il += s.quantity;
                        flows[slot].received += s.quantity;
                    }
                }

                if node.is_retailer {
                    let d = demands[slot];
                    state.il -= d;
                    flows[slot].outflow += d;
                }

                let request = base_stock[id][item] - state.position();
                if request <= 0.0 {
                    continue;
                }
                if node.is_source() {
                    state.pipeline[0].push_back(Shipment {
                        arrival: period + leads[0] as usize,
                        quantity: request,
                    });
                    continue;
                }

                // Equal split; the lowest-id supplier absorbs the rounding remainder.
                let m = node.predecessor_ids.len();
                let share = request / m as f64;
                let first = request - share * (m - 1) as f64;
                for (k, &pred) in node.predecessor_ids.iter().enumerate() {
                    let qty = if k == 0 { first } else { share };
                    let supplier = &mut self.nodes[pred][item];
                    let shipped = match rule {
                        ShippingRule::AllOrNothing if supplier.il >= qty => qty,
                        ShippingRule::AllOrNothing => 0.0,
                        ShippingRule::Partial => qty.min(supplier.il.max(0.0)),
                    };
                    if shipped > 0.0 {
                        supplier.il -= shipped;
                        flows[pred * items + item].outflow += shipped;
                        self.nodes[id][item].pipeline[k].push_back(Shipment {
                            arrival: period + leads[k] as usize,
                            quantity: shipped,
                        });
                    }
                }
            }
        }

        let mut records = vec![PeriodRecord::default(); n * items];
        for node in &topology.nodes {
            for item in 0..items {
                let state = &self.nodes[node.id][item];
                let it = state.in_transit();
                records[node.id * items + item] = PeriodRecord {
                    il: state.il,
                    it,
                    ip: state.il + it,
                    demand: if node.is_retailer {
                        demands[node.id * items + item]
                    } else {
                        0.0
                    },
                    stockout: node.is_retailer && state.il < 0.0,
                };
            }
        }
        (records, flows)
    }
}

/// Static facts about a trace needed to interpret it without the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub topology: String,
    pub nodes: usize,
    pub items: usize,
    pub periods: usize,
    pub seed: u64,
    /// Leading periods affected by the empty-pipeline start.
    pub warmup: usize,
    pub retailers: Vec<NodeId>,
    /// Longest inbound lead time per node.
    pub lead_times: Vec<u32>,
    /// `base_stock[node][item]`.
    pub base_stock: Vec<Vec<f64>>,
}

/// Per-period, per-node, per-item history of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub meta: TraceMeta,
    records: Vec<PeriodRecord>,
    flows: Option<Vec<Flow>>,
}

impl SimTrace {
    pub fn from_records(meta: TraceMeta, records: Vec<PeriodRecord>) -> Result<Self, SimError> {
        if records.len() != meta.periods * meta.nodes * meta.items {
            return Err(SimError::Format(format!(
                "expected {} records, found {}",
                meta.periods * meta.nodes * meta.items,
                records.len()
            )));
        }
        Ok(SimTrace {
            meta,
            records,
            flows: None,
        })
    }

    pub fn periods(&self) -> usize {
        self.meta.periods
    }

    pub fn nodes(&self) -> usize {
        self.meta.nodes
    }

    pub fn items(&self) -> usize {
        self.meta.items
    }

    pub fn is_retailer(&self, node: NodeId) -> bool {
        self.meta.retailers.contains(&node)
    }

    fn index(&self, period: usize, node: NodeId, item: usize) -> usize {
        (period * self.meta.nodes + node) * self.meta.items + item
    }

    pub fn record(&self, period: usize, node: NodeId, item: usize) -> &PeriodRecord {
        &self.records[self.index(period, node, item)]
    }

    /// Flows are only known for traces produced in-process.
    pub fn flow(&self, period: usize, node: NodeId, item: usize) -> Option<&Flow> {
        let idx = self.index(period, node, item);
        self.flows.as_ref().map(|f| &f[idx])
    }

    pub fn records(&self) -> &[PeriodRecord] {
        &self.records
    }

    /// Fraction of post-warm-up periods in which `node` ended with IL < 0.
    pub fn stockout_rate(&self, node: NodeId, item: usize) -> f64 {
        let span = self.meta.warmup..self.meta.periods;
        let count = span
            .clone()
            .filter(|&t| self.record(t, node, item).stockout)
            .count();
        count as f64 / span.len().max(1) as f64
    }

    /// CSV with header `period,node,item,IL,IT,IP,demand,stockout`, rows
    /// period-major, then node, then item.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "period", "node", "item", "IL", "IT", "IP", "demand", "stockout",
        ])?;
        for t in 0..self.meta.periods {
            for node in 0..self.meta.nodes {
                for item in 0..self.meta.items {
                    let r = self.record(t, node, item);
                    w.write_record([
                        t.to_string(),
                        node.to_string(),
                        item.to_string(),
                        r.il.to_string(),
                        r.it.to_string(),
                        r.ip.to_string(),
                        r.demand.to_string(),
                        u8::from(r.stockout).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(meta: TraceMeta, reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header
            != [
                "period", "node", "item", "IL", "IT", "IP", "demand", "stockout",
            ]
        {
            return Err(SimError::Format(format!("unexpected header {header:?}")));
        }
        let mut records = Vec::with_capacity(meta.periods * meta.nodes * meta.items);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64, SimError> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| SimError::Format(format!("row {}: {e}", row + 1)))
            };
            let expected = (
                row / (meta.nodes * meta.items),
                (row / meta.items) % meta.nodes,
                row % meta.items,
            );
            let key = (field(0)? as usize, field(1)? as usize, field(2)? as usize);
            if key != expected {
                return Err(SimError::Format(format!(
                    "row {} out of order: found {:?}, expected {:?}",
                    row + 1,
                    key,
                    expected
                )));
            }
            records.push(PeriodRecord {
                il: field(3)?,
                it: field(4)?,
                ip: field(5)?,
                demand: field(6)?,
                stockout: &rec[7] == "1",
            });
        }
        Self::from_records(meta, records)
    }

    /// Writes `path` (CSV) and `path` + `.meta.json`.
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let mut file = BufWriter::new(File::create(path)?);
        self.write_csv(&mut file)?;
        file.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| SimError::Format(e.to_string()))?;
        std::fs::write(meta_path(path), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let meta_text = std::fs::read_to_string(meta_path(path))?;
        let meta: TraceMeta =
            serde_json::from_str(&meta_text).map_err(|e| SimError::Format(e.to_string()))?;
        let file = std::io::BufReader::new(File::open(path)?);
        Self::read_csv(meta, file)
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Order-up-to levels for a run: the topology's own levels for one item,
/// per-item sized levels for multi-item demand.
pub fn base_stock_table(
    topology: &Topology,
    demand: &DemandModel,
) -> Result<Vec<Vec<f64>>, SimError> {
    if demand.items() == 1 {
        Ok(topology.nodes.iter().map(|n| vec![n.base_stock]).collect())
    } else {
        topology
            .sized_base_stocks(demand, DEFAULT_SAFETY_FACTOR)
            .map_err(|e| SimError::InvalidTopology(vec![e.to_string()]))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    pub shipping: ShippingRule,
    /// Overrides the order-up-to table, `base_stock[node][item]`.
    pub base_stock: Option<Vec<Vec<f64>>>,
}

/// Runs `periods` periods from the initial state with default options.
pub fn simulate(
    topology: &Topology,
    demand: &DemandModel,
    periods: usize,
    seed: u64,
) -> Result<SimTrace, SimError> {
    simulate_with(topology, demand, periods, seed, &SimOptions::default())
}

pub fn simulate_with(
    topology: &Topology,
    demand: &DemandModel,
    periods: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<SimTrace, SimError> {
    let base_stock = match &options.base_stock {
        Some(b) => b.clone(),
        None => base_stock_table(topology, demand)?,
    };
    let base_stock = &base_stock[..];
    if periods == 0 {
        return Err(SimError::EmptyHorizon);
    }
    let violations = topology.validate();
    if !violations.is_empty() {
        return Err(SimError::InvalidTopology(violations));
    }
    let n = topology.n();
    let items = demand.items();
    if base_stock.len() != n || base_stock.iter().any(|r| r.len() != items) {
        return Err(SimError::BaseStockShape { nodes: n, items });
    }
    let order = topology.topological_order().expect("validated");
    let retailers = topology.retailers();
    for &r in &retailers {
        for item in 0..items {
            demand.moments(r, item)?;
        }
    }
    let mut rngs: Vec<(NodeId, usize, DemandRng)> = retailers
        .iter()
        .flat_map(|&r| (0..items).map(move |item| (r, item)))
        .map(|(r, item)| (r, item, DemandRng::new(seed, (r * items + item) as u64)))
        .collect();

    let mut state = NetworkState::initial(topology, base_stock);
    let mut records = Vec::with_capacity(periods * n * items);
    let mut flows = Vec::with_capacity(periods * n * items);
    let mut demands = vec![0.0; n * items];
    for t in 0..periods {
        for (r, item, rng) in rngs.iter_mut() {
            demands[*r * items + *item] = demand.sample(*r, *item, t, rng)?;
        }
        let (rec, flow) = state.step(topology, options.shipping, &order, base_stock, t, &demands);
        records.extend(rec);
        flows.extend(flow);
    }

    let lead_times = (0..n)
        .map(|id| *topology.inbound_lead_times(id).iter().max().unwrap_or(&1))
        .collect();
    let meta = TraceMeta {
        topology: topology.name.clone(),
        nodes: n,
        items,
        periods,
        seed,
        warmup: topology.max_lead_time() as usize,
        retailers,
        lead_times,
        base_stock: base_stock.to_vec(),
    };
    Ok(SimTrace {
        meta,
        records,
        flows: Some(flows),
    })
}

/// Checks flow conservation, `IP = IL + IT`, non-negative IL away from
/// retailers, and the stock-out flag definition. Returns one line per violation.
pub fn check_invariants(trace: &SimTrace, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let m = &trace.meta;
    for t in 0..m.periods {
        for node in 0..m.nodes {
            let retailer = trace.is_retailer(node);
            for item in 0..m.items {
                let r = trace.record(t, node, item);
                let prev = if t == 0 {
                    m.base_stock[node][item]
                } else {
                    trace.record(t - 1, node, item).il
                };
                if let Some(f) = trace.flow(t, node, item) {
                    let expect = prev + f.received - f.outflow;
                    if (r.il - expect).abs() > tol {
                        out.push(format!(
                            "t={t} node={node} item={item}: IL {} != {} + {} - {}",
                            r.il, prev, f.received, f.outflow
                        ));
                    }
                }
                if (r.ip - (r.il + r.it)).abs() > tol {
                    out.push(format!("t={t} node={node} item={item}: IP != IL + IT"));
                }
                if r.it < -tol {
                    out.push(format!("t={t} node={node} item={item}: negative IT"));
                }
                if !retailer && r.il < 0.0 {
                    out.push(format!(
                        "t={t} node={node} item={item}: non-retailer IL {}",
                        r.il
                    ));
                }
                if r.stockout != (retailer && r.il < 0.0) {
                    out.push(format!(
                        "t={t} node={node} item={item}: stockout flag mismatch"
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::builtin;

    fn constant_demand(retailers: &[NodeId], d: f64) -> DemandModel {
        DemandModel::iid_uniform(retailers, d, 1e-300).unwrap()
    }

    fn single(s: f64, lead: u32) -> Topology {
        let mut t = Topology::from_parts("single", &[true], &[], lead);
        t.nodes[0].base_stock = s;
        t
    }

    #[test]
    fn single_retailer_steady_state() {
        let t = single(10.0, 1);
        let trace = simulate(&t, &constant_demand(&[0], 4.0), 20, 1).unwrap();
        for p in trace.meta.warmup..20 {
            let r = trace.record(p, 0, 0);
            assert_eq!((r.il, r.it, r.ip), (6.0, 4.0, 10.0), "period {p}");
            assert!(!r.stockout);
        }
    }

    #[test]
    fn zero_demand_keeps_base_stock() {
        let mut t = builtin("serial-11").unwrap();
        for n in &mut t.nodes {
            n.base_stock = 25.0;
        }
        let trace = simulate(&t, &constant_demand(&[10], 0.0), 30, 1).unwrap();
        for p in 0..30 {
            for node in 0..11 {
                assert_eq!(trace.record(p, node, 0).il, 25.0);
                assert!(!trace.record(p, node, 0).stockout);
            }
        }
    }

    #[test]
    fn demand_above_base_stock_stocks_out_immediately() {
        let t = single(10.0, 1);
        let trace = simulate(&t, &constant_demand(&[0], 11.0), 3, 1).unwrap();
        assert_eq!(trace.record(0, 0, 0).il, -1.0);
        assert!(trace.record(0, 0, 0).stockout);
    }

    fn two_stage() -> (Topology, Vec<NodeId>) {
        let mut t = Topology::from_parts("two", &[false, true], &[(0, 1)], 1);
        t.nodes[0].base_stock = 10.0;
        t.nodes[1].base_stock = 10.0;
        let order = t.topological_order().unwrap();
        (t, order)
    }

    #[test]
    fn short_supplier_ships_nothing() {
        let (t, order) = two_stage();
        let bs = vec![vec![10.0], vec![10.0]];
        let mut state = NetworkState::initial(&t, &bs);
        state.nodes[0][0].il = 3.0;
        // Keep the supplier from reordering so its IL stays at 3.
        state.nodes[0][0].pipeline[0].push_back(Shipment {
            arrival: 99,
            quantity: 7.0,
        });
        let (rec, flows) = state.step(&t, ShippingRule::AllOrNothing, &order, &bs, 0, &[0.0, 5.0]);
        assert_eq!(rec[0].il, 3.0);
        assert_eq!(flows[0].outflow, 0.0);
        assert_eq!(
            rec[1].ip, 5.0,
            "requester IP unchanged by the failed request"
        );
        assert_eq!(rec[1].it, 0.0);
    }

    #[test]
    fn exact_cover_ships_everything() {
        let (t, order) = two_stage();
        let bs = vec![vec![10.0], vec![10.0]];
        let mut state = NetworkState::initial(&t, &bs);
        state.nodes[0][0].il = 5.0;
        state.nodes[0][0].pipeline[0].push_back(Shipment {
            arrival: 99,
            quantity: 5.0,
        });
        let (rec, _) = state.step(&t, ShippingRule::AllOrNothing, &order, &bs, 0, &[0.0, 5.0]);
        assert_eq!(rec[0].il, 0.0);
        assert_eq!(rec[1].it, 5.0);
        assert_eq!(rec[1].ip, 10.0);
    }

    #[test]
    fn source_orders_from_unlimited_supplier() {
        let (t, order) = two_stage();
        let bs = vec![vec![10.0], vec![10.0]];
        let mut state = NetworkState::initial(&t, &bs);
        state.nodes[0][0].il = 3.0;
        let (rec, _) = state.step(&t, ShippingRule::AllOrNothing, &order, &bs, 0, &[0.0, 0.0]);
        assert_eq!(rec[0].it, 7.0);
        assert_eq!(
            state.nodes[0][0].pipeline[0][0],
            Shipment {
                arrival: 1,
                quantity: 7.0
            }
        );
    }

    #[test]
    fn split_orders_across_two_suppliers() {
        let mut t = Topology::from_parts("v", &[false, false, true], &[(0, 2), (1, 2)], 1);
        for n in &mut t.nodes {
            n.base_stock = 10.0;
        }
        let order = t.topological_order().unwrap();
        let bs = vec![vec![10.0]; 3];
        let mut state = NetworkState::initial(&t, &bs);
        let (rec, flows) = state.step(
            &t,
            ShippingRule::AllOrNothing,
            &order,
            &bs,
            0,
            &[0.0, 0.0, 3.0],
        );
        assert_eq!(flows[0].outflow, 1.5);
        assert_eq!(flows[1].outflow, 1.5);
        assert_eq!(rec[2].it, 3.0);
    }

    #[test]
    fn builtin_traces_hold_invariants() {
        for name in crate::topology::BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            let d = crate::demand::DemandSpec::default().build(&t).unwrap();
            let trace = simulate(&t, &d, 2_000, 5).unwrap();
            let v = check_invariants(&trace, 1e-9);
            assert!(v.is_empty(), "{name}: {:?}", &v[..v.len().min(5)]);
        }
    }

    #[test]
    fn determinism_and_csv_round_trip() {
        let t = builtin("owmr-11").unwrap();
        let d = crate::demand::DemandSpec::default().build(&t).unwrap();
        let a = simulate(&t, &d, 300, 9).unwrap();
        let b = simulate(&t, &d, 300, 9).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = SimTrace::read_csv(a.meta.clone(), &buf[..]).unwrap();
        assert_eq!(back.records(), a.records());
    }

    #[test]
    fn empty_horizon_is_rejected() {
        let t = single(10.0, 1);
        assert!(matches!(
            simulate(&t, &constant_demand(&[0], 1.0), 0, 1),
            Err(SimError::EmptyHorizon)
        ));
    }
}
