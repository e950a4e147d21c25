//! Multi-echelon network structures: nodes, lead-time edges, validation,
//! the builtin networks, and the TOML network file format.
//!
//! A network file looks like:
//!
//! ```toml
//! name = "two-stage"
//!
//! [[nodes]]
//! id = 0
//! base_stock = 30.0
//! is_retailer = false
//! supply_lead_time = 1   # optional, only used by source nodes
//!
//! [[nodes]]
//! id = 1
//! is_retailer = true     # base_stock omitted: sized from the demand model
//!
//! [[edges]]
//! from = 0
//! to = 1
//! lead_time = 2          # optional, defaults to the builtin lead time
//!
//! [demand]               # optional
//! kind = "iid"
//! mean = 10.0
//! std = 2.0
//! ```
//!
//! Unknown keys are rejected.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{DemandModel, DemandSpec};

pub type NodeId = usize;

/// Lead time used on every builtin edge and whenever a file omits one.
pub const DEFAULT_LEAD_TIME: u32 = 2;

/// Safety factor `z` of the base-stock sizing rule.
pub const DEFAULT_SAFETY_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    /// Order-up-to level S.
    pub base_stock: f64,
    pub is_retailer: bool,
    /// Suppliers, ascending id.
    pub predecessor_ids: Vec<NodeId>,
    /// Lead time from the external supplier; only meaningful for source nodes.
    pub supply_lead_time: u32,
}

impl NodeSpec {
    pub fn is_source(&self) -> bool {
        self.predecessor_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from_id: NodeId,
    pub to_id: NodeId,
    pub lead_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid topology: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown builtin topology `{0}` (expected one of: {names})", names = BUILTIN_NAMES.join(", "))]
    UnknownBuiltin(String),
    #[error("cannot size base stock: {0}")]
    Sizing(String),
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "serial-11",
    "owmr-11",
    "distribution-13",
    "complex1-11",
    "complex2-11",
];

impl Topology {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id]
    }

    pub fn retailers(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_retailer)
            .map(|n| n.id)
            .collect()
    }

    pub fn sources(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_source())
            .map(|n| n.id)
            .collect()
    }

    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.from_id == id)
            .map(|e| e.to_id)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&EdgeSpec> {
        self.edges
            .iter()
            .find(|e| e.from_id == from && e.to_id == to)
    }

    /// Lead time of each incoming supply slot of `id`, in predecessor order.
    /// A source node has a single slot fed by the external supplier.
    pub fn inbound_lead_times(&self, id: NodeId) -> Vec<u32> {
        let node = self.node(id);
        if node.is_source() {
            return vec![node.supply_lead_time];
        }
        node.predecessor_ids
            .iter()
            .map(|&p| self.edge(p, id).map(|e| e.lead_time).unwrap_or(1))
            .collect()
    }

    pub fn max_lead_time(&self) -> u32 {
        (0..self.n())
            .flat_map(|id| self.inbound_lead_times(id))
            .max()
            .unwrap_or(1)
    }

    /// Kahn's algorithm, ties broken by ascending id. `None` if there is a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.n();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            if e.to_id < n && e.from_id < n {
                indegree[e.to_id] += 1;
            }
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for s in self.successors(id) {
                if s < n {
                    indegree[s] -= 1;
                    if indegree[s] == 0 {
                        ready.push(Reverse(s));
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Number of echelons: length of the longest source-to-node path, in nodes.
    pub fn echelon_count(&self) -> usize {
        let Some(order) = self.topological_order() else {
            return 0;
        };
        let mut depth = vec![1usize; self.n()];
        for id in order {
            for s in self.successors(id) {
                depth[s] = depth[s].max(depth[id] + 1);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// One entry per violated invariant; empty iff the topology is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.n();
        if n == 0 {
            v.push("topology has no nodes".to_string());
            return v;
        }
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id != pos {
                v.push(format!(
                    "node ids must be contiguous 0..{}: found id {} at position {}",
                    n - 1,
                    node.id,
                    pos
                ));
            }
            if !(node.base_stock.is_finite() && node.base_stock >= 0.0) {
                v.push(format!(
                    "node {} has invalid base_stock {}",
                    node.id, node.base_stock
                ));
            }
            if node.supply_lead_time == 0 {
                v.push(format!("node {} has supply_lead_time 0", node.id));
            }
            for &p in &node.predecessor_ids {
                if p >= n {
                    v.push(format!("dangling predecessor {p}"));
                } else if !self
                    .edges
                    .iter()
                    .any(|e| e.from_id == p && e.to_id == node.id)
                {
                    v.push(format!(
                        "predecessor {} of node {} has no matching edge",
                        p, node.id
                    ));
                }
            }
        }
        let mut seen = BTreeMap::new();
        for e in &self.edges {
            if e.from_id >= n || e.to_id >= n {
                v.push(format!("dangling edge {}->{}", e.from_id, e.to_id));
                continue;
            }
            if e.lead_time == 0 {
                v.push(format!("edge {}->{} has lead_time 0", e.from_id, e.to_id));
            }
            if e.from_id == e.to_id {
                v.push(format!("self-loop on node {}", e.from_id));
            }
            if seen.insert((e.from_id, e.to_id), ()).is_some() {
                v.push(format!("duplicate edge {}->{}", e.from_id, e.to_id));
            }
            if !self.nodes[e.to_id].predecessor_ids.contains(&e.from_id) {
                v.push(format!(
                    "edge {}->{} missing from predecessor list of node {}",
                    e.from_id, e.to_id, e.to_id
                ));
            }
            if self.nodes[e.from_id].is_retailer {
                v.push(format!("retailer {} has successor {}", e.from_id, e.to_id));
            }
        }
        if !self.nodes.iter().any(|n| n.is_retailer) {
            v.push("no retailer".to_string());
        }
        if self.topological_order().is_none() {
            v.push("cycle found".to_string());
        }
        v
    }

    pub fn check(self) -> Result<Self, TopologyError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(TopologyError::Invalid(v))
        }
    }

    /// Builds a topology from node flags and edges, deriving predecessor lists.
    pub fn from_parts(
        name: impl Into<String>,
        retailer_flags: &[bool],
        edges: &[(NodeId, NodeId)],
        lead_time: u32,
    ) -> Self {
        let mut nodes: Vec<NodeSpec> = retailer_flags
            .iter()
            .enumerate()
            .map(|(id, &is_retailer)| NodeSpec {
                id,
                base_stock: 0.0,
                is_retailer,
                predecessor_ids: Vec::new(),
                supply_lead_time: lead_time,
            })
            .collect();
        for &(from, to) in edges {
            if let Some(node) = nodes.get_mut(to) {
                node.predecessor_ids.push(from);
            }
        }
        for node in &mut nodes {
            node.predecessor_ids.sort_unstable();
        }
        Topology {
            name: name.into(),
            nodes,
            edges: edges
                .iter()
                .map(|&(from_id, to_id)| EdgeSpec {
                    from_id,
                    to_id,
                    lead_time,
                })
                .collect(),
        }
    }

    /// Mean and variance of the demand stream each node must serve, per item.
    ///
    /// Retailers serve their own customer demand; an internal node serves the
    /// orders of its successors, and a successor with `m` suppliers routes
    /// `1/m` of its orders to each.
    pub fn echelon_demand(
        &self,
        demand: &DemandModel,
    ) -> Result<Vec<Vec<(f64, f64)>>, TopologyError> {
        let order = self
            .topological_order()
            .ok_or_else(|| TopologyError::Invalid(vec!["cycle found".into()]))?;
        let items = demand.items();
        let mut stats = vec![vec![(0.0, 0.0); items]; self.n()];
        for &id in order.iter().rev() {
            let node = self.node(id);
            if node.is_retailer {
                for (item, slot) in stats[id].iter_mut().enumerate() {
                    *slot = demand
                        .moments(id, item)
                        .map_err(|e| TopologyError::Sizing(e.to_string()))?;
                }
            } else {
                for s in self.successors(id) {
                    let share = 1.0 / self.node(s).predecessor_ids.len() as f64;
                    for item in 0..items {
                        let (m, var) = stats[s][item];
                        stats[id][item].0 += share * m;
                        stats[id][item].1 += share * share * var;
                    }
                }
            }
        }
        Ok(stats)
    }

    /// Per-node, per-item order-up-to levels
    /// `S = ceil(mu * (L + 1) + z * sigma * sqrt(L + 1))`, where `L` is the
    /// node's longest inbound lead time.
    pub fn sized_base_stocks(
        &self,
        demand: &DemandModel,
        safety_factor: f64,
    ) -> Result<Vec<Vec<f64>>, TopologyError> {
        let stats = self.echelon_demand(demand)?;
        Ok((0..self.n())
            .map(|id| {
                let lead = *self.inbound_lead_times(id).iter().max().unwrap_or(&1) as f64;
                stats[id]
                    .iter()
                    .map(|&(mu, var)| {
                        let period = lead + 1.0;
                        (mu * period + safety_factor * var.sqrt() * period.sqrt()).ceil()
                    })
                    .collect()
            })
            .collect())
    }

    /// Sets every edge and every source's external supply to `lead_time`.
    pub fn set_lead_time(&mut self, lead_time: u32) {
        for e in &mut self.edges {
            e.lead_time = lead_time;
        }
        for n in &mut self.nodes {
            n.supply_lead_time = lead_time;
        }
    }

    /// Overwrites every node's base stock using the sizing rule (first item).
    pub fn apply_sizing(
        &mut self,
        demand: &DemandModel,
        safety_factor: f64,
    ) -> Result<(), TopologyError> {
        let sized = self.sized_base_stocks(demand, safety_factor)?;
        for (node, s) in self.nodes.iter_mut().zip(sized) {
            node.base_stock = s[0];
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let file = NetworkFile {
            name: self.name.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeEntry {
                    id: n.id,
                    base_stock: Some(n.base_stock),
                    is_retailer: n.is_retailer,
                    supply_lead_time: Some(n.supply_lead_time),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeEntry {
                    from: e.from_id,
                    to: e.to_id,
                    lead_time: Some(e.lead_time),
                })
                .collect(),
            demand: None,
        };
        toml::to_string(&file).expect("topology serializes")
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} nodes, {} edges, {} retailers)",
            self.name,
            self.n(),
            self.edges.len(),
            self.retailers().len()
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_stock: Option<f64>,
    #[serde(default)]
    is_retailer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supply_lead_time: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: NodeId,
    to: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lead_time: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    #[serde(default)]
    nodes: Vec<NodeEntry>,
    #[serde(default)]
    edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demand: Option<DemandSpec>,
}

/// A parsed network file: the topology plus its optional demand section.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub topology: Topology,
    pub demand: Option<DemandSpec>,
}

fn syntax_error(text: &str, err: toml::de::Error) -> TopologyError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    TopologyError::Syntax {
        line,
        column,
        message: err.message().to_string(),
    }
}

/// Parses a network file. Nodes without `base_stock` are sized from the file's
/// demand section (or the default demand model when absent).
pub fn parse_network(text: &str) -> Result<NetworkConfig, TopologyError> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| syntax_error(text, e))?;
    let mut nodes: Vec<NodeSpec> = file
        .nodes
        .iter()
        .map(|n| NodeSpec {
            id: n.id,
            base_stock: n.base_stock.unwrap_or(0.0),
            is_retailer: n.is_retailer,
            predecessor_ids: Vec::new(),
            supply_lead_time: n.supply_lead_time.unwrap_or(DEFAULT_LEAD_TIME),
        })
        .collect();
    nodes.sort_by_key(|n| n.id);
    let edges: Vec<EdgeSpec> = file
        .edges
        .iter()
        .map(|e| EdgeSpec {
            from_id: e.from,
            to_id: e.to,
            lead_time: e.lead_time.unwrap_or(DEFAULT_LEAD_TIME),
        })
        .collect();
    for e in &edges {
        if let Some(node) = nodes.iter_mut().find(|n| n.id == e.to_id) {
            node.predecessor_ids.push(e.from_id);
        }
    }
    for node in &mut nodes {
        node.predecessor_ids.sort_unstable();
        node.predecessor_ids.dedup();
    }
    let mut topology = Topology {
        name: file.name,
        nodes,
        edges,
    }
    .check()?;
    let unsized_nodes: Vec<NodeId> = file
        .nodes
        .iter()
        .filter(|n| n.base_stock.is_none())
        .map(|n| n.id)
        .collect();
    if !unsized_nodes.is_empty() {
        let model = file
            .demand
            .clone()
            .unwrap_or_default()
            .build(&topology)
            .map_err(|e| TopologyError::Sizing(e.to_string()))?;
        let sized = topology.sized_base_stocks(&model, DEFAULT_SAFETY_FACTOR)?;
        for id in unsized_nodes {
            topology.nodes[id].base_stock = sized[id][0];
        }
    }
    Ok(NetworkConfig {
        topology,
        demand: file.demand,
    })
}

pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    parse_network(text).map(|c| c.topology)
}

/// Structure of a builtin network with all base stocks zero.
pub fn builtin_structure(name: &str) -> Result<Topology, TopologyError> {
    let (flags, edges): (Vec<bool>, Vec<(NodeId, NodeId)>) = match name {
        "serial-11" => {
            let mut flags = vec![false; 11];
            flags[10] = true;
            (flags, (0..10).map(|i| (i, i + 1)).collect())
        }
        "owmr-11" => {
            let mut flags = vec![true; 11];
            flags[0] = false;
            (flags, (1..11).map(|r| (0, r)).collect())
        }
        "distribution-13" => {
            let mut flags = vec![true; 13];
            for f in flags.iter_mut().take(4) {
                *f = false;
            }
            let mut edges = vec![(0, 1), (0, 2), (0, 3)];
            for w in 1..4 {
                for r in 0..3 {
                    edges.push((w, 1 + 3 * w + r));
                }
            }
            (flags, edges)
        }
        // Echelons of size 2, 2, 3, 3, 1; nodes 0 and 1 are the warehouses.
        "complex1-11" => {
            let mut flags = vec![false; 11];
            flags[10] = true;
            let edges = vec![
                (0, 2),
                (1, 2),
                (1, 3),
                (2, 4),
                (2, 5),
                (3, 5),
                (3, 6),
                (4, 7),
                (5, 7),
                (5, 8),
                (6, 8),
                (6, 9),
                (7, 10),
                (8, 10),
                (9, 10),
            ];
            (flags, edges)
        }
        // Echelons of size 1, 2, 5, 3; nodes 8, 9 and 10 are the retailers.
        "complex2-11" => {
            let mut flags = vec![false; 11];
            for f in flags.iter_mut().skip(8) {
                *f = true;
            }
            let edges = vec![
                (0, 1),
                (0, 2),
                (1, 3),
                (1, 4),
                (1, 5),
                (2, 5),
                (2, 6),
                (2, 7),
                (3, 8),
                (4, 8),
                (5, 9),
                (6, 9),
                (6, 10),
                (7, 10),
            ];
            (flags, edges)
        }
        other => return Err(TopologyError::UnknownBuiltin(other.to_string())),
    };
    Ok(Topology::from_parts(
        name,
        &flags,
        &edges,
        DEFAULT_LEAD_TIME,
    ))
}

/// A builtin network with base stocks sized for `demand`.
pub fn builtin_with_demand(name: &str, demand: &DemandModel) -> Result<Topology, TopologyError> {
    let mut t = builtin_structure(name)?;
    t.apply_sizing(demand, DEFAULT_SAFETY_FACTOR)?;
    t.check()
}

/// A builtin network sized for the demand described by `spec`.
pub fn builtin_with_spec(name: &str, spec: &DemandSpec) -> Result<Topology, TopologyError> {
    let t = builtin_structure(name)?;
    let model = spec
        .build(&t)
        .map_err(|e| TopologyError::Sizing(e.to_string()))?;
    builtin_with_demand(name, &model)
}

/// A builtin network sized for the default demand, N(10, 2^2) per retailer.
pub fn builtin(name: &str) -> Result<Topology, TopologyError> {
    builtin_with_spec(name, &DemandSpec::default())
}
