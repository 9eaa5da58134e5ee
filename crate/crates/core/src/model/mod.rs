//! Domain types shared by the evaluator, the optimizer, the baselines and the
//! experiment harness.
//!
//! Nodes, types and services are addressed by dense indices. Microservice type
//! `0` is the virtual head: it consumes no resources and has one instance pinned
//! on every user-access node, which is where requests enter the network.

mod deployment;
pub mod format;
mod service;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use deployment::{validate_deployment, Deployment, Feasibility, Resource, Violation};
pub use service::{compile_service, Direction, Invocation, ServiceSpec};

pub type NodeId = usize;
pub type TypeId = usize;
pub type ServiceId = usize;

/// The virtual head microservice.
pub const HEAD: TypeId = 0;

/// Slack used when comparing summed resource demands against capacities.
pub(crate) const RESOURCE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unbalanced invocation sequence at event {index}: {reason}")]
    UnbalancedSequence { index: usize, reason: String },
    #[error("unknown microservice type {0}")]
    UnknownType(TypeId),
    #[error("microservice type {0} invokes itself")]
    SelfInvocation(TypeId),
    #[error("no payload entry for invocation {caller} -> {callee}")]
    MissingPayload { caller: TypeId, callee: TypeId },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: NodeId, reason: String },
    #[error("invalid link {a}-{b}: {reason}")]
    InvalidLink { a: NodeId, b: NodeId, reason: String },
    #[error("invalid microservice type {id}: {reason}")]
    InvalidType { id: TypeId, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Access,
    Routing,
    Compute,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// CPU units; zero unless the node is a compute node.
    pub cpu_capacity: f64,
    /// Megabytes; zero unless the node is a compute node.
    pub mem_capacity: f64,
    /// Poisson arrival rate per service (requests/second). Only access nodes
    /// carry rates.
    pub arrival_rates: Vec<f64>,
}

impl Node {
    pub fn access(id: NodeId, arrival_rates: Vec<f64>) -> Self {
        Node { id, kind: NodeKind::Access, cpu_capacity: 0.0, mem_capacity: 0.0, arrival_rates }
    }

    pub fn routing(id: NodeId) -> Self {
        Node { id, kind: NodeKind::Routing, cpu_capacity: 0.0, mem_capacity: 0.0, arrival_rates: Vec::new() }
    }

    pub fn compute(id: NodeId, cpu_capacity: f64, mem_capacity: f64) -> Self {
        Node { id, kind: NodeKind::Compute, cpu_capacity, mem_capacity, arrival_rates: Vec::new() }
    }
}

/// Undirected full-duplex link: `bandwidth` applies to each direction separately.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    /// Megabits/second per direction.
    pub bandwidth: f64,
    /// Seconds.
    pub propagation_delay: f64,
}

impl Link {
    pub fn new(a: NodeId, b: NodeId, bandwidth: f64, propagation_delay: f64) -> Self {
        Link { a, b, bandwidth, propagation_delay }
    }
}

/// Directed view of a link. Link `l` yields directed ids `2l` (a->b) and
/// `2l + 1` (b->a).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectedLink {
    pub id: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub bandwidth: f64,
    pub propagation_delay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: Vec<Vec<NodeId>>,
    directed: Vec<DirectedLink>,
    /// Dense `n * n` lookup from node pair to directed link id.
    hop_index: Vec<Option<usize>>,
}

impl NetworkTopology {
    /// Validates node and link invariants. Connectivity is checked when a
    /// routing table is built.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, ModelError> {
        let n = nodes.len();
        if n == 0 {
            return Err(ModelError::InvalidScenario("topology has no nodes".into()));
        }
        for (idx, node) in nodes.iter().enumerate() {
            let invalid = |reason: &str| ModelError::InvalidNode { node: node.id, reason: reason.into() };
            if node.id != idx {
                return Err(invalid("node ids must be dense and in order"));
            }
            let has_resources = node.cpu_capacity > 0.0 && node.mem_capacity > 0.0;
            match node.kind {
                NodeKind::Compute if !has_resources => {
                    return Err(invalid("compute node needs positive cpu and memory"))
                }
                NodeKind::Access | NodeKind::Routing
                    if node.cpu_capacity != 0.0 || node.mem_capacity != 0.0 =>
                {
                    return Err(invalid("only compute nodes carry resources"))
                }
                _ => {}
            }
            if !node.cpu_capacity.is_finite() || !node.mem_capacity.is_finite() {
                return Err(invalid("capacities must be finite"));
            }
            match node.kind {
                NodeKind::Access if node.arrival_rates.is_empty() => {
                    return Err(invalid("access node needs arrival rates"))
                }
                NodeKind::Routing | NodeKind::Compute if !node.arrival_rates.is_empty() => {
                    return Err(invalid("only access nodes carry arrival rates"))
                }
                _ => {}
            }
            if node.arrival_rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(invalid("arrival rates must be finite and non-negative"));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut hop_index = vec![None; n * n];
        let mut directed = Vec::with_capacity(links.len() * 2);
        for (l, link) in links.iter().enumerate() {
            let invalid = |reason: &str| ModelError::InvalidLink { a: link.a, b: link.b, reason: reason.into() };
            if link.a >= n || link.b >= n {
                return Err(invalid("endpoint out of range"));
            }
            if link.a == link.b {
                return Err(invalid("endpoints must differ"));
            }
            if !(link.bandwidth > 0.0 && link.bandwidth.is_finite()) {
                return Err(invalid("bandwidth must be positive"));
            }
            if !(link.propagation_delay >= 0.0 && link.propagation_delay.is_finite()) {
                return Err(invalid("propagation delay must be non-negative"));
            }
            if hop_index[link.a * n + link.b].is_some() {
                return Err(invalid("duplicate link"));
            }
            hop_index[link.a * n + link.b] = Some(2 * l);
            hop_index[link.b * n + link.a] = Some(2 * l + 1);
            adjacency[link.a].push(link.b);
            adjacency[link.b].push(link.a);
            for (id, from, to) in [(2 * l, link.a, link.b), (2 * l + 1, link.b, link.a)] {
                directed.push(DirectedLink {
                    id,
                    from,
                    to,
                    bandwidth: link.bandwidth,
                    propagation_delay: link.propagation_delay,
                });
            }
        }
        for neighbours in &mut adjacency {
            neighbours.sort_unstable();
        }

        Ok(NetworkTopology { nodes, links, adjacency, directed, hop_index })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn directed_links(&self) -> &[DirectedLink] {
        &self.directed
    }

    /// Neighbours of `p` in ascending id order.
    pub fn neighbours(&self, p: NodeId) -> &[NodeId] {
        &self.adjacency[p]
    }

    pub fn directed_link(&self, from: NodeId, to: NodeId) -> Option<usize> {
        let n = self.nodes.len();
        if from >= n || to >= n {
            return None;
        }
        self.hop_index[from * n + to]
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.id).collect()
    }

    /// Rebuilds the topology with every link passed through `f`.
    pub fn map_links(&self, mut f: impl FnMut(&Link) -> Link) -> Result<Self, ModelError> {
        NetworkTopology::new(self.nodes.clone(), self.links.iter().map(&mut f).collect())
    }

    /// Rebuilds the topology with every node passed through `f`.
    pub fn map_nodes(&self, mut f: impl FnMut(&Node) -> Node) -> Result<Self, ModelError> {
        NetworkTopology::new(self.nodes.iter().map(&mut f).collect(), self.links.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceType {
    pub id: TypeId,
    /// CPU units per instance.
    pub cpu_demand: f64,
    /// Megabytes per instance.
    pub mem_demand: f64,
    pub instance_count: usize,
}

/// Payload sizes for one caller/callee type pair, in kilobytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Payload {
    pub request_kb: f64,
    pub response_kb: f64,
}

/// Service-independent payload sizes keyed by `(caller, callee)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PayloadTable {
    entries: BTreeMap<(TypeId, TypeId), Payload>,
}

impl PayloadTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, caller: TypeId, callee: TypeId, request_kb: f64, response_kb: f64) {
        self.entries.insert((caller, callee), Payload { request_kb, response_kb });
    }

    pub fn get(&self, caller: TypeId, callee: TypeId) -> Option<Payload> {
        self.entries.get(&(caller, callee)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((TypeId, TypeId), Payload)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Uncompiled service description: an event list plus optional weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceDraft {
    pub weight: Option<f64>,
    pub events: Vec<Invocation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    topology: NetworkTopology,
    catalog: Vec<MicroserviceType>,
    services: Vec<ServiceSpec>,
    payloads: PayloadTable,
    packet_size_kb: f64,
    rng_seed: u64,
    access_nodes: Vec<NodeId>,
    compute_nodes: Vec<NodeId>,
}

impl Scenario {
    /// Assembles and validates a scenario. `types` lists the real microservice
    /// types with ids `1..=types.len()`; the virtual head is derived from the
    /// access nodes. Services are compiled from their event lists; missing
    /// weights default to `1/K`.
    pub fn assemble(
        topology: NetworkTopology,
        types: Vec<MicroserviceType>,
        payloads: PayloadTable,
        services: Vec<ServiceDraft>,
        packet_size_kb: f64,
        rng_seed: u64,
    ) -> Result<Self, ModelError> {
        let access_nodes = topology.nodes_of_kind(NodeKind::Access);
        let compute_nodes = topology.nodes_of_kind(NodeKind::Compute);
        if access_nodes.is_empty() {
            return Err(ModelError::InvalidScenario("no user-access nodes".into()));
        }
        if compute_nodes.is_empty() {
            return Err(ModelError::InvalidScenario("no compute nodes".into()));
        }

        let mut catalog = Vec::with_capacity(types.len() + 1);
        catalog.push(MicroserviceType {
            id: HEAD,
            cpu_demand: 0.0,
            mem_demand: 0.0,
            instance_count: access_nodes.len(),
        });
        for (idx, t) in types.into_iter().enumerate() {
            let invalid = |reason: &str| ModelError::InvalidType { id: t.id, reason: reason.into() };
            if t.id != idx + 1 {
                return Err(invalid("type ids must be dense starting at 1"));
            }
            if !(t.cpu_demand >= 0.0 && t.mem_demand >= 0.0)
                || !t.cpu_demand.is_finite()
                || !t.mem_demand.is_finite()
            {
                return Err(invalid("demands must be finite and non-negative"));
            }
            if t.instance_count == 0 {
                return Err(invalid("instance count must be at least 1"));
            }
            if t.instance_count > compute_nodes.len() {
                return Err(invalid("more instances than compute nodes"));
            }
            catalog.push(t);
        }

        let k = services.len();
        if k == 0 {
            return Err(ModelError::InvalidScenario("no services".into()));
        }
        for &p in &access_nodes {
            if topology.node(p).arrival_rates.len() != k {
                return Err(ModelError::InvalidNode {
                    node: p,
                    reason: format!("expected {k} arrival rates"),
                });
            }
        }
        for ((caller, callee), payload) in payloads.iter() {
            if caller >= catalog.len() || callee >= catalog.len() {
                return Err(ModelError::UnknownType(caller.max(callee)));
            }
            if !(payload.request_kb >= 0.0 && payload.response_kb >= 0.0) {
                return Err(ModelError::InvalidScenario(format!(
                    "negative payload for {caller} -> {callee}"
                )));
            }
        }

        let default_weight = 1.0 / k as f64;
        let mut compiled = Vec::with_capacity(k);
        for (id, draft) in services.into_iter().enumerate() {
            let weight = draft.weight.unwrap_or(default_weight);
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(ModelError::InvalidScenario(format!("service {id} has invalid weight")));
            }
            compiled.push(compile_service(id, weight, &draft.events, catalog.len(), &payloads)?);
        }
        if compiled.iter().map(ServiceSpec::weight).sum::<f64>() <= 0.0 {
            return Err(ModelError::InvalidScenario("service weights sum to zero".into()));
        }
        if !(packet_size_kb > 0.0) {
            return Err(ModelError::InvalidScenario("packet size must be positive".into()));
        }

        Ok(Scenario {
            topology,
            catalog,
            services: compiled,
            payloads,
            packet_size_kb,
            rng_seed,
            access_nodes,
            compute_nodes,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    /// All types including the virtual head at index 0.
    pub fn catalog(&self) -> &[MicroserviceType] {
        &self.catalog
    }

    pub fn type_count(&self) -> usize {
        self.catalog.len()
    }

    pub fn services(&self) -> &[ServiceSpec] {
        &self.services
    }

    pub fn payloads(&self) -> &PayloadTable {
        &self.payloads
    }

    pub fn packet_size_kb(&self) -> f64 {
        self.packet_size_kb
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn access_nodes(&self) -> &[NodeId] {
        &self.access_nodes
    }

    pub fn compute_nodes(&self) -> &[NodeId] {
        &self.compute_nodes
    }

    /// Aggregate arrival rate of service `k` over all access nodes.
    pub fn aggregate_arrival(&self, k: ServiceId) -> f64 {
        self.access_nodes.iter().map(|&p| self.topology.node(p).arrival_rates[k]).sum()
    }

    /// Event lists of every service, in service order.
    pub fn drafts(&self) -> Vec<ServiceDraft> {
        self.services
            .iter()
            .map(|s| ServiceDraft { weight: Some(s.weight()), events: s.events().to_vec() })
            .collect()
    }

    fn rebuild(&self, topology: NetworkTopology) -> Result<Self, ModelError> {
        Scenario::assemble(
            topology,
            self.catalog[1..].to_vec(),
            self.payloads.clone(),
            self.drafts(),
            self.packet_size_kb,
            self.rng_seed,
        )
    }

    /// Same scenario on a different topology with identical node set.
    pub fn with_topology(&self, topology: NetworkTopology) -> Result<Self, ModelError> {
        self.rebuild(topology)
    }

    pub fn with_link_bandwidth(&self, bandwidth: f64) -> Result<Self, ModelError> {
        self.rebuild(self.topology.map_links(|l| Link { bandwidth, ..l.clone() })?)
    }

    pub fn with_scaled_bandwidth(&self, factor: f64) -> Result<Self, ModelError> {
        self.rebuild(self.topology.map_links(|l| Link { bandwidth: l.bandwidth * factor, ..l.clone() })?)
    }

    pub fn with_scaled_arrivals(&self, factor: f64) -> Result<Self, ModelError> {
        self.rebuild(self.topology.map_nodes(|n| Node {
            arrival_rates: n.arrival_rates.iter().map(|r| r * factor).collect(),
            ..n.clone()
        })?)
    }

    pub fn with_compute_cpu(&self, cpu: f64) -> Result<Self, ModelError> {
        self.rebuild(self.topology.map_nodes(|n| {
            if n.kind == NodeKind::Compute {
                Node { cpu_capacity: cpu, ..n.clone() }
            } else {
                n.clone()
            }
        })?)
    }
}
