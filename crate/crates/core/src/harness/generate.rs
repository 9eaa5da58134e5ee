use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{
    Invocation, Link, MicroserviceType, NetworkTopology, Node, NodeId, PayloadTable, Scenario, ServiceDraft,
    TypeId, HEAD,
};
use crate::routing::{build_routing, lfl};

/// Inclusive `[min, max]` sampling range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Span<T> {
    pub fn new(min: T, max: T) -> Self {
        Span { min, max }
    }

    fn is_valid(&self) -> bool {
        self.min <= self.max
    }
}

fn uniform(rng: &mut ChaCha8Rng, span: Span<f64>) -> f64 {
    if span.min == span.max {
        span.min
    } else {
        rng.gen_range(span.min..=span.max)
    }
}

fn uniform_count(rng: &mut ChaCha8Rng, span: Span<usize>) -> usize {
    rng.gen_range(span.min..=span.max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub type_count: usize,
    pub payload_kb: Span<f64>,
    pub cpu_demand: Span<f64>,
    pub mem_demand_mb: Span<f64>,
    pub instances: Span<usize>,
    pub service_count: usize,
    /// Distinct microservices invoked per service.
    pub invocations: Span<usize>,
    /// Probability that a service repeats one leaf call.
    pub repeat_prob: f64,
    pub arrival_rate: Span<f64>,
    pub compute_nodes: usize,
    pub routing_nodes: usize,
    pub access_nodes: usize,
    pub link_bandwidth: f64,
    pub propagation_delay: f64,
    pub node_cpu: f64,
    pub node_mem_mb: f64,
    /// Average link forwarding load the topology must land within 10% of.
    pub target_lfl: f64,
    pub packet_size_kb: f64,
    pub rng_seed: u64,
}

impl GeneratorParams {
    /// Full-size setting: 50 types over a 50-node network.
    pub fn paper() -> Self {
        GeneratorParams {
            type_count: 50,
            payload_kb: Span::new(10.0, 100.0),
            cpu_demand: Span::new(0.1, 0.3),
            mem_demand_mb: Span::new(100.0, 300.0),
            instances: Span::new(3, 5),
            service_count: 10,
            invocations: Span::new(5, 8),
            repeat_prob: 0.3,
            arrival_rate: Span::new(30.0, 50.0),
            compute_nodes: 35,
            routing_nodes: 10,
            access_nodes: 5,
            link_bandwidth: 100.0,
            propagation_delay: 1e-5,
            node_cpu: 8.0,
            node_mem_mb: 8000.0,
            target_lfl: 90.0,
            packet_size_kb: 1.5,
            rng_seed: 0,
        }
    }

    /// Small profile: 10 types, 3 services, 12 nodes (8 compute, 2 routing,
    /// 2 access), 2 instances per type.
    pub fn desk() -> Self {
        GeneratorParams {
            type_count: 10,
            instances: Span::new(2, 2),
            service_count: 3,
            compute_nodes: 8,
            routing_nodes: 2,
            access_nodes: 2,
            target_lfl: 18.0,
            ..GeneratorParams::paper()
        }
    }

    /// Instances small enough for exhaustive search: 5 types with 2
    /// instances on 5 compute nodes, i.e. 10^5 placements.
    pub fn oracle() -> Self {
        GeneratorParams {
            type_count: 5,
            instances: Span::new(2, 2),
            service_count: 2,
            invocations: Span::new(3, 5),
            compute_nodes: 5,
            routing_nodes: 2,
            access_nodes: 2,
            target_lfl: 10.0,
            ..GeneratorParams::paper()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn node_count(&self) -> usize {
        self.compute_nodes + self.routing_nodes + self.access_nodes
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::InvalidParams(m.into()));
        let spans_ok = self.payload_kb.is_valid()
            && self.cpu_demand.is_valid()
            && self.mem_demand_mb.is_valid()
            && self.instances.is_valid()
            && self.invocations.is_valid()
            && self.arrival_rate.is_valid();
        if !spans_ok {
            return fail("every range needs min <= max");
        }
        if self.compute_nodes == 0 || self.routing_nodes == 0 || self.access_nodes == 0 {
            return fail("every node kind needs at least one node");
        }
        if self.type_count == 0 || self.service_count == 0 {
            return fail("type_count and service_count must be positive");
        }
        if self.invocations.min == 0 || self.invocations.max > self.type_count {
            return fail("invocations must lie in 1..=type_count");
        }
        if self.instances.min == 0 || self.instances.max > self.compute_nodes {
            return fail("instances must lie in 1..=compute_nodes");
        }
        let positive = [
            self.payload_kb.min,
            self.arrival_rate.min,
            self.link_bandwidth,
            self.propagation_delay,
            self.node_cpu,
            self.node_mem_mb,
            self.target_lfl,
            self.packet_size_kb,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return fail("payloads, rates, bandwidth, delay, capacities and target_lfl must be positive");
        }
        if self.cpu_demand.min < 0.0 || self.mem_demand_mb.min < 0.0 {
            return fail("resource demands must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.repeat_prob) {
            return fail("repeat_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

const TOPOLOGY_ATTEMPTS: usize = 200;
const CATALOG_ATTEMPTS: usize = 200;
const LFL_BAND: f64 = 0.1;
/// Total demand may use at most this share of total compute capacity.
const DEMAND_SHARE: f64 = 0.8;

/// Samples a scenario; every draw comes from one stream seeded by
/// `params.rng_seed`.
pub fn generate_scenario(params: &GeneratorParams) -> Result<Scenario, HarnessError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let catalog = sample_catalog(params, &mut rng)?;
    let mut payloads = PayloadTable::new();
    let drafts: Vec<ServiceDraft> = (0..params.service_count)
        .map(|_| ServiceDraft { weight: None, events: sample_service(params, &mut payloads, &mut rng) })
        .collect();
    let arrivals = sample_arrivals(params, &mut rng);
    let topology = sample_topology(params, &arrivals, &mut rng)?;
    Ok(Scenario::assemble(topology, catalog, payloads, drafts, params.packet_size_kb, params.rng_seed)?)
}

fn sample_catalog(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Result<Vec<MicroserviceType>, HarnessError> {
    let cpu_cap = params.node_cpu * params.compute_nodes as f64 * DEMAND_SHARE;
    let mem_cap = params.node_mem_mb * params.compute_nodes as f64 * DEMAND_SHARE;
    for _ in 0..CATALOG_ATTEMPTS {
        let catalog: Vec<MicroserviceType> = (1..=params.type_count)
            .map(|id| MicroserviceType {
                id,
                cpu_demand: uniform(rng, params.cpu_demand),
                mem_demand: uniform(rng, params.mem_demand_mb),
                instance_count: uniform_count(rng, params.instances),
            })
            .collect();
        let fits_node = catalog
            .iter()
            .all(|t| t.cpu_demand <= params.node_cpu && t.mem_demand <= params.node_mem_mb);
        let cpu: f64 = catalog.iter().map(|t| t.cpu_demand * t.instance_count as f64).sum();
        let mem: f64 = catalog.iter().map(|t| t.mem_demand * t.instance_count as f64).sum();
        if fits_node && cpu <= cpu_cap && mem <= mem_cap {
            return Ok(catalog);
        }
    }
    Err(HarnessError::GenerationFailed(format!(
        "no catalog within {:.0}% of compute capacity after {CATALOG_ATTEMPTS} attempts",
        DEMAND_SHARE * 100.0
    )))
}

/// A call tree over distinct types rooted at the head, linearized depth
/// first. Each new type extends the most recent one with probability 0.7
/// (a chain) and otherwise branches from a random earlier one.
fn sample_service(params: &GeneratorParams, payloads: &mut PayloadTable, rng: &mut ChaCha8Rng) -> Vec<Invocation> {
    let m = uniform_count(rng, params.invocations);
    let types: Vec<TypeId> = index::sample(rng, params.type_count, m).into_iter().map(|i| i + 1).collect();
    // children[v] lists (child position, repeat count) for tree position v;
    // position 0 is the head.
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + 1];
    children[0].push((1, 1));
    for v in 2..=m {
        let parent = if rng.gen_bool(0.7) { v - 1 } else { rng.gen_range(1..v) };
        children[parent].push((v, 1));
    }
    if rng.gen_bool(params.repeat_prob) {
        let leaves: Vec<(usize, usize)> = (1..=m)
            .flat_map(|p| children[p].iter().enumerate().map(move |(i, _)| (p, i)))
            .filter(|&(p, i)| children[children[p][i].0].is_empty())
            .collect();
        if let Some(&(p, i)) = leaves.choose(rng) {
            children[p][i].1 = 2;
        }
    }
    let label = |v: usize| if v == 0 { HEAD } else { types[v - 1] };

    let mut events = Vec::new();
    let mut stack = vec![(0usize, 0usize)];
    // Iterative DFS: (position, next child index). A call is emitted `count`
    // times; a repeated call is only ever a leaf.
    while let Some((v, next)) = stack.pop() {
        if let Some(&(c, count)) = children[v].get(next) {
            stack.push((v, next + 1));
            let (caller, callee) = (label(v), label(c));
            if payloads.get(caller, callee).is_none() {
                let request = uniform(rng, params.payload_kb);
                let response = uniform(rng, params.payload_kb);
                payloads.insert(caller, callee, request, response);
            }
            for _ in 1..count {
                events.push(Invocation::request(caller, callee));
                events.push(Invocation::response(callee, caller));
            }
            events.push(Invocation::request(caller, callee));
            stack.push((c, 0));
        } else if v != 0 {
            let parent = (0..=m).find(|&p| children[p].iter().any(|&(c, _)| c == v)).expect("tree node has a parent");
            events.push(Invocation::response(label(v), label(parent)));
        }
    }
    events
}

/// `arrivals[k][a]` for access node `a`: `lambda^k` drawn from the range and
/// split over access nodes in random proportions.
fn sample_arrivals(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..params.service_count)
        .map(|_| {
            let lambda = uniform(rng, params.arrival_rate);
            let shares: Vec<f64> = (0..params.access_nodes).map(|_| rng.gen_range(0.5..=1.5)).collect();
            let sum: f64 = shares.iter().sum();
            shares.iter().map(|w| lambda * w / sum).collect()
        })
        .collect()
}

/// Node ids: access nodes first, then routing, then compute.
fn sample_topology(
    params: &GeneratorParams,
    arrivals: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<NetworkTopology, HarnessError> {
    let n = params.node_count();
    let mut nodes = Vec::with_capacity(n);
    for a in 0..params.access_nodes {
        nodes.push(Node::access(a, arrivals.iter().map(|k| k[a]).collect()));
    }
    for r in 0..params.routing_nodes {
        nodes.push(Node::routing(params.access_nodes + r));
    }
    for c in 0..params.compute_nodes {
        nodes.push(Node::compute(params.access_nodes + params.routing_nodes + c, params.node_cpu, params.node_mem_mb));
    }
    let (lo, hi) = (params.target_lfl * (1.0 - LFL_BAND), params.target_lfl * (1.0 + LFL_BAND));
    let link = |a: NodeId, b: NodeId| Link::new(a, b, params.link_bandwidth, params.propagation_delay);
    let average = |edges: &[(NodeId, NodeId)]| -> Result<(NetworkTopology, f64), HarnessError> {
        let topo = NetworkTopology::new(nodes.clone(), edges.iter().map(|&(a, b)| link(a, b)).collect())?;
        let table = build_routing(&topo).expect("spanning tree keeps the graph connected");
        let avg = lfl(&topo, &table).average;
        Ok((topo, avg))
    };

    let mut closest = f64::NAN;
    for _ in 0..TOPOLOGY_ATTEMPTS {
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(rng);
        let mut edges: Vec<(NodeId, NodeId)> = (1..n)
            .map(|i| {
                let (a, b) = (order[rng.gen_range(0..i)], order[i]);
                (a.min(b), a.max(b))
            })
            .collect();
        let mut non_edges: Vec<(NodeId, NodeId)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|e| !edges.contains(e))
            .collect();
        non_edges.shuffle(rng);
        let (mut topo, mut avg) = average(&edges)?;
        for e in non_edges {
            if avg <= hi {
                break;
            }
            edges.push(e);
            (topo, avg) = average(&edges)?;
        }
        if (lo..=hi).contains(&avg) {
            return Ok(topo);
        }
        if closest.is_nan() || (avg - params.target_lfl).abs() < (closest - params.target_lfl).abs() {
            closest = avg;
        }
    }
    Err(HarnessError::GenerationFailed(format!(
        "average LFL {} unreachable after {TOPOLOGY_ATTEMPTS} attempts (closest {closest:.2})",
        params.target_lfl
    )))
}
