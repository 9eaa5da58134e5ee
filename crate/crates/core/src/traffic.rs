//! Maps a deployment onto link traffic, residual bandwidth and the weighted
//! communication delay.
//!
//! Units: payloads in kilobytes, bandwidth in megabits/second, arrival rates in
//! requests/second, delays in seconds. Kilobytes convert to megabits with
//! [`KB_TO_MEGABITS`].
//!
//! The pipeline runs in one pass, with no iterative coupling: invocation
//! probabilities, instance-pair frequencies, direct node-to-node traffic,
//! per-link traffic, residual bandwidth, then delays. A link is saturated when
//! its traffic reaches its bandwidth; any saturated link replaces the delay
//! with `PENALTY_BASE + sum(max(0, traffic / bandwidth - 1))`, which keeps
//! congested deployments ordered by how far they overshoot.

use thiserror::Error;

use crate::model::{
    validate_deployment, Deployment, Feasibility, ModelError, NodeId, Scenario, ServiceId, TypeId,
    Violation, HEAD,
};
use crate::routing::RoutingTable;

pub const KB_TO_MEGABITS: f64 = 8.0 / 1000.0;

/// Delay assigned to any deployment that saturates a link, before the
/// overload term is added.
pub const PENALTY_BASE: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("service {service} has zero aggregate arrival rate")]
    ZeroAggregateArrival { service: ServiceId },
    #[error("deployment violates resource or instance constraints: {0:?}")]
    InfeasibleDeployment(Vec<Violation>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `P^k` per service, type and instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InvocationProbabilities {
    per_service: Vec<Vec<Vec<f64>>>,
}

impl InvocationProbabilities {
    pub fn get(&self, service: ServiceId, microservice: TypeId, instance: usize) -> f64 {
        self.per_service[service][microservice][instance]
    }

    pub fn instances(&self, service: ServiceId, microservice: TypeId) -> &[f64] {
        &self.per_service[service][microservice]
    }
}

fn check_shape(s: &Scenario, d: &Deployment) -> Result<(), TrafficError> {
    if d.type_count() != s.type_count() {
        return Err(ModelError::DimensionMismatch(format!(
            "deployment has {} types, scenario has {}",
            d.type_count(),
            s.type_count()
        ))
        .into());
    }
    if let Some(t) = (0..d.type_count()).find(|&t| d.hosts(t).is_empty()) {
        return Err(ModelError::DimensionMismatch(format!("type {t} has no instances")).into());
    }
    Ok(())
}

fn check_arrivals(s: &Scenario) -> Result<Vec<f64>, TrafficError> {
    (0..s.services().len())
        .map(|k| {
            let lambda = s.aggregate_arrival(k);
            if lambda > 0.0 {
                Ok(lambda)
            } else {
                Err(TrafficError::ZeroAggregateArrival { service: k })
            }
        })
        .collect()
}

/// Head instances are chosen in proportion to the arrival rate at their access
/// node; every other type is chosen uniformly (round robin).
pub fn instance_probabilities(s: &Scenario, d: &Deployment) -> Result<InvocationProbabilities, TrafficError> {
    check_shape(s, d)?;
    let lambdas = check_arrivals(s)?;
    let per_service = lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            (0..d.type_count())
                .map(|t| {
                    let hosts = d.hosts(t);
                    if t == HEAD {
                        hosts.iter().map(|&p| s.topology().node(p).arrival_rates.get(k).copied().unwrap_or(0.0) / lambda).collect()
                    } else {
                        vec![1.0 / hosts.len() as f64; hosts.len()]
                    }
                })
                .collect()
        })
        .collect();
    Ok(InvocationProbabilities { per_service })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceRef {
    pub microservice: TypeId,
    pub instance: usize,
}

/// Instance-level request `caller -> callee` and its matching response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceCall {
    pub caller: InstanceRef,
    pub callee: InstanceRef,
    pub caller_node: NodeId,
    pub callee_node: NodeId,
    /// Average requests per execution; equals the response frequency back.
    pub frequency: f64,
    /// Kilobytes requested per execution.
    pub request_volume_kb: f64,
    /// Kilobytes returned per execution.
    pub response_volume_kb: f64,
    /// Kilobytes per single request.
    pub request_kb: f64,
    /// Kilobytes per single response.
    pub response_kb: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseFlows {
    per_service: Vec<Vec<InstanceCall>>,
}

impl PairwiseFlows {
    pub fn service_calls(&self, k: ServiceId) -> &[InstanceCall] {
        &self.per_service[k]
    }

    pub fn service_count(&self) -> usize {
        self.per_service.len()
    }

    /// `F^k` from instance `from` to instance `to`.
    pub fn request_frequency(&self, k: ServiceId, from: InstanceRef, to: InstanceRef) -> f64 {
        self.per_service[k]
            .iter()
            .filter(|c| c.caller == from && c.callee == to)
            .map(|c| c.frequency)
            .sum()
    }

    /// `R^k` from instance `from` (the responder) to instance `to`.
    pub fn response_frequency(&self, k: ServiceId, from: InstanceRef, to: InstanceRef) -> f64 {
        self.per_service[k]
            .iter()
            .filter(|c| c.callee == from && c.caller == to)
            .map(|c| c.frequency)
            .sum()
    }

    /// Kilobytes of responses from `from` to `to` per execution.
    pub fn response_volume(&self, k: ServiceId, from: InstanceRef, to: InstanceRef) -> f64 {
        self.per_service[k]
            .iter()
            .filter(|c| c.callee == from && c.caller == to)
            .map(|c| c.response_volume_kb)
            .sum()
    }
}

pub fn pairwise_flows(s: &Scenario, d: &Deployment, probs: &InvocationProbabilities) -> PairwiseFlows {
    let per_service = s
        .services()
        .iter()
        .enumerate()
        .map(|(k, svc)| {
            let mut out = Vec::new();
            for call in svc.calls() {
                for (a, &pn) in d.hosts(call.caller).iter().enumerate() {
                    let pa = probs.get(k, call.caller, a);
                    for (b, &qn) in d.hosts(call.callee).iter().enumerate() {
                        let frequency = call.count as f64 * pa * probs.get(k, call.callee, b);
                        out.push(InstanceCall {
                            caller: InstanceRef { microservice: call.caller, instance: a },
                            callee: InstanceRef { microservice: call.callee, instance: b },
                            caller_node: pn,
                            callee_node: qn,
                            frequency,
                            request_volume_kb: frequency * call.request_kb,
                            response_volume_kb: frequency * call.response_kb,
                            request_kb: call.request_kb,
                            response_kb: call.response_kb,
                        });
                    }
                }
            }
            out
        })
        .collect();
    PairwiseFlows { per_service }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficMatrix {
    n: usize,
    /// `S_{p,q}` in Mb/s, row-major `p * n + q`.
    direct: Vec<f64>,
    /// `S~` per directed link id, Mb/s.
    link_total: Vec<f64>,
}

impl TrafficMatrix {
    pub fn direct(&self, p: NodeId, q: NodeId) -> f64 {
        self.direct[p * self.n + q]
    }

    pub fn link_total(&self) -> &[f64] {
        &self.link_total
    }

    pub fn node_count(&self) -> usize {
        self.n
    }
}

pub fn traffic(s: &Scenario, flows: &PairwiseFlows, routing: &RoutingTable) -> TrafficMatrix {
    let n = s.topology().node_count();
    let mut direct = vec![0.0; n * n];
    for k in 0..flows.service_count() {
        let lambda = s.aggregate_arrival(k);
        for c in flows.service_calls(k) {
            direct[c.caller_node * n + c.callee_node] += lambda * c.request_volume_kb * KB_TO_MEGABITS;
            direct[c.callee_node * n + c.caller_node] += lambda * c.response_volume_kb * KB_TO_MEGABITS;
        }
    }
    let mut link_total = vec![0.0; s.topology().directed_links().len()];
    for p in 0..n {
        for q in 0..n {
            let v = direct[p * n + q];
            if v != 0.0 {
                for &h in routing.path_links(p, q) {
                    link_total[h] += v;
                }
            }
        }
    }
    TrafficMatrix { n, direct, link_total }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBandwidth {
    n: usize,
    /// `Z' = Z - S~` per directed link id; may be non-positive when saturated.
    residual: Vec<f64>,
    /// `Z^min_{p,q}`; `+inf` on the diagonal.
    bottleneck: Vec<f64>,
}

impl ResidualBandwidth {
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn bottleneck(&self, p: NodeId, q: NodeId) -> f64 {
        self.bottleneck[p * self.n + q]
    }
}

/// Residual bandwidth from the M/M/1 sending time: with service rate `Z/s`
/// and arrival rate `S~/s` packets, `s * (mu - lambda) = Z - S~`, so the
/// packet size cancels.
pub fn residual_bandwidth(
    topology: &crate::model::NetworkTopology,
    traffic: &TrafficMatrix,
    routing: &RoutingTable,
) -> ResidualBandwidth {
    let n = topology.node_count();
    let residual: Vec<f64> = topology
        .directed_links()
        .iter()
        .map(|l| l.bandwidth - traffic.link_total[l.id])
        .collect();
    let mut bottleneck = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            bottleneck.push(routing.path_links(p, q).iter().map(|&h| residual[h]).fold(f64::INFINITY, f64::min));
        }
    }
    ResidualBandwidth { n, residual, bottleneck }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayReport {
    /// `T_k` per service, seconds; `+inf` for a service whose traffic crosses
    /// a saturated link.
    pub service_delays: Vec<f64>,
    /// Weighted delay `T`, or the penalty when congested.
    pub total: f64,
    pub congested: bool,
    /// Directed link ids with traffic at or above bandwidth.
    pub saturated_links: Vec<usize>,
    pub traffic: TrafficMatrix,
    pub residual: ResidualBandwidth,
}

fn penalty(overloads: impl Iterator<Item = f64>) -> f64 {
    PENALTY_BASE + overloads.map(|r| (r - 1.0).max(0.0)).sum::<f64>()
}

/// Full evaluation with every intermediate quantity retained.
pub fn evaluate(s: &Scenario, d: &Deployment, routing: &RoutingTable) -> Result<DelayReport, TrafficError> {
    if let Feasibility::Infeasible(v) = validate_deployment(d, s)? {
        return Err(TrafficError::InfeasibleDeployment(v));
    }
    let probs = instance_probabilities(s, d)?;
    let flows = pairwise_flows(s, d, &probs);
    let traffic = traffic(s, &flows, routing);
    let residual = residual_bandwidth(s.topology(), &traffic, routing);

    let links = s.topology().directed_links();
    let saturated_links: Vec<usize> = links
        .iter()
        .filter(|l| traffic.link_total[l.id] >= l.bandwidth)
        .map(|l| l.id)
        .collect();
    let congested = !saturated_links.is_empty();

    let service_delays: Vec<f64> = (0..s.services().len())
        .map(|k| {
            let mut t_k = 0.0;
            for c in flows.service_calls(k) {
                let (p, q) = (c.caller_node, c.callee_node);
                if p == q {
                    continue;
                }
                let (z_pq, z_qp) = (residual.bottleneck(p, q), residual.bottleneck(q, p));
                if z_pq <= 0.0 || z_qp <= 0.0 {
                    return f64::INFINITY;
                }
                let request = routing.propagation(p, q) + c.request_kb * KB_TO_MEGABITS / z_pq;
                let response = routing.propagation(q, p) + c.response_kb * KB_TO_MEGABITS / z_qp;
                t_k += c.frequency * request + c.frequency * response;
            }
            t_k
        })
        .collect();

    let total = if congested {
        penalty(links.iter().map(|l| traffic.link_total[l.id] / l.bandwidth))
    } else {
        s.services().iter().zip(&service_delays).map(|(svc, t)| svc.weight() * t).sum()
    };

    Ok(DelayReport { service_delays, total, congested, saturated_links, traffic, residual })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub total: f64,
    pub congested: bool,
}

#[derive(Clone, Copy)]
struct Flow {
    weight: f64,
    p: NodeId,
    q: NodeId,
    frequency: f64,
    request_kb: f64,
    response_kb: f64,
}

/// Allocation-light scorer for repeated evaluation of feasible deployments.
/// Agrees with [`evaluate`] on `total` and `congested`.
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    routing: &'a RoutingTable,
    lambdas: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(scenario: &'a Scenario, routing: &'a RoutingTable) -> Result<Self, TrafficError> {
        Ok(Evaluator { scenario, routing, lambdas: check_arrivals(scenario)? })
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn routing(&self) -> &'a RoutingTable {
        self.routing
    }

    /// The deployment must satisfy instance-count and resource constraints.
    pub fn score(&self, d: &Deployment) -> Score {
        let s = self.scenario;
        let links = s.topology().directed_links();
        let mut link_total = vec![0.0; links.len()];
        let mut flows = Vec::new();
        for (k, svc) in s.services().iter().enumerate() {
            let lambda = self.lambdas[k];
            for call in svc.calls() {
                let callers = d.hosts(call.caller);
                let callees = d.hosts(call.callee);
                for &p in callers {
                    let pa = if call.caller == HEAD {
                        s.topology().node(p).arrival_rates[k] / lambda
                    } else {
                        1.0 / callers.len() as f64
                    };
                    for &q in callees {
                        if p == q {
                            continue;
                        }
                        let frequency = call.count as f64 * pa / callees.len() as f64;
                        let up = lambda * frequency * call.request_kb * KB_TO_MEGABITS;
                        for &h in self.routing.path_links(p, q) {
                            link_total[h] += up;
                        }
                        let down = lambda * frequency * call.response_kb * KB_TO_MEGABITS;
                        for &h in self.routing.path_links(q, p) {
                            link_total[h] += down;
                        }
                        flows.push(Flow {
                            weight: svc.weight(),
                            p,
                            q,
                            frequency,
                            request_kb: call.request_kb,
                            response_kb: call.response_kb,
                        });
                    }
                }
            }
        }

        if links.iter().any(|l| link_total[l.id] >= l.bandwidth) {
            return Score {
                total: penalty(links.iter().map(|l| link_total[l.id] / l.bandwidth)),
                congested: true,
            };
        }

        let bottleneck = |p: NodeId, q: NodeId| {
            self.routing
                .path_links(p, q)
                .iter()
                .map(|&h| links[h].bandwidth - link_total[h])
                .fold(f64::INFINITY, f64::min)
        };
        let mut total = 0.0;
        for f in &flows {
            let request = self.routing.propagation(f.p, f.q) + f.request_kb * KB_TO_MEGABITS / bottleneck(f.p, f.q);
            let response = self.routing.propagation(f.q, f.p) + f.response_kb * KB_TO_MEGABITS / bottleneck(f.q, f.p);
            total += f.weight * f.frequency * (request + response);
        }
        Score { total, congested: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Invocation, Link, MicroserviceType, NetworkTopology, Node, PayloadTable, ServiceDraft};
    use crate::routing::build_routing;

    /// Access node 0 linked to compute node 1; one type with one 1000 KB
    /// request and no response payload.
    fn two_node(rate: f64) -> Scenario {
        let topology = NetworkTopology::new(
            vec![Node::access(0, vec![rate]), Node::compute(1, 8.0, 8000.0)],
            vec![Link::new(0, 1, 100.0, 1e-5)],
        )
        .unwrap();
        let mut payloads = PayloadTable::new();
        payloads.insert(0, 1, 1000.0, 0.0);
        Scenario::assemble(
            topology,
            vec![MicroserviceType { id: 1, cpu_demand: 0.1, mem_demand: 10.0, instance_count: 1 }],
            payloads,
            vec![ServiceDraft { weight: None, events: vec![Invocation::request(0, 1), Invocation::response(1, 0)] }],
            1.5,
            0,
        )
        .unwrap()
    }

    #[test]
    fn single_request_arithmetic() {
        // Near-zero load keeps the link idle. The request costs
        // 1e-5 + 8 Mb / 100 Mb/s; the empty response still pays propagation.
        let s = two_node(1e-12);
        let r = build_routing(s.topology()).unwrap();
        let d = Deployment::pinned(&s, vec![vec![1]]);
        let report = evaluate(&s, &d, &r).unwrap();
        assert!((report.total - (0.08001 + 1e-5)).abs() < 1e-12, "{}", report.total);
    }

    #[test]
    fn unit_conversion_of_direct_traffic() {
        let s = two_node(1.0);
        let r = build_routing(s.topology()).unwrap();
        let d = Deployment::pinned(&s, vec![vec![1]]);
        let report = evaluate(&s, &d, &r).unwrap();
        assert!((report.traffic.direct(0, 1) - 8.0).abs() < 1e-12);
        assert_eq!(report.traffic.direct(1, 0), 0.0);
        assert!((report.residual.residual()[0] - 92.0).abs() < 1e-12);
        assert_eq!(report.residual.residual()[1], 100.0);
        let expected = 1e-5 + 8.0 / 92.0 + 1e-5;
        assert!((report.total - expected).abs() < 1e-12);
    }

    #[test]
    fn saturation_is_penalized() {
        // 13 requests/s of 1000 KB = 104 Mb/s on a 100 Mb/s link.
        let s = two_node(13.0);
        let r = build_routing(s.topology()).unwrap();
        let d = Deployment::pinned(&s, vec![vec![1]]);
        let report = evaluate(&s, &d, &r).unwrap();
        assert!(report.congested);
        assert_eq!(report.saturated_links, vec![0]);
        assert!((report.total - (PENALTY_BASE + 0.04)).abs() < 1e-6);
        assert_eq!(report.service_delays[0], f64::INFINITY);
        let fast = Evaluator::new(&s, &r).unwrap().score(&d);
        assert!(fast.congested);
        assert!((fast.total - report.total).abs() < 1e-9);
    }

    #[test]
    fn zero_arrival_is_an_error() {
        let s = two_node(0.0);
        let d = Deployment::pinned(&s, vec![vec![1]]);
        assert_eq!(
            instance_probabilities(&s, &d).unwrap_err(),
            TrafficError::ZeroAggregateArrival { service: 0 }
        );
        let r = build_routing(s.topology()).unwrap();
        assert!(Evaluator::new(&s, &r).is_err());
    }

    #[test]
    fn infeasible_deployment_is_rejected() {
        let s = two_node(1.0);
        let r = build_routing(s.topology()).unwrap();
        let d = Deployment::pinned(&s, vec![vec![0]]);
        assert!(matches!(evaluate(&s, &d, &r), Err(TrafficError::InfeasibleDeployment(_))));
    }

    #[test]
    fn head_probabilities_follow_arrivals() {
        let topology = NetworkTopology::new(
            vec![Node::access(0, vec![30.0]), Node::access(1, vec![10.0]), Node::compute(2, 8.0, 8000.0)],
            vec![Link::new(0, 2, 100.0, 1e-5), Link::new(1, 2, 100.0, 1e-5)],
        )
        .unwrap();
        let mut payloads = PayloadTable::new();
        payloads.insert(0, 1, 10.0, 10.0);
        let s = Scenario::assemble(
            topology,
            vec![MicroserviceType { id: 1, cpu_demand: 0.1, mem_demand: 10.0, instance_count: 1 }],
            payloads,
            vec![ServiceDraft { weight: None, events: vec![Invocation::request(0, 1), Invocation::response(1, 0)] }],
            1.5,
            0,
        )
        .unwrap();
        let d = Deployment::pinned(&s, vec![vec![2]]);
        let p = instance_probabilities(&s, &d).unwrap();
        assert_eq!(p.instances(0, 0), &[0.75, 0.25]);
        assert_eq!(p.instances(0, 1), &[1.0]);
    }
}
