use super::{ModelError, NodeId, NodeKind, Scenario, TypeId, HEAD, RESOURCE_EPS};

/// Placement of every microservice instance.
///
/// `hosts[i]` lists, in ascending order, the nodes carrying an instance of type
/// `i`; instance `a` of type `i` sits on `hosts[i][a]`. This is the instance map
/// `L`; the binary node-by-type matrix `G` is derived from it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Deployment {
    hosts: Vec<Vec<NodeId>>,
}

impl Deployment {
    /// Raw constructor; host lists are sorted but not validated.
    pub fn new(mut hosts: Vec<Vec<NodeId>>) -> Self {
        for h in &mut hosts {
            h.sort_unstable();
        }
        Deployment { hosts }
    }

    /// Builds a deployment for `scenario` from the host lists of types
    /// `1..`, pinning the head to the access nodes.
    pub fn pinned(scenario: &Scenario, placed: Vec<Vec<NodeId>>) -> Self {
        let mut hosts = Vec::with_capacity(placed.len() + 1);
        hosts.push(scenario.access_nodes().to_vec());
        hosts.extend(placed);
        Deployment::new(hosts)
    }

    pub fn type_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn hosts(&self, t: TypeId) -> &[NodeId] {
        &self.hosts[t]
    }

    pub fn all_hosts(&self) -> &[Vec<NodeId>] {
        &self.hosts
    }

    pub fn is_placed(&self, node: NodeId, t: TypeId) -> bool {
        self.hosts[t].binary_search(&node).is_ok()
    }

    /// `G[p][i]`, sized `node_count x type_count`.
    pub fn placement_matrix(&self, node_count: usize) -> Vec<Vec<bool>> {
        let mut g = vec![vec![false; self.hosts.len()]; node_count];
        for (t, hosts) in self.hosts.iter().enumerate() {
            for &p in hosts {
                if p < node_count {
                    g[p][t] = true;
                }
            }
        }
        g
    }

    pub fn from_placement_matrix(g: &[Vec<bool>]) -> Self {
        let types = g.first().map_or(0, Vec::len);
        let hosts = (0..types)
            .map(|t| (0..g.len()).filter(|&p| g[p][t]).collect())
            .collect();
        Deployment { hosts }
    }

    /// Summed `(cpu, mem)` demand per node.
    pub fn node_usage(&self, scenario: &Scenario) -> Vec<(f64, f64)> {
        let mut usage = vec![(0.0, 0.0); scenario.topology().node_count()];
        for (t, hosts) in self.hosts.iter().enumerate() {
            let ty = &scenario.catalog()[t];
            for &p in hosts {
                usage[p].0 += ty.cpu_demand;
                usage[p].1 += ty.mem_demand;
            }
        }
        usage
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resource {
    Cpu,
    Memory,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InstanceCount { microservice: TypeId, expected: usize, actual: usize },
    DuplicateHost { microservice: TypeId, node: NodeId },
    NonComputeHost { microservice: TypeId, node: NodeId },
    HeadNotPinned { expected: Vec<NodeId>, actual: Vec<NodeId> },
    Capacity { node: NodeId, resource: Resource, demand: f64, capacity: f64, excess: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(Vec<Violation>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Feasibility::Feasible => &[],
            Feasibility::Infeasible(v) => v,
        }
    }
}

/// Checks instance counts, head pinning, host kinds and per-node CPU/memory.
/// Link bandwidth is a traffic property and is checked by the evaluator.
pub fn validate_deployment(d: &Deployment, s: &Scenario) -> Result<Feasibility, ModelError> {
    let n = s.topology().node_count();
    if d.type_count() != s.type_count() {
        return Err(ModelError::DimensionMismatch(format!(
            "deployment has {} types, scenario has {}",
            d.type_count(),
            s.type_count()
        )));
    }
    if let Some(&p) = d.hosts.iter().flatten().find(|&&p| p >= n) {
        return Err(ModelError::DimensionMismatch(format!("node {p} out of range ({n} nodes)")));
    }

    let mut violations = Vec::new();
    if d.hosts[HEAD] != s.access_nodes() {
        violations.push(Violation::HeadNotPinned {
            expected: s.access_nodes().to_vec(),
            actual: d.hosts[HEAD].clone(),
        });
    }
    for (t, hosts) in d.hosts.iter().enumerate() {
        let expected = s.catalog()[t].instance_count;
        if hosts.len() != expected {
            violations.push(Violation::InstanceCount { microservice: t, expected, actual: hosts.len() });
        }
        for w in hosts.windows(2) {
            if w[0] == w[1] {
                violations.push(Violation::DuplicateHost { microservice: t, node: w[0] });
            }
        }
        if t != HEAD {
            for &p in hosts {
                if s.topology().node(p).kind != NodeKind::Compute {
                    violations.push(Violation::NonComputeHost { microservice: t, node: p });
                }
            }
        }
    }
    for (p, (cpu, mem)) in d.node_usage(s).into_iter().enumerate() {
        let node = s.topology().node(p);
        for (resource, demand, capacity) in
            [(Resource::Cpu, cpu, node.cpu_capacity), (Resource::Memory, mem, node.mem_capacity)]
        {
            if demand > capacity + RESOURCE_EPS {
                violations.push(Violation::Capacity { node: p, resource, demand, capacity, excess: demand - capacity });
            }
        }
    }

    Ok(if violations.is_empty() { Feasibility::Feasible } else { Feasibility::Infeasible(violations) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Invocation, Link, MicroserviceType, NetworkTopology, Node, PayloadTable, ServiceDraft,
    };

    /// One access node, one routing node, `compute` compute nodes with 8 CPU,
    /// and `types` microservice types of 0.3 CPU each, chained in one service.
    fn chain_scenario(types: usize, compute: usize, instances: usize) -> Scenario {
        let mut nodes = vec![Node::access(0, vec![10.0]), Node::routing(1)];
        let mut links = vec![Link::new(0, 1, 100.0, 1e-5)];
        for c in 0..compute {
            nodes.push(Node::compute(2 + c, 8.0, 8000.0));
            links.push(Link::new(1, 2 + c, 100.0, 1e-5));
        }
        let topology = NetworkTopology::new(nodes, links).unwrap();
        let catalog = (1..=types)
            .map(|id| MicroserviceType { id, cpu_demand: 0.3, mem_demand: 100.0, instance_count: instances })
            .collect();
        let mut payloads = PayloadTable::new();
        let mut events = Vec::new();
        for t in 0..types {
            payloads.insert(t, t + 1, 10.0, 10.0);
            events.push(Invocation::request(t, t + 1));
        }
        for t in (0..types).rev() {
            events.push(Invocation::response(t + 1, t));
        }
        Scenario::assemble(topology, catalog, payloads, vec![ServiceDraft { weight: None, events }], 1.5, 0)
            .unwrap()
    }

    #[test]
    fn empty_placement_violates_every_count() {
        let s = chain_scenario(3, 2, 1);
        let d = Deployment::pinned(&s, vec![vec![]; 3]);
        let v = validate_deployment(&d, &s).unwrap();
        let counts = v
            .violations()
            .iter()
            .filter(|v| matches!(v, Violation::InstanceCount { actual: 0, .. }))
            .count();
        assert_eq!(counts, 3);
    }

    #[test]
    fn cpu_overload_reports_excess() {
        let s = chain_scenario(30, 1, 1);
        let d = Deployment::pinned(&s, vec![vec![2]; 30]);
        let v = validate_deployment(&d, &s).unwrap();
        let [Violation::Capacity { node, resource, excess, .. }] = v.violations() else {
            panic!("expected one capacity violation, got {v:?}");
        };
        assert_eq!((*node, *resource), (2, Resource::Cpu));
        assert!((excess - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_non_compute_duplicate_and_pinning() {
        let s = chain_scenario(1, 2, 2);
        let d = Deployment::new(vec![vec![1], vec![1, 1]]);
        let v = validate_deployment(&d, &s).unwrap();
        let vs = v.violations();
        assert!(vs.iter().any(|v| matches!(v, Violation::HeadNotPinned { .. })));
        assert!(vs.iter().any(|v| matches!(v, Violation::DuplicateHost { node: 1, .. })));
        assert!(vs.iter().any(|v| matches!(v, Violation::NonComputeHost { node: 1, .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let s = chain_scenario(2, 2, 1);
        let d = Deployment::pinned(&s, vec![vec![2]]);
        assert!(matches!(validate_deployment(&d, &s), Err(ModelError::DimensionMismatch(_))));
        let d = Deployment::pinned(&s, vec![vec![2], vec![99]]);
        assert!(matches!(validate_deployment(&d, &s), Err(ModelError::DimensionMismatch(_))));
    }

    #[test]
    fn placement_matrix_round_trip() {
        let s = chain_scenario(2, 3, 2);
        let d = Deployment::pinned(&s, vec![vec![2, 4], vec![3, 4]]);
        assert!(validate_deployment(&d, &s).unwrap().is_feasible());
        let g = d.placement_matrix(s.topology().node_count());
        assert!(g[0][0] && g[4][1] && g[4][2] && !g[2][2]);
        assert_eq!(Deployment::from_placement_matrix(&g), d);
    }
}
