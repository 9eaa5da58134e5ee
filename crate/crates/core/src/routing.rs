//! Static shortest-hop routing and link forwarding load.
//!
//! Every ordered node pair gets one path: minimum hop count, ties broken by
//! the lexicographically smallest node-id sequence. The table is a pure
//! function of the topology.

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{NetworkTopology, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("topology is disconnected: no path from {from} to {to}")]
    DisconnectedTopology { from: NodeId, to: NodeId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTable {
    n: usize,
    /// Node sequence per ordered pair, `p * n + q`, including both endpoints.
    nodes: Vec<Vec<NodeId>>,
    /// Directed link ids per ordered pair.
    hops: Vec<Vec<usize>>,
    /// Summed propagation delay per ordered pair.
    propagation: Vec<f64>,
    /// Minimum nominal bandwidth along the path (`+inf` for `p == q`).
    nominal_bottleneck: Vec<f64>,
}

impl RoutingTable {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn path_nodes(&self, p: NodeId, q: NodeId) -> &[NodeId] {
        &self.nodes[p * self.n + q]
    }

    /// Directed link ids of the hops of `U_{p,q}`, in travel order.
    pub fn path_links(&self, p: NodeId, q: NodeId) -> &[usize] {
        &self.hops[p * self.n + q]
    }

    pub fn hop_count(&self, p: NodeId, q: NodeId) -> usize {
        self.hops[p * self.n + q].len()
    }

    /// Summed propagation delay along `U_{p,q}`, seconds.
    pub fn propagation(&self, p: NodeId, q: NodeId) -> f64 {
        self.propagation[p * self.n + q]
    }

    /// Minimum link bandwidth along `U_{p,q}` on an idle network.
    pub fn nominal_bottleneck(&self, p: NodeId, q: NodeId) -> f64 {
        self.nominal_bottleneck[p * self.n + q]
    }

    /// `I^{p,q}_{x,y}`: whether hop `x -> y` lies on the path from `p` to `q`.
    pub fn contains_hop(&self, p: NodeId, q: NodeId, x: NodeId, y: NodeId) -> bool {
        self.path_nodes(p, q).windows(2).any(|w| w[0] == x && w[1] == y)
    }
}

fn bfs_distances(topology: &NetworkTopology, source: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; topology.node_count()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have distances");
        for &v in topology.neighbours(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn build_routing(topology: &NetworkTopology) -> Result<RoutingTable, RoutingError> {
    let n = topology.node_count();
    // dist[q][v]: hops from v to q (the graph is undirected).
    let mut dist = Vec::with_capacity(n);
    for q in 0..n {
        let d = bfs_distances(topology, q);
        if let Some(p) = d.iter().position(Option::is_none) {
            return Err(RoutingError::DisconnectedTopology { from: q, to: p });
        }
        dist.push(d.into_iter().map(|x| x.unwrap()).collect::<Vec<_>>());
    }

    let links = topology.directed_links();
    let mut nodes = Vec::with_capacity(n * n);
    let mut hops = Vec::with_capacity(n * n);
    let mut propagation = Vec::with_capacity(n * n);
    let mut nominal_bottleneck = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            // Walking greedily through the smallest neighbour that is one hop
            // closer yields the lexicographically smallest shortest path.
            let mut path = vec![p];
            let mut path_hops = Vec::with_capacity(dist[q][p]);
            let mut cur = p;
            while cur != q {
                let next = *topology
                    .neighbours(cur)
                    .iter()
                    .find(|&&v| dist[q][v] + 1 == dist[q][cur])
                    .expect("a closer neighbour exists on a connected graph");
                path_hops.push(topology.directed_link(cur, next).expect("neighbours are linked"));
                path.push(next);
                cur = next;
            }
            propagation.push(path_hops.iter().map(|&h| links[h].propagation_delay).sum());
            nominal_bottleneck.push(path_hops.iter().map(|&h| links[h].bandwidth).fold(f64::INFINITY, f64::min));
            nodes.push(path);
            hops.push(path_hops);
        }
    }
    Ok(RoutingTable { n, nodes, hops, propagation, nominal_bottleneck })
}

/// Link forwarding load of every directed link.
#[derive(Clone, Debug, PartialEq)]
pub struct LflReport {
    /// `O_{x,y}` indexed by directed link id.
    pub directed: Vec<u64>,
    /// Average load per undirected link (both directions summed).
    pub average: f64,
}

impl LflReport {
    /// Combined load of undirected link `l`: `O_{a,b} + O_{b,a}`.
    pub fn link_load(&self, l: usize) -> u64 {
        self.directed[2 * l] + self.directed[2 * l + 1]
    }
}

/// Counts the ordered pairs routed over each directed link.
///
/// The average divides the summed directed loads by the number of undirected
/// links, i.e. it is the mean per-link load. On a 7-node ring every link
/// carries 12 ordered pairs (6 in each direction), and the average is 12.
pub fn lfl(topology: &NetworkTopology, table: &RoutingTable) -> LflReport {
    let mut directed = vec![0u64; topology.directed_links().len()];
    for hops in &table.hops {
        for &h in hops {
            directed[h] += 1;
        }
    }
    let links = topology.links().len();
    let average = if links == 0 { 0.0 } else { directed.iter().sum::<u64>() as f64 / links as f64 };
    LflReport { directed, average }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Link, Node};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn routing_only(n: usize, edges: &[(usize, usize)]) -> NetworkTopology {
        NetworkTopology::new(
            (0..n).map(Node::routing).collect(),
            edges.iter().map(|&(a, b)| Link::new(a, b, 100.0, 1e-5)).collect(),
        )
        .unwrap()
    }

    fn random_connected(n: usize, extra: usize, seed: u64) -> NetworkTopology {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.gen_range(0..v), v));
        }
        for _ in 0..extra {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
                edges.push((a, b));
            }
        }
        routing_only(n, &edges)
    }

    #[test]
    fn single_edge() {
        let t = routing_only(2, &[(0, 1)]);
        let r = build_routing(&t).unwrap();
        assert_eq!(r.path_nodes(0, 1), &[0, 1]);
        assert_eq!(r.path_nodes(1, 0), &[1, 0]);
        assert!(r.path_links(0, 0).is_empty());
        assert_eq!(r.propagation(0, 0), 0.0);
        assert_eq!(r.nominal_bottleneck(0, 0), f64::INFINITY);
    }

    #[test]
    fn ring_tie_break_is_lexicographic() {
        let t = routing_only(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let r = build_routing(&t).unwrap();
        assert_eq!(r.path_nodes(0, 2), &[0, 1, 2]);
        assert_eq!(r.path_nodes(2, 0), &[2, 1, 0]);
        assert_eq!(r.path_nodes(1, 3), &[1, 0, 3]);
        assert_eq!(r.path_nodes(3, 1), &[3, 0, 1]);
    }

    #[test]
    fn line_loads() {
        let t = routing_only(3, &[(0, 1), (1, 2)]);
        let r = build_routing(&t).unwrap();
        let report = lfl(&t, &r);
        assert_eq!(report.directed[t.directed_link(0, 1).unwrap()], 2);
        assert_eq!(report.directed[t.directed_link(1, 0).unwrap()], 2);
        assert!(r.contains_hop(0, 2, 1, 2));
        assert!(!r.contains_hop(2, 0, 1, 2));
    }

    #[test]
    fn star_of_thirteen_has_uniform_directed_load() {
        let edges: Vec<_> = (1..13).map(|v| (0, v)).collect();
        let t = routing_only(13, &edges);
        let report = lfl(&t, &build_routing(&t).unwrap());
        assert!(report.directed.iter().all(|&o| o == 12));
    }

    #[test]
    fn disconnected_names_pair() {
        let t = routing_only(3, &[(0, 1)]);
        assert_eq!(build_routing(&t).unwrap_err(), RoutingError::DisconnectedTopology { from: 0, to: 2 });
    }

    #[test]
    fn brute_force_recount_on_random_topology() {
        let t = random_connected(10, 6, 99);
        let r = build_routing(&t).unwrap();
        let report = lfl(&t, &r);
        for link in t.directed_links() {
            let mut count = 0;
            for p in 0..10 {
                for q in 0..10 {
                    let nodes = r.path_nodes(p, q);
                    for i in 1..nodes.len() {
                        if nodes[i - 1] == link.from && nodes[i] == link.to {
                            count += 1;
                        }
                    }
                }
            }
            assert_eq!(report.directed[link.id], count);
        }
    }

    /// Smallest shortest path found by enumerating every simple path.
    fn enumerate_best(t: &NetworkTopology, p: usize, q: usize) -> Vec<usize> {
        fn dfs(t: &NetworkTopology, cur: usize, q: usize, path: &mut Vec<usize>, best: &mut Option<Vec<usize>>) {
            if cur == q {
                let better = match best {
                    None => true,
                    Some(b) => (path.len(), &path[..]) < (b.len(), &b[..]),
                };
                if better {
                    *best = Some(path.clone());
                }
                return;
            }
            for &v in t.neighbours(cur) {
                if !path.contains(&v) {
                    path.push(v);
                    dfs(t, v, q, path, best);
                    path.pop();
                }
            }
        }
        let mut best = None;
        dfs(t, p, q, &mut vec![p], &mut best);
        best.unwrap()
    }

    proptest! {
        #[test]
        fn paths_are_optimal_simple_and_conserve_hops(seed in 0u64..500, n in 2usize..9, extra in 0usize..6) {
            let t = random_connected(n, extra, seed);
            let r = build_routing(&t).unwrap();
            prop_assert_eq!(&r, &build_routing(&t).unwrap());
            let mut total_len = 0u64;
            for p in 0..n {
                let bfs = bfs_distances(&t, p);
                for q in 0..n {
                    let nodes = r.path_nodes(p, q);
                    prop_assert_eq!(nodes.len() - 1, bfs[q].unwrap());
                    prop_assert_eq!(nodes, &enumerate_best(&t, p, q)[..]);
                    let mut sorted = nodes.to_vec();
                    sorted.sort_unstable();
                    sorted.dedup();
                    prop_assert_eq!(sorted.len(), nodes.len());
                    total_len += r.hop_count(p, q) as u64;
                }
            }
            let report = lfl(&t, &r);
            prop_assert_eq!(report.directed.iter().sum::<u64>(), total_len);
        }
    }
}
