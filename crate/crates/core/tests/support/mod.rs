//! Reference computations written from the model equations, sharing no code
//! with the library beyond reading scenario data.

#![allow(dead_code)]

use std::collections::VecDeque;

use edgeplan::model::{Deployment, NodeKind, Scenario};

/// Shortest-hop routes with lexicographic tie-breaking, found by
/// enumerating every shortest path in sorted-neighbour order.
pub struct Routes {
    n: usize,
    paths: Vec<Vec<usize>>,
}

impl Routes {
    pub fn new(s: &Scenario) -> Self {
        let topo = s.topology();
        let n = topo.node_count();
        let mut adj = vec![Vec::new(); n];
        for l in topo.links() {
            adj[l.a].push(l.b);
            adj[l.b].push(l.a);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        let mut paths = Vec::with_capacity(n * n);
        for p in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[p] = 0;
            let mut queue = VecDeque::from([p]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for q in 0..n {
                let mut all = Vec::new();
                enumerate(&adj, p, q, dist[q], &mut vec![p], &mut all);
                all.sort();
                paths.push(all.into_iter().next().expect("connected"));
            }
        }
        Routes { n, paths }
    }

    pub fn path(&self, p: usize, q: usize) -> &[usize] {
        &self.paths[p * self.n + q]
    }

    /// `I^{p,q}_{x,y}`.
    pub fn uses(&self, p: usize, q: usize, x: usize, y: usize) -> bool {
        self.path(p, q).windows(2).any(|w| w == [x, y])
    }
}

fn enumerate(adj: &[Vec<usize>], cur: usize, q: usize, left: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur == q {
        out.push(path.clone());
        return;
    }
    if left == 0 {
        return;
    }
    for &v in &adj[cur] {
        if !path.contains(&v) {
            path.push(v);
            enumerate(adj, v, q, left - 1, path, out);
            path.pop();
        }
    }
}

pub struct Reference {
    pub total: f64,
    pub congested: bool,
    /// Link traffic keyed by directed `(x, y)`, dense `x * n + y`.
    pub link_traffic: Vec<f64>,
}

/// Weighted delay of `d` on `s`, computed with node-by-instance placement
/// indicators and dense matrices.
pub fn reference_delay(s: &Scenario, d: &Deployment) -> Reference {
    let topo = s.topology();
    let n = topo.node_count();
    let types = s.type_count();
    let routes = Routes::new(s);
    let kb = 8.0 / 1000.0;

    let mut bandwidth = vec![0.0; n * n];
    let mut delay = vec![0.0; n * n];
    for l in topo.links() {
        for (x, y) in [(l.a, l.b), (l.b, l.a)] {
            bandwidth[x * n + y] = l.bandwidth;
            delay[x * n + y] = l.propagation_delay;
        }
    }
    let access: Vec<usize> = (0..n).filter(|&p| topo.node(p).kind == NodeKind::Access).collect();

    // Instances as (type, node).
    let instances: Vec<(usize, usize)> = (0..types).flat_map(|i| d.hosts(i).iter().map(move |&p| (i, p))).collect();
    let m = instances.len();

    // P^k per instance.
    let probability = |k: usize, inst: usize| -> f64 {
        let (i, p) = instances[inst];
        if i == 0 {
            let lambda: f64 = access.iter().map(|&a| topo.node(a).arrival_rates[k]).sum();
            topo.node(p).arrival_rates[k] / lambda
        } else {
            1.0 / d.hosts(i).len() as f64
        }
    };

    // Instance-level request and response frequencies per service.
    let services = s.services();
    let mut freq_req = vec![vec![0.0; m * m]; services.len()];
    let mut freq_res = vec![vec![0.0; m * m]; services.len()];
    for (k, svc) in services.iter().enumerate() {
        let f = svc.request_matrix();
        for x in 0..m {
            for y in 0..m {
                let (i, j) = (instances[x].0, instances[y].0);
                let v = f[i][j] as f64 * probability(k, x) * probability(k, y);
                freq_req[k][x * m + y] = v;
                // A response from y back to x mirrors the request x -> y.
                freq_res[k][y * m + x] = v;
            }
        }
    }

    // S_{p,q}.
    let mut direct = vec![0.0; n * n];
    for (k, _) in services.iter().enumerate() {
        let lambda: f64 = access.iter().map(|&a| topo.node(a).arrival_rates[k]).sum();
        for x in 0..m {
            for y in 0..m {
                let ((i, p), (j, q)) = (instances[x], instances[y]);
                let req = s.payloads().get(i, j).map_or(0.0, |pl| pl.request_kb);
                let res = s.payloads().get(j, i).map_or(0.0, |pl| pl.response_kb);
                direct[p * n + q] += lambda * (freq_req[k][x * m + y] * req + freq_res[k][x * m + y] * res) * kb;
            }
        }
    }

    // S~_{x,y}.
    let mut link_traffic = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if bandwidth[x * n + y] == 0.0 {
                continue;
            }
            for p in 0..n {
                for q in 0..n {
                    if routes.uses(p, q, x, y) {
                        link_traffic[x * n + y] += direct[p * n + q];
                    }
                }
            }
        }
    }

    let mut congested = false;
    let mut overload = 0.0;
    for e in 0..n * n {
        if bandwidth[e] > 0.0 {
            if link_traffic[e] >= bandwidth[e] {
                congested = true;
            }
            overload += (link_traffic[e] / bandwidth[e] - 1.0).max(0.0);
        }
    }
    if congested {
        return Reference { total: 1e6 + overload, congested, link_traffic };
    }

    let z_min = |p: usize, q: usize| -> f64 {
        routes
            .path(p, q)
            .windows(2)
            .map(|w| bandwidth[w[0] * n + w[1]] - link_traffic[w[0] * n + w[1]])
            .fold(f64::INFINITY, f64::min)
    };
    let v = |p: usize, q: usize| -> f64 { routes.path(p, q).windows(2).map(|w| delay[w[0] * n + w[1]]).sum() };

    let mut total = 0.0;
    for (k, svc) in services.iter().enumerate() {
        let mut t_k = 0.0;
        for x in 0..m {
            for y in 0..m {
                let ((i, p), (j, q)) = (instances[x], instances[y]);
                if p == q {
                    continue;
                }
                let req = s.payloads().get(i, j).map_or(0.0, |pl| pl.request_kb);
                let res = s.payloads().get(j, i).map_or(0.0, |pl| pl.response_kb);
                t_k += freq_req[k][x * m + y] * (v(p, q) + req * kb / z_min(p, q));
                t_k += freq_res[k][x * m + y] * (v(p, q) + res * kb / z_min(p, q));
            }
        }
        total += svc.weight() * t_k;
    }
    Reference { total, congested, link_traffic }
}
