use super::HarnessError;
use crate::model::{Deployment, NodeId, Scenario, RESOURCE_EPS};
use crate::routing::RoutingTable;
use crate::traffic::{evaluate, Evaluator};

pub const DEFAULT_SIZE_GUARD: u128 = 10_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of placements ignoring capacity: the product over types of
/// `C(compute nodes, instances)`. Saturates at `u128::MAX`.
pub fn search_space(s: &Scenario) -> u128 {
    let n = s.compute_nodes().len();
    s.catalog()[1..]
        .iter()
        .fold(1u128, |acc, t| acc.saturating_mul(binomial(n, t.instance_count)))
}

struct Search<'a> {
    s: &'a Scenario,
    evaluator: Evaluator<'a>,
    usage: Vec<(f64, f64)>,
    placed: Vec<Vec<NodeId>>,
    best: Option<(f64, Vec<Vec<NodeId>>)>,
}

impl Search<'_> {
    fn fits(&self, c: usize, t: usize) -> bool {
        let node = self.s.topology().node(self.s.compute_nodes()[c]);
        let ty = &self.s.catalog()[t];
        self.usage[c].0 + ty.cpu_demand <= node.cpu_capacity + RESOURCE_EPS
            && self.usage[c].1 + ty.mem_demand <= node.mem_capacity + RESOURCE_EPS
    }

    fn adjust(&mut self, c: usize, t: usize, sign: f64) {
        let ty = &self.s.catalog()[t];
        self.usage[c].0 += sign * ty.cpu_demand;
        self.usage[c].1 += sign * ty.mem_demand;
    }

    /// Places type `t` (1-based), choosing compute indices in increasing order
    /// from `from`, with `chosen` picked so far.
    fn visit(&mut self, t: usize, from: usize, chosen: &mut Vec<usize>) {
        if t == self.s.type_count() {
            let d = Deployment::pinned(self.s, self.placed.clone());
            let score = self.evaluator.score(&d).total;
            if self.best.as_ref().is_none_or(|(b, _)| score < *b) {
                self.best = Some((score, self.placed.clone()));
            }
            return;
        }
        let need = self.s.catalog()[t].instance_count;
        if chosen.len() == need {
            let compute = self.s.compute_nodes();
            self.placed.push(chosen.iter().map(|&c| compute[c]).collect());
            self.visit(t + 1, 0, &mut Vec::new());
            self.placed.pop();
            return;
        }
        let n = self.usage.len();
        for c in from..n {
            if n - c < need - chosen.len() {
                break;
            }
            if !self.fits(c, t) {
                continue;
            }
            self.adjust(c, t, 1.0);
            chosen.push(c);
            self.visit(t, c + 1, chosen);
            chosen.pop();
            self.adjust(c, t, -1.0);
        }
    }
}

/// Exhaustive minimum of the weighted delay over every feasible deployment.
/// Placements are visited in lexicographic order, so among ties the first
/// one is returned.
pub fn brute_force_optimum(
    s: &Scenario,
    routing: &RoutingTable,
    size_guard: u128,
) -> Result<(Deployment, f64), HarnessError> {
    let size = search_space(s);
    if size > size_guard {
        return Err(HarnessError::SpaceTooLarge { size });
    }
    let mut search = Search {
        s,
        evaluator: Evaluator::new(s, routing)?,
        usage: vec![(0.0, 0.0); s.compute_nodes().len()],
        placed: Vec::with_capacity(s.type_count()),
        best: None,
    };
    search.visit(1, 0, &mut Vec::new());
    let (_, placed) = search.best.ok_or(HarnessError::NoFeasibleDeployment)?;
    let d = Deployment::pinned(s, placed);
    let t = evaluate(s, &d, routing)?.total;
    Ok((d, t))
}
