//! Topology-aware genetic search over deployments.
//!
//! A chromosome holds one gene per real microservice type; a gene is a bit
//! vector over the compute nodes with exactly `instance_count` bits set. Every
//! operator keeps chromosomes resource-feasible, so link saturation is the
//! only constraint handled through the fitness penalty.
//!
//! Individual adaptation seeds a few "super individuals" from the greedy
//! placement under different service orders; the rest of generation 0 is
//! random.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Deployment, NodeId, Scenario, TypeId, HEAD, RESOURCE_EPS};
use crate::routing::RoutingTable;
use crate::traffic::{Evaluator, TrafficError, KB_TO_MEGABITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("no compute node can host an instance of type {microservice}")]
    ResourceExhausted { microservice: TypeId },
    #[error("no feasible chromosome found after {attempts} attempts")]
    InfeasibleScenario { attempts: usize },
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub max_iterations: usize,
    pub stagnation_limit: usize,
    pub super_individuals: usize,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 100,
            tournament_size: 5,
            crossover_prob: 0.5,
            mutation_prob: 0.05,
            max_iterations: 1000,
            stagnation_limit: 50,
            super_individuals: 4,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |m: &str| Err(OptimizeError::InvalidConfig(m.into()));
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return fail("population_size must be even and at least 2");
        }
        if self.tournament_size < 1 || self.tournament_size > self.population_size {
            return fail("tournament_size must be in 1..=population_size");
        }
        for p in [self.crossover_prob, self.mutation_prob] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        if self.max_iterations == 0 {
            return fail("max_iterations must be positive");
        }
        if self.stagnation_limit == 0 {
            return fail("stagnation_limit must be positive");
        }
        if self.super_individuals >= self.population_size {
            return fail("super_individuals must be below population_size");
        }
        Ok(())
    }
}

/// Bit-vector encoding of a deployment over the scenario's compute nodes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chromosome {
    /// `genes[t - 1][c]`: type `t` has an instance on compute node `c`.
    genes: Vec<Vec<bool>>,
}

impl Chromosome {
    /// `None` when a non-head instance sits outside the compute nodes.
    pub fn from_deployment(s: &Scenario, d: &Deployment) -> Option<Self> {
        let compute = s.compute_nodes();
        let mut genes = vec![vec![false; compute.len()]; s.type_count() - 1];
        for (t, gene) in genes.iter_mut().enumerate() {
            for &p in d.hosts(t + 1) {
                gene[compute.binary_search(&p).ok()?] = true;
            }
        }
        Some(Chromosome { genes })
    }

    pub fn to_deployment(&self, s: &Scenario) -> Deployment {
        let compute = s.compute_nodes();
        let placed = self
            .genes
            .iter()
            .map(|g| g.iter().enumerate().filter(|(_, &b)| b).map(|(c, _)| compute[c]).collect())
            .collect();
        Deployment::pinned(s, placed)
    }

    pub fn genes(&self) -> &[Vec<bool>] {
        &self.genes
    }

    fn usage(&self, s: &Scenario) -> Vec<(f64, f64)> {
        let mut usage = vec![(0.0, 0.0); s.compute_nodes().len()];
        for (t, gene) in self.genes.iter().enumerate() {
            let ty = &s.catalog()[t + 1];
            for (c, _) in gene.iter().enumerate().filter(|(_, &b)| b) {
                usage[c].0 += ty.cpu_demand;
                usage[c].1 += ty.mem_demand;
            }
        }
        usage
    }

    pub fn is_feasible(&self, s: &Scenario) -> bool {
        let counts_ok = self
            .genes
            .iter()
            .enumerate()
            .all(|(t, g)| g.iter().filter(|&&b| b).count() == s.catalog()[t + 1].instance_count);
        counts_ok && fits_capacity(s, &self.usage(s))
    }
}

fn capacity(s: &Scenario, c: usize) -> (f64, f64) {
    let node = s.topology().node(s.compute_nodes()[c]);
    (node.cpu_capacity, node.mem_capacity)
}

fn fits_capacity(s: &Scenario, usage: &[(f64, f64)]) -> bool {
    usage.iter().enumerate().all(|(c, &(cpu, mem))| {
        let (cap_cpu, cap_mem) = capacity(s, c);
        cpu <= cap_cpu + RESOURCE_EPS && mem <= cap_mem + RESOURCE_EPS
    })
}

fn can_add(s: &Scenario, usage: &[(f64, f64)], c: usize, t: TypeId) -> bool {
    let ty = &s.catalog()[t];
    let (cap_cpu, cap_mem) = capacity(s, c);
    usage[c].0 + ty.cpu_demand <= cap_cpu + RESOURCE_EPS && usage[c].1 + ty.mem_demand <= cap_mem + RESOURCE_EPS
}

/// One attempt at uniform placement: each type in order picks its instances
/// without replacement among compute nodes that still fit it.
pub(crate) fn sample_placement<R: Rng>(s: &Scenario, rng: &mut R) -> Option<Chromosome> {
    let compute = s.compute_nodes().len();
    let mut usage = vec![(0.0, 0.0); compute];
    let mut genes = Vec::with_capacity(s.type_count() - 1);
    for t in 1..s.type_count() {
        let count = s.catalog()[t].instance_count;
        let candidates: Vec<usize> = (0..compute).filter(|&c| can_add(s, &usage, c, t)).collect();
        if candidates.len() < count {
            return None;
        }
        let mut gene = vec![false; compute];
        for i in index::sample(rng, candidates.len(), count) {
            let c = candidates[i];
            gene[c] = true;
            usage[c].0 += s.catalog()[t].cpu_demand;
            usage[c].1 += s.catalog()[t].mem_demand;
        }
        genes.push(gene);
    }
    Some(Chromosome { genes })
}

pub(crate) fn random_chromosome<R: Rng>(
    s: &Scenario,
    rng: &mut R,
    attempts: usize,
) -> Result<Chromosome, OptimizeError> {
    (0..attempts)
        .find_map(|_| sample_placement(s, rng))
        .ok_or(OptimizeError::InfeasibleScenario { attempts })
}

/// Idle-network round trip between a front-end host `from` and candidate `to`
/// for one request/response of the given sizes.
fn idle_round_trip(routing: &RoutingTable, from: NodeId, to: NodeId, request_kb: f64, response_kb: f64) -> f64 {
    if from == to {
        return 0.0;
    }
    routing.propagation(from, to)
        + request_kb * KB_TO_MEGABITS / routing.nominal_bottleneck(from, to)
        + routing.propagation(to, from)
        + response_kb * KB_TO_MEGABITS / routing.nominal_bottleneck(to, from)
}

/// Greedy placement walking services in `service_order`.
///
/// For every service, each microservice not yet placed goes to the compute
/// nodes with the lowest mean idle delay to the hosts of its front end (the
/// caller of its first request; access nodes for the first microservice),
/// subject to remaining capacity. Types no service invokes are placed last
/// near the access nodes.
pub fn greedy_seed(s: &Scenario, routing: &RoutingTable, service_order: &[usize]) -> Result<Deployment, OptimizeError> {
    let compute = s.compute_nodes();
    let mut usage = vec![(0.0, 0.0); compute.len()];
    let mut placed: Vec<Option<Vec<NodeId>>> = vec![None; s.type_count()];
    placed[HEAD] = Some(s.access_nodes().to_vec());

    let mut place = |t: TypeId, front: TypeId, placed: &mut Vec<Option<Vec<NodeId>>>| -> Result<(), OptimizeError> {
        let targets = placed[front].clone().expect("front end placed before its callees");
        let payload = s.payloads().get(front, t);
        let (req, res) = payload.map_or((0.0, 0.0), |p| (p.request_kb, p.response_kb));
        let mut ranked: Vec<(f64, usize)> = (0..compute.len())
            .map(|c| {
                let total: f64 = targets.iter().map(|&g| idle_round_trip(routing, g, compute[c], req, res)).sum();
                (total / targets.len() as f64, c)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let count = s.catalog()[t].instance_count;
        let mut hosts = Vec::with_capacity(count);
        for (_, c) in ranked {
            if hosts.len() == count {
                break;
            }
            if can_add(s, &usage, c, t) {
                usage[c].0 += s.catalog()[t].cpu_demand;
                usage[c].1 += s.catalog()[t].mem_demand;
                hosts.push(compute[c]);
            }
        }
        if hosts.len() < count {
            return Err(OptimizeError::ResourceExhausted { microservice: t });
        }
        placed[t] = Some(hosts);
        Ok(())
    };

    for &k in service_order {
        let svc = &s.services()[k];
        for t in svc.invoked_types() {
            if placed[t].is_none() {
                let front = svc.front_end(t).expect("invoked types have a caller");
                place(t, front, &mut placed)?;
            }
        }
    }
    for t in 1..s.type_count() {
        if placed[t].is_none() {
            place(t, HEAD, &mut placed)?;
        }
    }
    Ok(Deployment::new(placed.into_iter().map(|h| h.expect("every type placed")).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxIterations,
    Stagnation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    /// Zero-based generation index.
    pub iteration: usize,
    /// Best objective seen so far (elitist).
    pub best_t: f64,
    /// Best objective within this generation.
    pub generation_best_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationTrace {
    pub history: Vec<IterationRecord>,
    pub best: Deployment,
    pub best_t: f64,
    /// Generations evaluated.
    pub iterations: usize,
    /// Generation in which `best` was first found.
    pub best_found_at: usize,
    pub termination: Termination,
}

#[derive(Clone)]
struct Individual {
    chromosome: Chromosome,
    usage: Vec<(f64, f64)>,
}

impl Individual {
    fn new(s: &Scenario, chromosome: Chromosome) -> Self {
        let usage = chromosome.usage(s);
        Individual { chromosome, usage }
    }

    /// Replaces gene `g` with `incoming`, applying the resource delta.
    fn swap_in(&mut self, s: &Scenario, g: usize, incoming: &[bool]) {
        let ty = &s.catalog()[g + 1];
        for c in 0..incoming.len() {
            let delta = incoming[c] as i32 - self.chromosome.genes[g][c] as i32;
            if delta != 0 {
                self.usage[c].0 += delta as f64 * ty.cpu_demand;
                self.usage[c].1 += delta as f64 * ty.mem_demand;
            }
        }
        self.chromosome.genes[g].copy_from_slice(incoming);
    }

    fn feasible(&self, s: &Scenario) -> bool {
        fits_capacity(s, &self.usage)
    }
}

fn crossover<R: Rng>(s: &Scenario, a: &Chromosome, b: &Chromosome, prob: f64, rng: &mut R) -> (Individual, Individual) {
    let mut x = Individual::new(s, a.clone());
    let mut y = Individual::new(s, b.clone());
    for g in 0..a.genes.len() {
        if !rng.gen_bool(prob) || x.chromosome.genes[g] == y.chromosome.genes[g] {
            continue;
        }
        let gx = x.chromosome.genes[g].clone();
        let gy = y.chromosome.genes[g].clone();
        x.swap_in(s, g, &gy);
        y.swap_in(s, g, &gx);
        if !(x.feasible(s) && y.feasible(s)) {
            x.swap_in(s, g, &gx);
            y.swap_in(s, g, &gy);
        }
    }
    (x, y)
}

/// Moves one instance of each selected gene to a random node that fits it.
fn mutate<R: Rng>(s: &Scenario, ind: &mut Individual, prob: f64, rng: &mut R) {
    for g in 0..ind.chromosome.genes.len() {
        if !rng.gen_bool(prob) {
            continue;
        }
        let t = g + 1;
        let gene = &ind.chromosome.genes[g];
        let ones: Vec<usize> = (0..gene.len()).filter(|&c| gene[c]).collect();
        let zeros: Vec<usize> = (0..gene.len()).filter(|&c| !gene[c] && can_add(s, &ind.usage, c, t)).collect();
        let (Some(&from), Some(&to)) = (ones.choose(rng), zeros.choose(rng)) else {
            continue;
        };
        let ty = &s.catalog()[t];
        ind.chromosome.genes[g][from] = false;
        ind.chromosome.genes[g][to] = true;
        ind.usage[from].0 -= ty.cpu_demand;
        ind.usage[from].1 -= ty.mem_demand;
        ind.usage[to].0 += ty.cpu_demand;
        ind.usage[to].1 += ty.mem_demand;
    }
}

fn tournament<R: Rng>(fitness: &[f64], pop: &[Chromosome], size: usize, rng: &mut R) -> usize {
    index::sample(rng, pop.len(), size)
        .into_iter()
        .min_by(|&i, &j| fitness[i].total_cmp(&fitness[j]).then_with(|| pop[i].cmp(&pop[j])))
        .expect("tournament size is at least 1")
}

const RANDOM_INIT_ATTEMPTS: usize = 1000;

/// Runs the generational loop with an arbitrary objective (lower is better).
///
/// `seeds` become the first members of generation 0; the remainder is random.
/// Objective values are computed in parallel but every random draw comes from
/// one stream seeded by `config.rng_seed`, so the trace does not depend on the
/// thread count.
pub fn genetic_search<F>(
    s: &Scenario,
    config: &GaConfig,
    seeds: Vec<Deployment>,
    rng: &mut ChaCha8Rng,
    objective: F,
) -> Result<OptimizationTrace, OptimizeError>
where
    F: Fn(&Deployment) -> f64 + Sync,
{
    config.validate()?;
    let n = config.population_size;
    let mut population: Vec<Chromosome> = seeds
        .iter()
        .filter_map(|d| Chromosome::from_deployment(s, d))
        .filter(|c| c.is_feasible(s))
        .take(n)
        .collect();
    while population.len() < n {
        population.push(random_chromosome(s, rng, RANDOM_INIT_ATTEMPTS)?);
    }

    let mut cache: HashMap<Chromosome, f64> = HashMap::new();
    let mut best: Option<(f64, Chromosome)> = None;
    let mut best_found_at = 0;
    let mut stagnant = 0;
    let mut history = Vec::new();
    let mut termination = Termination::MaxIterations;

    for iteration in 0..config.max_iterations {
        let mut fresh: Vec<&Chromosome> = population.iter().filter(|c| !cache.contains_key(*c)).collect();
        fresh.sort_unstable();
        fresh.dedup();
        let scored: Vec<f64> = fresh.par_iter().map(|c| objective(&c.to_deployment(s))).collect();
        let mut next_cache: HashMap<Chromosome, f64> = fresh.into_iter().cloned().zip(scored).collect();
        for c in &population {
            if let Some(v) = cache.get(c) {
                next_cache.insert(c.clone(), *v);
            }
        }
        cache = next_cache;
        let fitness: Vec<f64> = population.iter().map(|c| cache[c]).collect();

        let gen_best = (0..n)
            .min_by(|&i, &j| fitness[i].total_cmp(&fitness[j]).then_with(|| population[i].cmp(&population[j])))
            .expect("population is non-empty");
        let candidate = fitness[gen_best];
        let improved = match &best {
            None => true,
            Some((t, _)) => candidate < *t - 1e-12 * t.abs(),
        };
        if improved {
            best = Some((candidate, population[gen_best].clone()));
            best_found_at = iteration;
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        let best_t = best.as_ref().map(|b| b.0).unwrap();
        history.push(IterationRecord { iteration, best_t, generation_best_t: candidate });

        if stagnant >= config.stagnation_limit {
            termination = Termination::Stagnation;
            break;
        }
        if iteration + 1 == config.max_iterations {
            break;
        }

        let mut offspring = Vec::with_capacity(n);
        while offspring.len() < n {
            let a = tournament(&fitness, &population, config.tournament_size, rng);
            let b = tournament(&fitness, &population, config.tournament_size, rng);
            let (mut x, mut y) = crossover(s, &population[a], &population[b], config.crossover_prob, rng);
            mutate(s, &mut x, config.mutation_prob, rng);
            mutate(s, &mut y, config.mutation_prob, rng);
            offspring.push(x.chromosome);
            offspring.push(y.chromosome);
        }
        population = offspring;
    }

    let (best_t, best) = best.expect("at least one generation evaluated");
    Ok(OptimizationTrace {
        iterations: history.len(),
        history,
        best: best.to_deployment(s),
        best_t,
        best_found_at,
        termination,
    })
}

/// Greedy seeds under distinct service orders; the first uses the canonical
/// order. Orders whose greedy pass fails, and duplicate placements, are
/// dropped.
pub fn super_individuals(s: &Scenario, routing: &RoutingTable, count: usize, rng: &mut ChaCha8Rng) -> Vec<Deployment> {
    let k = s.services().len();
    let mut orders: Vec<Vec<usize>> = Vec::new();
    if count > 0 {
        orders.push((0..k).collect());
    }
    let mut attempts = 0;
    while orders.len() < count && attempts < count * 20 {
        attempts += 1;
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(rng);
        if !orders.contains(&order) {
            orders.push(order);
        }
    }
    let mut seeds: Vec<Deployment> = Vec::new();
    for order in orders {
        if let Ok(d) = greedy_seed(s, routing, &order) {
            if !seeds.contains(&d) {
                seeds.push(d);
            }
        }
    }
    seeds
}

fn run(s: &Scenario, routing: &RoutingTable, config: &GaConfig, super_count: usize) -> Result<OptimizationTrace, OptimizeError> {
    config.validate()?;
    let evaluator = Evaluator::new(s, routing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let seeds = super_individuals(s, routing, super_count, &mut rng);
    genetic_search(s, config, seeds, &mut rng, |d| evaluator.score(d).total)
}

/// TAIA-MD: topology-aware fitness with greedy-seeded super individuals.
pub fn optimize(s: &Scenario, routing: &RoutingTable, config: &GaConfig) -> Result<OptimizationTrace, OptimizeError> {
    run(s, routing, config, config.super_individuals)
}

/// The same search with individual adaptation disabled.
pub fn optimize_without_ia(
    s: &Scenario,
    routing: &RoutingTable,
    config: &GaConfig,
) -> Result<OptimizationTrace, OptimizeError> {
    run(s, routing, config, 0)
}
