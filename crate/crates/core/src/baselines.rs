//! Comparison schemes: random placement, the chain greedy, and a genetic
//! search whose fitness ignores the network topology.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Deployment, Scenario, HEAD};
use crate::optimizer::{genetic_search, greedy_seed, sample_placement, GaConfig, OptimizationTrace, OptimizeError};
use crate::routing::RoutingTable;
use crate::traffic::{TrafficError, KB_TO_MEGABITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("flat network model needs positive delay and bandwidth")]
    InvalidFlatModel,
    #[error("random placement found no feasible deployment in {attempts} attempts")]
    ResourceExhausted { attempts: usize },
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

pub const RANDOM_ATTEMPTS: usize = 100;

/// Uniform placement over nodes with remaining capacity.
pub fn random_deploy(s: &Scenario, seed: u64) -> Result<Deployment, BaselineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..RANDOM_ATTEMPTS)
        .find_map(|_| sample_placement(s, &mut rng))
        .map(|c| c.to_deployment(s))
        .ok_or(BaselineError::ResourceExhausted { attempts: RANDOM_ATTEMPTS })
}

/// The greedy placement with services taken in ascending order.
pub fn greedy_baseline(s: &Scenario, routing: &RoutingTable) -> Result<Deployment, BaselineError> {
    let order: Vec<usize> = (0..s.services().len()).collect();
    Ok(greedy_seed(s, routing, &order)?)
}

/// Every distinct node pair is one hop apart with the same delay and
/// dedicated bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatNetworkModel {
    pub propagation_delay: f64,
    pub bandwidth: f64,
}

impl Default for FlatNetworkModel {
    fn default() -> Self {
        FlatNetworkModel { propagation_delay: 1e-5, bandwidth: 100.0 }
    }
}

impl FlatNetworkModel {
    /// Mean link delay and bandwidth of the scenario.
    pub fn nominal(s: &Scenario) -> Self {
        let links = s.topology().links();
        if links.is_empty() {
            return FlatNetworkModel::default();
        }
        let n = links.len() as f64;
        FlatNetworkModel {
            propagation_delay: links.iter().map(|l| l.propagation_delay).sum::<f64>() / n,
            bandwidth: links.iter().map(|l| l.bandwidth).sum::<f64>() / n,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.propagation_delay > 0.0 && self.bandwidth > 0.0 {
            Ok(())
        } else {
            Err(BaselineError::InvalidFlatModel)
        }
    }

    /// Weighted delay of `d` when every cross-node call costs one flat hop
    /// each way.
    pub fn delay(&self, s: &Scenario, d: &Deployment) -> f64 {
        let mut total = 0.0;
        for (k, svc) in s.services().iter().enumerate() {
            let lambda = s.aggregate_arrival(k);
            let mut t_k = 0.0;
            for call in svc.calls() {
                let callers = d.hosts(call.caller);
                let callees = d.hosts(call.callee);
                let leg = 2.0 * self.propagation_delay
                    + (call.request_kb + call.response_kb) * KB_TO_MEGABITS / self.bandwidth;
                for &p in callers {
                    let pa = if call.caller == HEAD {
                        s.topology().node(p).arrival_rates[k] / lambda
                    } else {
                        1.0 / callers.len() as f64
                    };
                    let remote = callees.iter().filter(|&&q| q != p).count() as f64;
                    t_k += call.count as f64 * pa * remote / callees.len() as f64 * leg;
                }
            }
            total += svc.weight() * t_k;
        }
        total
    }
}

/// Genetic search without super individuals whose fitness is the flat-model
/// delay. The trace's objective values are flat-model values; re-score
/// `trace.best` with the topology evaluator to compare against other schemes.
pub fn ga_blind(s: &Scenario, flat: &FlatNetworkModel, config: &GaConfig) -> Result<OptimizationTrace, BaselineError> {
    config.validate()?;
    flat.validate()?;
    if let Some(k) = (0..s.services().len()).find(|&k| s.aggregate_arrival(k) <= 0.0) {
        return Err(TrafficError::ZeroAggregateArrival { service: k }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    Ok(genetic_search(s, config, Vec::new(), &mut rng, |d| flat.delay(s, d))?)
}
