//! Scenario generation, the exhaustive oracle, scheme dispatch and sweeps.

mod generate;
mod oracle;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_scenario, GeneratorParams, Span};
pub use oracle::{brute_force_optimum, search_space, DEFAULT_SIZE_GUARD};
pub use sweep::{run_sweep, Axis, CellResult, SweepRow, SweepSpec, SweepTable};

use crate::baselines::{ga_blind, greedy_baseline, random_deploy, BaselineError, FlatNetworkModel};
use crate::model::{Deployment, ModelError, Scenario};
use crate::optimizer::{optimize, optimize_without_ia, GaConfig, OptimizeError};
use crate::routing::{RoutingError, RoutingTable};
use crate::traffic::{evaluate, DelayReport, TrafficError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("scenario generation failed: {0}")]
    GenerationFailed(String),
    #[error("search space of {size} placements exceeds the guard")]
    SpaceTooLarge { size: u128 },
    #[error("no deployment satisfies the resource constraints")]
    NoFeasibleDeployment,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Improvement of scheme A over scheme B, in percent.
pub fn improvement(t_a: f64, t_b: f64) -> f64 {
    (t_b - t_a) / t_b * 100.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TaiaMd,
    TaiaMdNoIa,
    Random,
    Greedy,
    GaBlind,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::TaiaMd, Scheme::TaiaMdNoIa, Scheme::Random, Scheme::Greedy, Scheme::GaBlind];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TaiaMd => "taia-md",
            Scheme::TaiaMdNoIa => "taia-md-no-ia",
            Scheme::Random => "random",
            Scheme::Greedy => "greedy",
            Scheme::GaBlind => "ga-blind",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// A scheme's deployment scored on the real topology.
#[derive(Clone, Debug)]
pub struct SchemeOutcome {
    pub deployment: Deployment,
    pub report: DelayReport,
    /// Generations run; zero for one-shot schemes.
    pub iterations: usize,
}

/// Runs `scheme`; `seed` drives every random choice (the GA seed for the
/// genetic schemes, the sampling seed for random placement).
pub fn run_scheme(
    s: &Scenario,
    routing: &RoutingTable,
    scheme: Scheme,
    config: &GaConfig,
    seed: u64,
) -> Result<SchemeOutcome, HarnessError> {
    let config = config.clone().with_seed(seed);
    let (deployment, iterations) = match scheme {
        Scheme::TaiaMd => {
            let trace = optimize(s, routing, &config)?;
            (trace.best, trace.iterations)
        }
        Scheme::TaiaMdNoIa => {
            let trace = optimize_without_ia(s, routing, &config)?;
            (trace.best, trace.iterations)
        }
        Scheme::Random => (random_deploy(s, seed)?, 0),
        Scheme::Greedy => (greedy_baseline(s, routing)?, 0),
        Scheme::GaBlind => {
            let trace = ga_blind(s, &FlatNetworkModel::nominal(s), &config)?;
            (trace.best, trace.iterations)
        }
    };
    let report = evaluate(s, &deployment, routing)?;
    Ok(SchemeOutcome { deployment, report, iterations })
}
