//! Communication-delay model and deployment search for microservices on edge
//! networks.
//!
//! * [`model`]: topology, microservice catalog, services, deployments.
//! * [`routing`]: static shortest-hop routes and link forwarding load.
//! * [`traffic`]: deployment to link traffic, residual bandwidth and delay.
//! * [`optimizer`]: topology-aware genetic search with greedy-seeded super
//!   individuals.
//! * [`baselines`]: random, greedy and topology-blind GA placements.
//! * [`harness`]: scenario generation, exhaustive oracle and experiment sweeps.

pub mod model;
pub mod routing;
pub mod traffic;
pub mod optimizer;
pub mod baselines;
pub mod harness;
