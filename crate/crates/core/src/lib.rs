//! Campus EV charging digital twin: scenario loading, energy model, agent
//! simulation, metrics, optimizers, statistics and experiment campaigns.

pub mod config;
pub mod energy;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod site;
pub mod weather;
pub mod optimizer;
pub mod stats;
pub mod experiment;
