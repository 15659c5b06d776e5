//! Deterministic agent simulation of the charging site.

pub mod events;
pub mod vehicle;
pub mod world;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::energy::EnergyLedger;
use crate::site::{load_site, SiteError, SiteGraph};
use crate::weather::{resolve_weather, WeatherError, WeatherSeries};

pub use events::{Event, EventKind};
pub use vehicle::{decide_charge, decide_charge_with, ChargeDecision, MovingState, Slot, Vehicle, VehicleKind};
pub use world::{AreaState, Port, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Site(#[from] SiteError),
    #[error("unknown area {0:?}")]
    UnknownArea(String),
    #[error("site has no residential nodes")]
    NoResidential,
    #[error("area {area:?} is unreachable from {from:?}")]
    Unreachable { from: String, area: String },
}

/// Aggregates of one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub ev_count: u32,
    pub ev_requested: u32,
    pub ev_satisfied: u32,
    pub gasoline_count: u32,
    pub overflow_count: u32,
    pub relocations: u32,
    pub idle_fee_events: u32,
    pub notifications: u32,
    /// Occupied ports per area at the end of each tick.
    pub occupancy: BTreeMap<String, Vec<u16>>,
    /// Ports per area at the end of the day.
    pub port_counts: BTreeMap<String, u32>,
    /// Waiting-queue length at the end of each tick.
    pub queue_length: Vec<u16>,
    pub ledger: EnergyLedger,
    pub fee_revenue_vnd: i64,
    pub bess_soc_end_kwh: f64,
    /// Largest per-step energy balance residual relative to demand.
    pub max_balance_residual: f64,
}

/// Loads the site named by the scenario, or the built-in campus.
pub fn resolve_site(config: &ScenarioConfig, base_dir: Option<&Path>) -> Result<SiteGraph, SiteError> {
    match &config.site_ref {
        None => Ok(SiteGraph::campus()),
        Some(p) => {
            let path = Path::new(p);
            match base_dir {
                Some(dir) if path.is_relative() => load_site(dir.join(path)),
                _ => load_site(path),
            }
        }
    }
}

/// Runs the full horizon, resolving weather and site relative to `base_dir`.
pub fn run_in(config: &ScenarioConfig, base_dir: Option<&Path>) -> Result<Vec<DayReport>, SimError> {
    config.validate_for_engine()?;
    let weather = resolve_weather(&config.weather_ref, base_dir, config.horizon_days as usize)?;
    let site = resolve_site(config, base_dir)?;
    run_with(config, Arc::new(weather), Arc::new(site))
}

pub fn run(config: &ScenarioConfig) -> Result<Vec<DayReport>, SimError> {
    run_in(config, None)
}

pub fn run_with(
    config: &ScenarioConfig,
    weather: Arc<WeatherSeries>,
    site: Arc<SiteGraph>,
) -> Result<Vec<DayReport>, SimError> {
    let mut world = World::new(config.clone(), weather, site)?;
    Ok(world.run_to_end())
}
