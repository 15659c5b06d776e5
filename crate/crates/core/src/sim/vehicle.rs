//! Vehicle agents and their daily attributes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BehaviorParams, ScenarioConfig, TIMESTEP_MINUTES};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Ev,
    Gasoline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovingState {
    Resting,
    CommutingIn,
    Parking,
    Working,
    Leaving,
}

/// Where a vehicle is parked. Area and port values are indices into the
/// world's area list and port ids respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Slot {
    None,
    Active { port_id: u32 },
    Inactive { area: usize },
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeDecision {
    Request,
    NoRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub kind: VehicleKind,
    pub ev_model: Option<String>,
    pub battery_kwh: f64,
    pub soc: f64,
    pub priority_des: bool,
    pub priority_fast: bool,
    /// Residential node index in the site graph.
    pub home: usize,
    /// Index of the target area in the scenario's area list.
    pub parking_area: usize,
    /// Minutes of day.
    pub start_work: u32,
    pub end_work: u32,
    pub moving_obj: MovingState,
    pub parking_slot: Slot,
    pub is_charging: bool,
    pub requested_charge: bool,
    pub satisfied: bool,
    pub in_queue: bool,
    pub fees_accrued_vnd: i64,
    /// Set once the vehicle is home again after work.
    pub done: bool,
    /// Tick of day at which the vehicle leaves home.
    pub commute_start_tick: u32,
    /// Tick of day at which the vehicle reaches the site.
    pub arrival_tick: u32,
    pub departure_tick: u32,
    pub home_tick: u32,
    /// Pre-drawn uniform used for the mid-range charge decision.
    pub charge_draw: f64,
    /// Pre-drawn uniform used by gasoline vehicles to pick a slot.
    pub slot_draw: f64,
}

impl Vehicle {
    pub fn label(&self) -> String {
        match self.kind {
            VehicleKind::Ev => format!("EV-{:03}", self.id),
            VehicleKind::Gasoline => format!("GV-{:03}", self.id),
        }
    }

    pub fn is_ev(&self) -> bool {
        self.kind == VehicleKind::Ev
    }

    pub fn port_id(&self) -> Option<u32> {
        match self.parking_slot {
            Slot::Active { port_id } => Some(port_id),
            _ => None,
        }
    }

    /// Energy needed to reach 100% SoC.
    pub fn headroom_kwh(&self) -> f64 {
        ((100.0 - self.soc) / 100.0 * self.battery_kwh).max(0.0)
    }
}

/// Charge decision from SoC, with `u` a uniform draw in `[0, 1)`.
pub fn decide_charge_with(soc: f64, behavior: &BehaviorParams, u: f64) -> ChargeDecision {
    if soc <= behavior.soc_low_threshold {
        ChargeDecision::Request
    } else if soc >= behavior.soc_high_threshold {
        ChargeDecision::NoRequest
    } else if u < behavior.mid_charge_prob {
        ChargeDecision::Request
    } else {
        ChargeDecision::NoRequest
    }
}

pub fn decide_charge<R: Rng + ?Sized>(soc: f64, behavior: &BehaviorParams, rng: &mut R) -> ChargeDecision {
    decide_charge_with(soc, behavior, rng.random::<f64>())
}

fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn minute_to_tick(minute: f64) -> u32 {
    (minute / TIMESTEP_MINUTES as f64).round() as u32
}

fn hours_uniform<R: Rng + ?Sized>(window: [f64; 2], rng: &mut R) -> u32 {
    let h = window[0] + rng.random::<f64>() * (window[1] - window[0]);
    (h * 60.0).round() as u32
}

/// Spatial facts the spawner needs: residential node ids and travel ticks
/// from each residential node to each area.
#[derive(Debug, Clone)]
pub struct SpawnContext {
    pub residential: Vec<usize>,
    /// `travel_ticks[r][a]`, r indexing `residential`.
    pub travel_ticks: Vec<Vec<u32>>,
}

/// Attributes drawn for one vehicle. The draw order is fixed so a vehicle's
/// attributes depend only on `(seed, day, kind, index)`.
fn spawn_one(
    config: &ScenarioConfig,
    ctx: &SpawnContext,
    day: u32,
    kind: VehicleKind,
    index: u32,
    id: u32,
) -> Vehicle {
    let b = &config.behavior;
    let tag = match kind {
        VehicleKind::Ev => rng::TAG_EV,
        VehicleKind::Gasoline => rng::TAG_GASOLINE,
    };
    let mut r = rng::stream(config.rng_seed, &[u64::from(day), tag, u64::from(index)]);

    let home_slot = r.random_range(0..ctx.residential.len());
    let parking_area = r.random_range(0..config.areas.len());
    let soc = b.arrival_soc_range[0] + r.random::<f64>() * (b.arrival_soc_range[1] - b.arrival_soc_range[0]);
    let models: Vec<(&String, f64)> = b.model_weights.iter().map(|(m, w)| (m, *w)).collect();
    let weights: Vec<f64> = models.iter().map(|m| m.1).collect();
    let model = models[weighted_index(&weights, &mut r)].0.clone();
    let priority_fast = r.random::<f64>() < b.priority_fast_prob;
    let priority_des = r.random::<f64>() < b.priority_des_prob;
    let window = b.start_work_windows[weighted_index(&b.start_work_window_weights, &mut r)];
    let start_work = hours_uniform(window, &mut r);
    let end_work = hours_uniform(b.end_work_window, &mut r);
    let charge_draw = r.random::<f64>();
    let slot_draw = r.random::<f64>();

    let travel = ctx.travel_ticks[home_slot][parking_area].max(1);
    let arrival_tick = minute_to_tick(f64::from(start_work)).max(travel);
    let departure_tick = minute_to_tick(f64::from(end_work)).max(arrival_tick + 1);
    let is_ev = kind == VehicleKind::Ev;
    Vehicle {
        id,
        kind,
        ev_model: is_ev.then(|| model.clone()),
        battery_kwh: if is_ev { b.battery_capacity_by_model[&model] } else { 0.0 },
        soc: if is_ev { soc } else { 0.0 },
        priority_des,
        priority_fast,
        home: ctx.residential[home_slot],
        parking_area,
        start_work,
        end_work,
        moving_obj: MovingState::Resting,
        parking_slot: Slot::None,
        is_charging: false,
        requested_charge: false,
        satisfied: false,
        in_queue: false,
        fees_accrued_vnd: 0,
        done: false,
        commute_start_tick: arrival_tick - travel,
        arrival_tick,
        departure_tick,
        home_tick: departure_tick + travel,
        charge_draw,
        slot_draw,
    }
}

/// Spawns the day's fleet: EVs get ids `0..nb_electrical`, gasoline vehicles
/// follow. Deterministic in `(config.rng_seed, day)`.
pub fn spawn_vehicles(config: &ScenarioConfig, ctx: &SpawnContext, day: u32) -> Vec<Vehicle> {
    let mut out = Vec::with_capacity((config.nb_electrical + config.nb_gasoline) as usize);
    for i in 0..config.nb_electrical {
        out.push(spawn_one(config, ctx, day, VehicleKind::Ev, i, i));
    }
    for i in 0..config.nb_gasoline {
        out.push(spawn_one(config, ctx, day, VehicleKind::Gasoline, i, config.nb_electrical + i));
    }
    out
}
