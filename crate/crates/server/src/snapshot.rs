//! Tick-boundary views of a world, and deltas between them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use evtwin_core::config::STEPS_PER_DAY;
use evtwin_core::energy::EnergyLedger;
use evtwin_core::metrics::{satisfaction_from_counts, self_consumption, self_sufficiency};
use evtwin_core::sim::{MovingState, Slot, VehicleKind, World};

/// Version of every JSON payload the server emits.
pub const PAYLOAD_SCHEMA_VERSION: u32 = 1;

/// Above this many vehicles, snapshots carry an evenly spaced subset.
pub const DECIMATION_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Position {
    Node { node: String },
    /// Between two nodes of the trip; `progress` runs from 0 at `from` to 1.
    Route { from: String, to: String, progress: f64 },
    /// Parked off-site.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub id: u32,
    pub label: String,
    pub kind: VehicleKind,
    pub state: MovingState,
    pub position: Position,
    pub soc: f64,
    pub slot: Slot,
    pub charging: bool,
    pub in_queue: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortView {
    pub port_id: u32,
    pub power_kw: f64,
    pub occupant: Option<u32>,
    pub draining: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaView {
    pub area_id: String,
    pub node: String,
    pub n11: u32,
    pub n30: u32,
    pub occupied: u32,
    pub inactive_used: u32,
    pub inactive_capacity: u32,
    pub ports: Vec<PortView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub satisfaction: f64,
    pub self_sufficiency: f64,
    pub self_consumption: f64,
    pub ev_requested: u64,
    pub ev_satisfied: u64,
    pub fee_revenue_vnd: i64,
    pub bess_soc_kwh: f64,
    pub ledger: EnergyLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    /// Ticks advanced since the session was created.
    pub tick: u64,
    pub day: u32,
    pub tick_in_day: u32,
    /// Simulated clock, `HH:MM`.
    pub sim_time: String,
    /// When the snapshot was taken; excluded from the content hash.
    pub wall_clock: String,
    pub finished: bool,
    pub vehicle_count: usize,
    pub decimated: bool,
    pub vehicles: Vec<VehicleView>,
    pub areas: Vec<AreaView>,
    pub queue_length: usize,
    pub kpis: Kpis,
    /// Sequence number the next session event will get.
    pub event_seq: u64,
}

fn route(from: &str, to: &str, start: u32, end: u32, now: u32) -> Position {
    let span = end.saturating_sub(start).max(1) as f64;
    let progress = ((now.saturating_sub(start)) as f64 / span).clamp(0.0, 1.0);
    Position::Route { from: from.to_string(), to: to.to_string(), progress }
}

impl Snapshot {
    pub fn capture(world: &World, tick: u64, event_seq: u64) -> Snapshot {
        let site = world.site();
        let node_id = |i: usize| site.nodes[i].id.clone();
        let port_area = |port_id: u32| world.ports.iter().find(|p| p.port_id == port_id).map(|p| p.area);
        let now = world.tick_in_day;

        let step = world.vehicles.len().div_ceil(DECIMATION_THRESHOLD).max(1);
        let mut vehicles: Vec<VehicleView> = world
            .vehicles
            .iter()
            .step_by(step)
            .map(|v| {
                let home = node_id(v.home);
                let parked_area = match v.parking_slot {
                    Slot::Active { port_id } => port_area(port_id),
                    Slot::Inactive { area } => Some(area),
                    _ => None,
                };
                let target = node_id(world.areas[parked_area.unwrap_or(v.parking_area)].node);
                let position = match v.moving_obj {
                    MovingState::Resting => Position::Node { node: home },
                    MovingState::CommutingIn => route(&home, &target, v.commute_start_tick, v.arrival_tick, now),
                    MovingState::Leaving if v.parking_slot == Slot::None => {
                        route(&target, &home, v.departure_tick, v.home_tick, now)
                    }
                    _ if v.parking_slot == Slot::Overflow => Position::Overflow,
                    _ => Position::Node { node: target },
                };
                VehicleView {
                    id: v.id,
                    label: v.label(),
                    kind: v.kind,
                    state: v.moving_obj,
                    position,
                    soc: v.soc,
                    slot: v.parking_slot,
                    charging: v.is_charging,
                    in_queue: v.in_queue,
                }
            })
            .collect();
        vehicles.sort_by_key(|v| v.id);

        let areas = world
            .areas
            .iter()
            .enumerate()
            .map(|(a, area)| {
                let ports: Vec<PortView> = world
                    .ports
                    .iter()
                    .filter(|p| p.area == a)
                    .map(|p| PortView { port_id: p.port_id, power_kw: p.power_kw, occupant: p.occupant, draining: p.draining })
                    .collect();
                let (n11, n30) = world.port_counts(a);
                AreaView {
                    area_id: area.area_id.clone(),
                    node: node_id(area.node),
                    n11,
                    n30,
                    occupied: ports.iter().filter(|p| p.occupant.is_some()).count() as u32,
                    inactive_used: area.inactive_used,
                    inactive_capacity: area.inactive_capacity,
                    ports,
                }
            })
            .collect();

        let (req_today, sat_today) = world.day_counts();
        let requested = world.reports.iter().map(|r| u64::from(r.ev_requested)).sum::<u64>() + u64::from(req_today);
        let satisfied = world.reports.iter().map(|r| u64::from(r.ev_satisfied)).sum::<u64>() + u64::from(sat_today);
        let ledger = world.reports.iter().fold(world.ledger.clone(), |acc, r| acc.merged(&r.ledger));
        let minutes = world.tick_in_day as usize * (24 * 60 / STEPS_PER_DAY);
        Snapshot {
            schema_version: PAYLOAD_SCHEMA_VERSION,
            tick,
            day: world.day,
            tick_in_day: world.tick_in_day,
            sim_time: format!("{:02}:{:02}", minutes / 60, minutes % 60),
            wall_clock: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            finished: world.is_finished(),
            vehicle_count: world.vehicles.len(),
            decimated: step > 1,
            vehicles,
            areas,
            queue_length: world.queue.len(),
            kpis: Kpis {
                satisfaction: satisfaction_from_counts(satisfied, requested),
                self_sufficiency: self_sufficiency(&ledger),
                self_consumption: self_consumption(&ledger),
                ev_requested: requested,
                ev_satisfied: satisfied,
                fee_revenue_vnd: ledger.idle_fee_revenue_vnd,
                bess_soc_kwh: world.bess.soc_kwh,
                ledger,
            },
            event_seq,
        }
    }

    /// SHA-256 of the snapshot with its wall clock blanked.
    pub fn content_hash(&self) -> String {
        let mut s = self.clone();
        s.wall_clock = String::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&s).expect("snapshot serializes")))
    }

    /// Occupancy counts agree with the port lists.
    pub fn is_consistent(&self) -> bool {
        let occupied_ports: u32 = self.areas.iter().map(|a| a.occupied).sum();
        let on_ports = self.vehicles.iter().filter(|v| matches!(v.slot, Slot::Active { .. })).count() as u32;
        self.areas.iter().all(|a| a.occupied as usize == a.ports.iter().filter(|p| p.occupant.is_some()).count())
            && (self.decimated || occupied_ports == on_ports)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub schema_version: u32,
    pub tick: u64,
    pub day: u32,
    pub tick_in_day: u32,
    pub sim_time: String,
    pub wall_clock: String,
    pub finished: bool,
    pub vehicle_count: usize,
    /// Vehicles that changed or appeared since the previous message.
    pub vehicles: Vec<VehicleView>,
    pub removed_vehicles: Vec<u32>,
    /// Areas whose ports or counts changed.
    pub areas: Vec<AreaView>,
    pub queue_length: usize,
    pub kpis: Kpis,
    pub event_seq: u64,
}

impl Delta {
    pub fn between(prev: &Snapshot, next: &Snapshot) -> Delta {
        let old: std::collections::HashMap<u32, &VehicleView> = prev.vehicles.iter().map(|v| (v.id, v)).collect();
        let new_ids: std::collections::HashSet<u32> = next.vehicles.iter().map(|v| v.id).collect();
        Delta {
            schema_version: PAYLOAD_SCHEMA_VERSION,
            tick: next.tick,
            day: next.day,
            tick_in_day: next.tick_in_day,
            sim_time: next.sim_time.clone(),
            wall_clock: next.wall_clock.clone(),
            finished: next.finished,
            vehicle_count: next.vehicle_count,
            vehicles: next.vehicles.iter().filter(|v| old.get(&v.id) != Some(v)).cloned().collect(),
            removed_vehicles: prev.vehicles.iter().map(|v| v.id).filter(|id| !new_ids.contains(id)).collect(),
            areas: next.areas.iter().filter(|a| !prev.areas.contains(a)).cloned().collect(),
            queue_length: next.queue_length,
            kpis: next.kpis.clone(),
            event_seq: next.event_seq,
        }
    }

    /// Applies the delta to the snapshot it was computed from.
    pub fn apply(&self, prev: &Snapshot) -> Snapshot {
        let mut s = prev.clone();
        s.tick = self.tick;
        s.day = self.day;
        s.tick_in_day = self.tick_in_day;
        s.sim_time = self.sim_time.clone();
        s.wall_clock = self.wall_clock.clone();
        s.finished = self.finished;
        s.vehicles.retain(|v| !self.removed_vehicles.contains(&v.id));
        for v in &self.vehicles {
            match s.vehicles.iter_mut().find(|x| x.id == v.id) {
                Some(x) => *x = v.clone(),
                None => s.vehicles.push(v.clone()),
            }
        }
        s.vehicles.sort_by_key(|v| v.id);
        for a in &self.areas {
            match s.areas.iter_mut().find(|x| x.area_id == a.area_id) {
                Some(x) => *x = a.clone(),
                None => s.areas.push(a.clone()),
            }
        }
        s.vehicle_count = self.vehicle_count;
        s.queue_length = self.queue_length;
        s.kpis = self.kpis.clone();
        s.event_seq = self.event_seq;
        s
    }
}
