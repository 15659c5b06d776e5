//! The time-stepped world: ports, vehicles, queue, energy and policies.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::events::{Event, EventKind};
use super::vehicle::{decide_charge_with, spawn_vehicles, ChargeDecision, MovingState, Slot, SpawnContext, Vehicle};
use super::{DayReport, SimError};
use crate::config::{ChargingAreaConfig, PolicySet, SatisfactionMode, ScenarioConfig, STEPS_PER_DAY, STEP_HOURS, TIMESTEP_MINUTES};
use crate::energy::{step_energy, BessState, EnergyLedger, StepFlows};
use crate::rng;
use crate::site::{NodeKind, SiteGraph};
use crate::weather::WeatherSeries;

pub const FAST_KW: f64 = 30.0;
pub const SLOW_KW: f64 = 11.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub port_id: u32,
    pub area: usize,
    pub power_kw: f64,
    pub occupant: Option<u32>,
    /// Global tick at which the current session started.
    pub session_start: Option<u64>,
    /// Global tick boundary at which the occupant reached 100%.
    pub full_since: Option<u64>,
    /// Marked for removal once the occupant leaves.
    pub draining: bool,
}

impl Port {
    pub fn is_fast(&self) -> bool {
        self.power_kw >= FAST_KW
    }

    pub fn is_free(&self) -> bool {
        self.occupant.is_none() && !self.draining
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaState {
    pub area_id: String,
    /// Parking node index in the site graph.
    pub node: usize,
    pub inactive_capacity: u32,
    pub inactive_used: u32,
}

#[derive(Debug, Clone, Default)]
struct DayStats {
    requested: u32,
    satisfied: u32,
    overflow: u32,
    relocations: u32,
    fee_events: u32,
    notifications: u32,
    occupancy: Vec<Vec<u16>>,
    queue_length: Vec<u16>,
    max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    config: ScenarioConfig,
    weather: Arc<WeatherSeries>,
    site: Arc<SiteGraph>,
    ctx: SpawnContext,
    /// Residential node index -> slot in `ctx.residential`.
    home_slot: BTreeMap<usize, usize>,
    /// Per residential slot, area indices sorted by travel time.
    area_order: Vec<Vec<usize>>,
    /// Per residential slot and area, road distance in km.
    dist_km: Vec<Vec<f64>>,
    pub day: u32,
    pub tick_in_day: u32,
    pub areas: Vec<AreaState>,
    pub ports: Vec<Port>,
    pub vehicles: Vec<Vehicle>,
    pub queue: VecDeque<u32>,
    pub bess: BessState,
    /// Ledger of the current day.
    pub ledger: EnergyLedger,
    pub last_flows: StepFlows,
    pub reports: Vec<DayReport>,
    pub events: Vec<Event>,
    pub record_events: bool,
    stats: DayStats,
    next_port_id: u32,
    finished: bool,
}

impl World {
    pub fn new(config: ScenarioConfig, weather: Arc<WeatherSeries>, site: Arc<SiteGraph>) -> Result<World, SimError> {
        config.validate_for_engine()?;
        let residential = site.nodes_of_kind(NodeKind::Residential);
        if residential.is_empty() {
            return Err(SimError::NoResidential);
        }
        let mut areas = Vec::new();
        for a in &config.areas {
            areas.push(AreaState {
                area_id: a.area_id.clone(),
                node: site.parking_node(&a.area_id)?,
                inactive_capacity: a.n_inactive_slots,
                inactive_used: 0,
            });
        }
        let step = f64::from(TIMESTEP_MINUTES);
        let mut travel_ticks = Vec::new();
        let mut area_order = Vec::new();
        let mut dist_km = Vec::new();
        for &r in &residential {
            let times = site.travel_times_from(r);
            let dists = site.distances_from(r);
            let minutes: Vec<f64> = areas.iter().map(|a| times[a.node]).collect();
            if let Some(a) = minutes.iter().position(|m| !m.is_finite()) {
                return Err(SimError::Unreachable { from: site.nodes[r].id.clone(), area: areas[a].area_id.clone() });
            }
            travel_ticks.push(minutes.iter().map(|m| (m / step).ceil().max(1.0) as u32).collect());
            let mut order: Vec<usize> = (0..areas.len()).collect();
            order.sort_by(|&x, &y| minutes[x].total_cmp(&minutes[y]).then(x.cmp(&y)));
            area_order.push(order);
            dist_km.push(areas.iter().map(|a| dists[a.node] / 1000.0).collect());
        }
        let home_slot = residential.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let bess = BessState::new(&config.energy.bess);
        let mut world = World {
            ctx: SpawnContext { residential, travel_ticks },
            home_slot,
            area_order,
            dist_km,
            day: 0,
            tick_in_day: 0,
            areas,
            ports: Vec::new(),
            vehicles: Vec::new(),
            queue: VecDeque::new(),
            bess,
            ledger: EnergyLedger::default(),
            last_flows: StepFlows::default(),
            reports: Vec::new(),
            events: Vec::new(),
            record_events: false,
            stats: DayStats::default(),
            next_port_id: 0,
            finished: false,
            config,
            weather,
            site,
        };
        for a in 0..world.areas.len() {
            let (n11, n30) = (world.config.areas[a].n_ports_11kw, world.config.areas[a].n_ports_30kw);
            for _ in 0..n11 {
                world.add_port(a, SLOW_KW);
            }
            for _ in 0..n30 {
                world.add_port(a, FAST_KW);
            }
        }
        world.init_day();
        Ok(world)
    }

    pub fn with_events(mut self) -> World {
        self.record_events = true;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn site(&self) -> &Arc<SiteGraph> {
        &self.site
    }

    pub fn weather(&self) -> &Arc<WeatherSeries> {
        &self.weather
    }

    pub fn global_tick(&self) -> u64 {
        u64::from(self.day) * STEPS_PER_DAY as u64 + u64::from(self.tick_in_day)
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Requested and satisfied counts of the current day so far.
    pub fn day_counts(&self) -> (u32, u32) {
        (self.stats.requested, self.stats.satisfied)
    }

    pub fn travel_ticks(&self, vehicle: &Vehicle, area: usize) -> u32 {
        self.ctx.travel_ticks[self.home_slot[&vehicle.home]][area].max(1)
    }

    fn add_port(&mut self, area: usize, power_kw: f64) {
        self.ports.push(Port {
            port_id: self.next_port_id,
            area,
            power_kw,
            occupant: None,
            session_start: None,
            full_since: None,
            draining: false,
        });
        self.next_port_id += 1;
    }

    fn port_index(&self, port_id: u32) -> usize {
        self.ports.binary_search_by_key(&port_id, |p| p.port_id).expect("port id present")
    }

    fn log(&mut self, vehicle_id: Option<u32>, event: EventKind, detail: String) {
        if self.record_events {
            self.events.push(Event { tick: self.global_tick(), vehicle_id, event, detail });
        }
    }

    fn init_day(&mut self) {
        self.vehicles = spawn_vehicles(&self.config, &self.ctx, self.day);
        self.ports.retain(|p| !p.draining);
        for p in &mut self.ports {
            p.occupant = None;
            p.session_start = None;
            p.full_since = None;
        }
        for a in &mut self.areas {
            a.inactive_used = 0;
        }
        self.queue.clear();
        self.ledger = EnergyLedger::default();
        self.stats = DayStats { occupancy: vec![Vec::with_capacity(STEPS_PER_DAY); self.areas.len()], ..DayStats::default() };
    }

    /// Advances one 5-minute tick. Returns the day report when a day closes.
    pub fn step(&mut self) -> Option<DayReport> {
        if self.finished {
            return None;
        }
        let tick = self.global_tick();
        self.energy_and_charging(tick);
        self.transitions();
        self.apply_policies(tick);
        self.dispatch_notifications();

        for (a, series) in self.stats.occupancy.iter_mut().enumerate() {
            let n = self.ports.iter().filter(|p| p.area == a && p.occupant.is_some()).count();
            series.push(n as u16);
        }
        self.stats.queue_length.push(self.queue.len() as u16);

        self.tick_in_day += 1;
        if self.tick_in_day as usize == STEPS_PER_DAY {
            let report = self.close_day();
            self.reports.push(report.clone());
            self.day += 1;
            self.tick_in_day = 0;
            if self.day >= self.config.horizon_days {
                self.finished = true;
            } else {
                self.init_day();
            }
            return Some(report);
        }
        None
    }

    pub fn run_to_end(&mut self) -> Vec<DayReport> {
        while !self.finished {
            self.step();
        }
        self.reports.clone()
    }

    /// Energy dispatch for the sessions active at the start of the tick, then
    /// exactly that energy is added to the charging vehicles.
    fn energy_and_charging(&mut self, tick: u64) {
        let w = self.weather.at(tick as usize);
        let generation = self.config.energy.step_generation(w.ghi, w.air_temp, w.wind_speed_ref);
        let eff = self.config.options.charger_efficiency;
        let mut deliveries = Vec::new();
        let mut demand = 0.0;
        for (pi, port) in self.ports.iter().enumerate() {
            let Some(vid) = port.occupant else { continue };
            let v = &self.vehicles[vid as usize];
            if v.is_charging {
                let delivered = (port.power_kw * STEP_HOURS * eff).min(v.headroom_kwh());
                deliveries.push((pi, vid, delivered));
                demand += delivered / eff;
            }
        }
        let flows = step_energy(&mut self.ledger, &mut self.bess, generation, demand);
        if demand > 0.0 {
            let rel = flows.balance_residual().abs() / demand;
            self.stats.max_residual = self.stats.max_residual.max(rel);
        }
        self.last_flows = flows;

        let strict = self.config.options.satisfaction_mode == SatisfactionMode::ReachedFull;
        for (pi, vid, delivered) in deliveries {
            let v = &mut self.vehicles[vid as usize];
            v.soc = (v.soc + delivered / v.battery_kwh * 100.0).min(100.0);
            if v.headroom_kwh() <= 1e-9 {
                v.soc = 100.0;
                v.is_charging = false;
                self.ports[pi].full_since = Some(tick + 1);
                let newly_satisfied = strict && v.requested_charge && !v.satisfied;
                if newly_satisfied {
                    v.satisfied = true;
                    self.stats.satisfied += 1;
                }
                let port_id = self.ports[pi].port_id;
                self.log(Some(vid), EventKind::Full, format!("port {port_id}"));
            }
        }
    }

    fn transitions(&mut self) {
        let t = self.tick_in_day;
        for id in 0..self.vehicles.len() {
            let v = &self.vehicles[id];
            match v.moving_obj {
                MovingState::Working if t >= v.departure_tick => self.depart(id as u32),
                MovingState::Leaving if t >= v.home_tick => {
                    let v = &mut self.vehicles[id];
                    v.moving_obj = MovingState::Resting;
                    v.done = true;
                }
                _ => {}
            }
        }
        for id in 0..self.vehicles.len() {
            let v = &self.vehicles[id];
            if v.moving_obj == MovingState::Resting && !v.done && t >= v.commute_start_tick {
                self.vehicles[id].moving_obj = MovingState::CommutingIn;
                self.log(Some(id as u32), EventKind::CommuteStart, String::new());
            }
            let v = &self.vehicles[id];
            if v.moving_obj == MovingState::CommutingIn && t >= v.arrival_tick {
                self.arrive(id as u32);
            }
        }
    }

    fn arrive(&mut self, vid: u32) {
        let drain = self.config.options.commute_drain;
        let per_km = self.config.options.commute_kwh_per_km;
        let i = vid as usize;
        let slot = self.home_slot[&self.vehicles[i].home];
        let km = self.dist_km[slot][self.vehicles[i].parking_area];
        let v = &mut self.vehicles[i];
        v.moving_obj = MovingState::Parking;
        if v.is_ev() {
            if drain {
                v.soc = (v.soc - km * per_km / v.battery_kwh * 100.0).max(0.0);
            }
            let decision = decide_charge_with(v.soc, &self.config.behavior, v.charge_draw);
            v.requested_charge = decision == ChargeDecision::Request;
            if v.requested_charge {
                self.stats.requested += 1;
            }
        }
        let detail = format!("soc {:.1} request {}", v.soc, v.requested_charge);
        self.log(Some(vid), EventKind::Arrive, detail);
        self.assign_slot(vid);
        self.vehicles[i].moving_obj = MovingState::Working;
    }

    fn areas_by_travel(&self, vid: u32) -> Vec<usize> {
        let v = &self.vehicles[vid as usize];
        let order = &self.area_order[self.home_slot[&v.home]];
        let mut out = vec![v.parking_area];
        out.extend(order.iter().copied().filter(|&a| a != v.parking_area));
        out
    }

    /// Lowest-id free port honoring the vehicle's power preference. With
    /// `restrict`, only that area is searched; otherwise areas are ordered by
    /// travel time from the vehicle's home.
    pub fn find_port(&self, vid: u32, restrict: Option<usize>) -> Option<usize> {
        let v = &self.vehicles[vid as usize];
        let areas = match restrict {
            Some(a) => vec![a],
            None => self.area_order[self.home_slot[&v.home]].clone(),
        };
        let kinds = if v.priority_fast { [true, false] } else { [false, true] };
        for fast in kinds {
            for &a in &areas {
                if let Some(pi) = self.ports.iter().position(|p| p.area == a && p.is_fast() == fast && p.is_free()) {
                    return Some(pi);
                }
            }
        }
        None
    }

    fn assign_slot(&mut self, vid: u32) {
        let v = &self.vehicles[vid as usize];
        if !v.is_ev() {
            self.assign_gasoline(vid);
            return;
        }
        if !v.requested_charge {
            self.park_inactive(vid);
            return;
        }
        let notification = self.config.policies.notification;
        if notification && !self.queue.is_empty() {
            self.enqueue(vid);
            return;
        }
        let restrict = v.priority_des.then_some(v.parking_area);
        match self.find_port(vid, restrict) {
            Some(pi) => self.start_session(vid, pi),
            None if notification => self.enqueue(vid),
            None => self.park_inactive(vid),
        }
    }

    fn assign_gasoline(&mut self, vid: u32) {
        if self.config.policies.ban_gasoline {
            self.park_inactive(vid);
            return;
        }
        let u = self.vehicles[vid as usize].slot_draw;
        for a in self.areas_by_travel(vid) {
            let free_ports: Vec<usize> = (0..self.ports.len()).filter(|&i| self.ports[i].area == a && self.ports[i].is_free()).collect();
            let free_inactive = (self.areas[a].inactive_capacity - self.areas[a].inactive_used) as usize;
            let total = free_ports.len() + free_inactive;
            if total == 0 {
                continue;
            }
            let pick = ((u * total as f64) as usize).min(total - 1);
            if pick < free_ports.len() {
                let pi = free_ports[pick];
                self.occupy_port(vid, pi);
                let port_id = self.ports[pi].port_id;
                self.log(Some(vid), EventKind::ParkActiveIdle, format!("port {port_id}"));
            } else {
                self.take_inactive(vid, a);
            }
            return;
        }
        self.to_overflow(vid);
    }

    fn take_inactive(&mut self, vid: u32, area: usize) {
        self.areas[area].inactive_used += 1;
        self.vehicles[vid as usize].parking_slot = Slot::Inactive { area };
        let id = self.areas[area].area_id.clone();
        self.log(Some(vid), EventKind::ParkInactive, id);
    }

    fn to_overflow(&mut self, vid: u32) {
        self.vehicles[vid as usize].parking_slot = Slot::Overflow;
        self.stats.overflow += 1;
        self.log(Some(vid), EventKind::Overflow, String::new());
    }

    fn free_inactive_area(&self, order: &[usize]) -> Option<usize> {
        order.iter().copied().find(|&a| self.areas[a].inactive_used < self.areas[a].inactive_capacity)
    }

    fn park_inactive(&mut self, vid: u32) {
        let order = self.areas_by_travel(vid);
        match self.free_inactive_area(&order) {
            Some(a) => self.take_inactive(vid, a),
            None => self.to_overflow(vid),
        }
    }

    fn enqueue(&mut self, vid: u32) {
        self.park_inactive(vid);
        self.queue.push_back(vid);
        self.vehicles[vid as usize].in_queue = true;
        let position = self.queue.len();
        self.log(Some(vid), EventKind::Enqueue, format!("position {position}"));
    }

    fn occupy_port(&mut self, vid: u32, pi: usize) {
        let tick = self.global_tick();
        let port = &mut self.ports[pi];
        port.occupant = Some(vid);
        port.session_start = Some(tick);
        port.full_since = None;
        self.vehicles[vid as usize].parking_slot = Slot::Active { port_id: port.port_id };
    }

    fn start_session(&mut self, vid: u32, pi: usize) {
        self.occupy_port(vid, pi);
        let strict = self.config.options.satisfaction_mode == SatisfactionMode::ReachedFull;
        let v = &mut self.vehicles[vid as usize];
        v.is_charging = v.soc < 100.0;
        if !strict && v.requested_charge && !v.satisfied {
            v.satisfied = true;
            self.stats.satisfied += 1;
        }
        let port = &self.ports[pi];
        let detail = format!("port {} {} kW {}", port.port_id, port.power_kw, self.areas[port.area].area_id);
        self.log(Some(vid), EventKind::SessionStart, detail);
    }

    fn vacate_port(&mut self, pi: usize) {
        if self.ports[pi].draining {
            self.ports.remove(pi);
        } else {
            let p = &mut self.ports[pi];
            p.occupant = None;
            p.session_start = None;
            p.full_since = None;
        }
    }

    fn free_slot(&mut self, vid: u32) {
        let i = vid as usize;
        match self.vehicles[i].parking_slot {
            Slot::Active { port_id } => {
                let pi = self.port_index(port_id);
                self.vacate_port(pi);
            }
            Slot::Inactive { area } => self.areas[area].inactive_used -= 1,
            Slot::Overflow | Slot::None => {}
        }
        if self.vehicles[i].in_queue {
            self.queue.retain(|&q| q != vid);
            self.vehicles[i].in_queue = false;
        }
        self.vehicles[i].parking_slot = Slot::None;
        self.vehicles[i].is_charging = false;
    }

    fn depart(&mut self, vid: u32) {
        self.free_slot(vid);
        self.vehicles[vid as usize].moving_obj = MovingState::Leaving;
        let soc = self.vehicles[vid as usize].soc;
        self.log(Some(vid), EventKind::Depart, format!("soc {soc:.1}"));
    }

    /// Moves a port occupant to an inactive slot (its own area first).
    /// Returns false, leaving the vehicle in place, when none is free.
    fn move_to_inactive(&mut self, vid: u32, pi: usize) -> bool {
        let home_area = self.ports[pi].area;
        let mut order = vec![home_area];
        order.extend((0..self.areas.len()).filter(|&a| a != home_area));
        let Some(a) = self.free_inactive_area(&order) else { return false };
        self.vacate_port(pi);
        self.areas[a].inactive_used += 1;
        let v = &mut self.vehicles[vid as usize];
        v.parking_slot = Slot::Inactive { area: a };
        v.is_charging = false;
        true
    }

    fn apply_policies(&mut self, tick: u64) {
        let p = self.config.policies.clone();
        if !(p.idle_fee || p.relocate_full) {
            return;
        }
        let now = tick + 1;
        let grace = u64::from(p.idle_grace_minutes);
        let step = u64::from(TIMESTEP_MINUTES);
        let candidates: Vec<(u32, u32, u64)> = self
            .ports
            .iter()
            .filter_map(|port| Some((port.port_id, port.occupant?, port.full_since?)))
            .collect();
        for (port_id, vid, full_since) in candidates {
            let full_minutes = (now - full_since) * step;
            let pi = self.port_index(port_id);
            if p.relocate_full && full_minutes >= grace && self.move_to_inactive(vid, pi) {
                self.stats.relocations += 1;
                self.log(Some(vid), EventKind::Relocate, format!("port {port_id} after {full_minutes} min full"));
                continue;
            }
            if p.idle_fee && full_minutes > grace {
                let billable = (full_minutes - grace).min(step) as i64;
                let fee = p.idle_fee_rate_vnd_per_min * billable;
                self.vehicles[vid as usize].fees_accrued_vnd += fee;
                self.ledger.add_fee(fee);
                self.stats.fee_events += 1;
                self.log(Some(vid), EventKind::Fee, fee.to_string());
                let u = rng::unit(
                    self.config.rng_seed,
                    &[u64::from(self.day), u64::from(vid), u64::from(self.tick_in_day), rng::TAG_COMPLY],
                );
                if u < p.idle_comply_prob_per_check && self.move_to_inactive(vid, pi) {
                    self.log(Some(vid), EventKind::Comply, format!("port {port_id}"));
                }
            }
        }
    }

    fn dispatch_notifications(&mut self) {
        if !self.config.policies.notification {
            return;
        }
        while let Some(&head) = self.queue.front() {
            let Some(pi) = self.find_port(head, None) else { break };
            self.queue.pop_front();
            let i = head as usize;
            self.vehicles[i].in_queue = false;
            if let Slot::Inactive { area } = self.vehicles[i].parking_slot {
                self.areas[area].inactive_used -= 1;
            }
            self.start_session(head, pi);
            self.stats.notifications += 1;
            let port_id = self.ports[pi].port_id;
            self.log(Some(head), EventKind::Notify, format!("port {port_id}"));
        }
    }

    fn close_day(&mut self) -> DayReport {
        let evs = self.vehicles.iter().filter(|v| v.is_ev()).count() as u32;
        let mut occupancy = BTreeMap::new();
        let mut port_counts = BTreeMap::new();
        for (a, area) in self.areas.iter().enumerate() {
            occupancy.insert(area.area_id.clone(), std::mem::take(&mut self.stats.occupancy[a]));
            port_counts.insert(area.area_id.clone(), self.ports.iter().filter(|p| p.area == a).count() as u32);
        }
        DayReport {
            day: self.day,
            ev_count: evs,
            ev_requested: self.stats.requested,
            ev_satisfied: self.stats.satisfied,
            gasoline_count: self.vehicles.len() as u32 - evs,
            overflow_count: self.stats.overflow,
            relocations: self.stats.relocations,
            idle_fee_events: self.stats.fee_events,
            notifications: self.stats.notifications,
            occupancy,
            port_counts,
            queue_length: std::mem::take(&mut self.stats.queue_length),
            fee_revenue_vnd: self.ledger.idle_fee_revenue_vnd,
            bess_soc_end_kwh: self.bess.soc_kwh,
            max_balance_residual: self.stats.max_residual,
            ledger: self.ledger.clone(),
        }
    }

    /// Replaces the policy set; takes effect from the next tick.
    pub fn set_policies(&mut self, policies: PolicySet) {
        if self.config.policies.notification && !policies.notification {
            for vid in std::mem::take(&mut self.queue) {
                self.vehicles[vid as usize].in_queue = false;
            }
        }
        self.config.policies = policies;
        self.log(None, EventKind::PoliciesChanged, String::new());
    }

    /// Resizes an area's ports. Free ports are removed first; occupied excess
    /// ports drain and disappear when their occupant leaves.
    pub fn set_ports(&mut self, area_id: &str, n11: u32, n30: u32) -> Result<(), SimError> {
        let a = self
            .areas
            .iter()
            .position(|x| x.area_id == area_id)
            .ok_or_else(|| SimError::UnknownArea(area_id.to_string()))?;
        let mut probe = self.config.clone();
        let cfg = probe.area_mut(area_id).expect("area exists");
        cfg.n_ports_11kw = n11;
        cfg.n_ports_30kw = n30;
        probe.validate_for_engine()?;
        for (fast, target) in [(false, n11), (true, n30)] {
            self.resize_kind(a, fast, target as usize);
        }
        self.config = probe;
        self.log(None, EventKind::PortsChanged, format!("{area_id} {n11}x11kW {n30}x30kW"));
        Ok(())
    }

    fn resize_kind(&mut self, a: usize, fast: bool, target: usize) {
        let of_kind = |p: &Port| p.area == a && p.is_fast() == fast;
        let live = self.ports.iter().filter(|p| of_kind(p) && !p.draining).count();
        if target > live {
            let mut need = target - live;
            for p in self.ports.iter_mut().filter(|p| p.area == a && p.is_fast() == fast && p.draining) {
                if need == 0 {
                    break;
                }
                p.draining = false;
                need -= 1;
            }
            for _ in 0..need {
                self.add_port(a, if fast { FAST_KW } else { SLOW_KW });
            }
        } else {
            let mut excess = live - target;
            while excess > 0 {
                match self.ports.iter().rposition(|p| of_kind(p) && p.is_free()) {
                    Some(pi) => {
                        self.ports.remove(pi);
                        excess -= 1;
                    }
                    None => break,
                }
            }
            for p in self.ports.iter_mut().rev() {
                if excess == 0 {
                    break;
                }
                if p.area == a && p.is_fast() == fast && !p.draining {
                    p.draining = true;
                    excess -= 1;
                }
            }
        }
    }

    /// Effective port counts per kind for an area (draining ports included).
    pub fn port_counts(&self, area: usize) -> (u32, u32) {
        let n11 = self.ports.iter().filter(|p| p.area == area && !p.is_fast()).count() as u32;
        let n30 = self.ports.iter().filter(|p| p.area == area && p.is_fast()).count() as u32;
        (n11, n30)
    }

    pub fn area_config(&self, area: usize) -> &ChargingAreaConfig {
        &self.config.areas[area]
    }

    /// Checks the structural invariants of the current state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut inactive = vec![0u32; self.areas.len()];
        for v in &self.vehicles {
            if !(0.0..=100.0).contains(&v.soc) {
                return Err(format!("{}: soc {} out of range", v.label(), v.soc));
            }
            if v.satisfied && !v.requested_charge {
                return Err(format!("{}: satisfied without request", v.label()));
            }
            match v.parking_slot {
                Slot::Active { port_id } => {
                    let pi = self
                        .ports
                        .binary_search_by_key(&port_id, |p| p.port_id)
                        .map_err(|_| format!("{}: on missing port {port_id}", v.label()))?;
                    if self.ports[pi].occupant != Some(v.id) {
                        return Err(format!("{}: port {port_id} does not list it", v.label()));
                    }
                }
                Slot::Inactive { area } => inactive[area] += 1,
                _ => {}
            }
            if v.is_charging && v.port_id().is_none() {
                return Err(format!("{}: charging without a port", v.label()));
            }
            if v.in_queue != self.queue.contains(&v.id) {
                return Err(format!("{}: queue flag mismatch", v.label()));
            }
        }
        for p in &self.ports {
            if let Some(vid) = p.occupant {
                if self.vehicles.get(vid as usize).and_then(|v| v.port_id()) != Some(p.port_id) {
                    return Err(format!("port {}: occupant {vid} is elsewhere", p.port_id));
                }
            } else if p.full_since.is_some() || p.draining {
                return Err(format!("port {}: free but full_since or draining set", p.port_id));
            }
        }
        for (a, area) in self.areas.iter().enumerate() {
            if area.inactive_used != inactive[a] || area.inactive_used > area.inactive_capacity {
                return Err(format!("{}: inactive slot count mismatch", area.area_id));
            }
        }
        if self.stats.satisfied > self.stats.requested {
            return Err("satisfied exceeds requested".into());
        }
        if !(0.0..=self.bess.capacity_kwh + 1e-9).contains(&self.bess.soc_kwh) {
            return Err(format!("bess soc {} outside capacity", self.bess.soc_kwh));
        }
        if self.config.policies.notification && !self.queue.is_empty() && self.ports.iter().any(|p| p.is_free()) {
            return Err("free port left while the queue is waiting".into());
        }
        Ok(())
    }
}
