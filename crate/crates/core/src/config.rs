//! Scenario files: schema, defaults, validation and loading.
//!
//! A scenario is a single JSON document. Everything not given explicitly is
//! filled from the campus baseline defaults, so a minimal file only needs
//! `nb_electrical` and `areas`. See `docs/scenario-schema.md` for the field
//! reference.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::EnergyConfig;
use crate::metrics::MetricParams;

pub const SCHEMA_VERSION: u32 = 1;
pub const TIMESTEP_MINUTES: u32 = 5;
pub const STEPS_PER_DAY: usize = 288;
pub const STEPS_PER_HOUR: usize = 12;
/// Length of one step in hours.
pub const STEP_HOURS: f64 = TIMESTEP_MINUTES as f64 / 60.0;

pub const NB_ELECTRICAL_RANGE: (u32, u32) = (30, 200);
pub const PORTS_11KW_MAX: u32 = 50;
pub const PORTS_30KW_MAX: u32 = 10;
pub const NB_SOLAR_MAX: u32 = 1000;
pub const NB_WIND_MAX: u32 = 20;

/// One constraint violation, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargingAreaConfig {
    pub area_id: String,
    #[serde(rename = "n_ports_11kW")]
    pub n_ports_11kw: u32,
    #[serde(rename = "n_ports_30kW")]
    pub n_ports_30kw: u32,
    #[serde(default = "default_inactive_slots")]
    pub n_inactive_slots: u32,
}

fn default_inactive_slots() -> u32 {
    120
}

impl ChargingAreaConfig {
    pub fn new(area_id: &str, n11: u32, n30: u32) -> Self {
        Self {
            area_id: area_id.to_string(),
            n_ports_11kw: n11,
            n_ports_30kw: n30,
            n_inactive_slots: default_inactive_slots(),
        }
    }
}

/// Operational policies. Any combination of the four flags is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySet {
    pub ban_gasoline: bool,
    pub idle_fee: bool,
    pub idle_fee_rate_vnd_per_min: i64,
    pub idle_grace_minutes: u32,
    pub relocate_full: bool,
    pub notification: bool,
    /// Chance that a fined occupant leaves the port at each 5-minute check.
    pub idle_comply_prob_per_check: f64,
}

impl Default for PolicySet {
    fn default() -> Self {
        Self {
            ban_gasoline: false,
            idle_fee: false,
            idle_fee_rate_vnd_per_min: 1000,
            idle_grace_minutes: 30,
            relocate_full: false,
            notification: false,
            idle_comply_prob_per_check: 0.25,
        }
    }
}

/// Driver behavior and fleet composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorParams {
    /// At or below this SoC (%) an EV always asks for a charge.
    pub soc_low_threshold: f64,
    /// At or above this SoC (%) an EV never asks for a charge.
    pub soc_high_threshold: f64,
    pub mid_charge_prob: f64,
    /// Daily SoC is drawn uniformly from this range (%).
    pub arrival_soc_range: [f64; 2],
    /// Arrival windows in hours of day.
    pub start_work_windows: Vec<[f64; 2]>,
    /// Relative weight of each arrival window.
    pub start_work_window_weights: Vec<f64>,
    pub end_work_window: [f64; 2],
    pub priority_fast_prob: f64,
    pub priority_des_prob: f64,
    /// Usable battery capacity per EV model, kWh. Defaults are placeholders,
    /// not manufacturer data.
    pub battery_capacity_by_model: BTreeMap<String, f64>,
    /// Relative share of each EV model in the fleet.
    pub model_weights: BTreeMap<String, f64>,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        let capacity = BTreeMap::from([
            ("VF8".to_string(), 88.0),
            ("VF9".to_string(), 92.0),
            ("VFe34".to_string(), 42.0),
        ]);
        let weights = BTreeMap::from([
            ("VF8".to_string(), 0.3),
            ("VF9".to_string(), 0.2),
            ("VFe34".to_string(), 0.5),
        ]);
        Self {
            soc_low_threshold: 35.0,
            soc_high_threshold: 70.0,
            mid_charge_prob: 0.5,
            arrival_soc_range: [20.0, 90.0],
            start_work_windows: vec![[8.0, 9.0], [12.0, 14.0]],
            start_work_window_weights: vec![0.7, 0.3],
            end_work_window: [17.0, 19.0],
            priority_fast_prob: 0.3,
            priority_des_prob: 0.5,
            battery_capacity_by_model: capacity,
            model_weights: weights,
        }
    }
}

/// When an EV counts as satisfied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SatisfactionMode {
    /// Started a charging session before leaving.
    #[default]
    SessionStarted,
    /// Reached 100% before leaving.
    ReachedFull,
}

/// Engine switches that are not part of the physical scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub satisfaction_mode: SatisfactionMode,
    /// Fraction of drawn energy that ends up in the vehicle battery.
    pub charger_efficiency: f64,
    pub commute_drain: bool,
    pub commute_kwh_per_km: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            satisfaction_mode: SatisfactionMode::SessionStarted,
            charger_efficiency: 1.0,
            commute_drain: false,
            commute_kwh_per_km: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub nb_electrical: u32,
    #[serde(default = "default_nb_gasoline")]
    pub nb_gasoline: u32,
    pub areas: Vec<ChargingAreaConfig>,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub policies: PolicySet,
    #[serde(default)]
    pub behavior: BehaviorParams,
    #[serde(default)]
    pub options: SimOptions,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default = "one")]
    pub horizon_days: u32,
    #[serde(default = "timestep")]
    pub timestep_minutes: u32,
    #[serde(default)]
    pub rng_seed: u64,
    /// `synthetic:q1`..`synthetic:q4`, `synthetic:annual` (optionally
    /// suffixed with `@<seed>`), or a path to a weather CSV.
    #[serde(default = "default_weather_ref")]
    pub weather_ref: String,
    /// Path to a GeoJSON site; the built-in campus site when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_ref: Option<String>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_nb_gasoline() -> u32 {
    30
}
fn one() -> u32 {
    1
}
fn timestep() -> u32 {
    TIMESTEP_MINUTES
}
fn default_weather_ref() -> String {
    "synthetic:annual".to_string()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::campus_baseline()
    }
}

impl ScenarioConfig {
    /// The policy-evaluation baseline: C-Parking (20×11 kW, 4×30 kW),
    /// J-Parking (15×11 kW, 4×30 kW), 50 EVs, 30 gasoline cars.
    pub fn campus_baseline() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            nb_electrical: 50,
            nb_gasoline: 30,
            areas: vec![
                ChargingAreaConfig::new("C-Parking", 20, 4),
                ChargingAreaConfig::new("J-Parking", 15, 4),
            ],
            energy: EnergyConfig::default(),
            policies: PolicySet::default(),
            behavior: BehaviorParams::default(),
            options: SimOptions::default(),
            metrics: MetricParams::default(),
            horizon_days: 1,
            timestep_minutes: TIMESTEP_MINUTES,
            rng_seed: 0,
            weather_ref: default_weather_ref(),
            site_ref: None,
        }
    }

    pub fn area(&self, area_id: &str) -> Option<&ChargingAreaConfig> {
        self.areas.iter().find(|a| a.area_id == area_id)
    }

    pub fn area_mut(&mut self, area_id: &str) -> Option<&mut ChargingAreaConfig> {
        self.areas.iter_mut().find(|a| a.area_id == area_id)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks every documented invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Engine-level checks only: the fleet-size range is not enforced so that
    /// degenerate fleets (e.g. zero EVs) can still be simulated.
    pub fn validate_for_engine(&self) -> Result<(), ConfigError> {
        let v: Vec<_> = self
            .violations()
            .into_iter()
            .filter(|v| v.field != "nb_electrical")
            .collect();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(Violation { field: field.to_string(), message });
        };

        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        let (lo, hi) = NB_ELECTRICAL_RANGE;
        if !(lo..=hi).contains(&self.nb_electrical) {
            bad("nb_electrical", format!("{} outside [{lo}, {hi}]", self.nb_electrical));
        }
        if self.timestep_minutes != TIMESTEP_MINUTES {
            bad("timestep_minutes", format!("must be {TIMESTEP_MINUTES}, got {}", self.timestep_minutes));
        }
        if self.horizon_days < 1 {
            bad("horizon_days", "must be at least 1".to_string());
        }
        if self.areas.is_empty() {
            bad("areas", "at least one charging area is required".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.areas.iter().enumerate() {
            if a.area_id.is_empty() {
                bad(&format!("areas[{i}].area_id"), "must not be empty".to_string());
            }
            if !seen.insert(a.area_id.as_str()) {
                bad(&format!("areas[{i}].area_id"), format!("duplicate area id {:?}", a.area_id));
            }
            if a.n_ports_11kw > PORTS_11KW_MAX {
                bad(&format!("areas[{i}].n_ports_11kW"), format!("{} outside [0, {PORTS_11KW_MAX}]", a.n_ports_11kw));
            }
            if a.n_ports_30kw > PORTS_30KW_MAX {
                bad(&format!("areas[{i}].n_ports_30kW"), format!("{} outside [0, {PORTS_30KW_MAX}]", a.n_ports_30kw));
            }
        }

        let p = &self.policies;
        if p.idle_fee_rate_vnd_per_min < 0 {
            bad("policies.idle_fee_rate_vnd_per_min", "must be >= 0".to_string());
        }
        check_prob(&mut bad, "policies.idle_comply_prob_per_check", p.idle_comply_prob_per_check);

        let b = &self.behavior;
        if !(0.0 <= b.soc_low_threshold && b.soc_low_threshold < b.soc_high_threshold && b.soc_high_threshold <= 100.0) {
            bad(
                "behavior.soc_low_threshold",
                format!("need 0 <= low < high <= 100, got low={} high={}", b.soc_low_threshold, b.soc_high_threshold),
            );
        }
        check_prob(&mut bad, "behavior.mid_charge_prob", b.mid_charge_prob);
        check_prob(&mut bad, "behavior.priority_fast_prob", b.priority_fast_prob);
        check_prob(&mut bad, "behavior.priority_des_prob", b.priority_des_prob);
        let [s_lo, s_hi] = b.arrival_soc_range;
        if !(0.0 <= s_lo && s_lo <= s_hi && s_hi <= 100.0) {
            bad("behavior.arrival_soc_range", format!("[{s_lo}, {s_hi}] not within [0, 100]"));
        }
        if b.start_work_windows.is_empty() {
            bad("behavior.start_work_windows", "at least one window is required".to_string());
        }
        for (i, w) in b.start_work_windows.iter().enumerate() {
            if !valid_window(w) {
                bad(&format!("behavior.start_work_windows[{i}]"), format!("{w:?} not an ordered window within [0, 24)"));
            }
        }
        if b.start_work_window_weights.len() != b.start_work_windows.len()
            || b.start_work_window_weights.iter().any(|w| !(*w >= 0.0))
            || b.start_work_window_weights.iter().sum::<f64>() <= 0.0
        {
            bad(
                "behavior.start_work_window_weights",
                "need one non-negative weight per window with a positive sum".to_string(),
            );
        }
        if !valid_window(&b.end_work_window) {
            bad("behavior.end_work_window", format!("{:?} not an ordered window within [0, 24)", b.end_work_window));
        }
        let latest_start = b.start_work_windows.iter().map(|w| w[1]).fold(0.0, f64::max);
        if valid_window(&b.end_work_window) && b.end_work_window[0] < latest_start {
            bad("behavior.end_work_window", "must start after every arrival window ends".to_string());
        }
        for (model, cap) in &b.battery_capacity_by_model {
            if !(*cap > 0.0) {
                bad(&format!("behavior.battery_capacity_by_model.{model}"), "must be > 0".to_string());
            }
        }
        if b.model_weights.is_empty() || b.model_weights.values().sum::<f64>() <= 0.0 {
            bad("behavior.model_weights", "need at least one model with positive weight".to_string());
        }
        for (model, w) in &b.model_weights {
            if !b.battery_capacity_by_model.contains_key(model) {
                bad(&format!("behavior.model_weights.{model}"), format!("unknown model id {model:?}"));
            }
            if !(*w >= 0.0) {
                bad(&format!("behavior.model_weights.{model}"), "must be >= 0".to_string());
            }
        }

        let e = &self.energy;
        let pv = &e.pv;
        for (name, val) in [
            ("k", pv.k),
            ("g_ref", pv.g_ref),
            ("p_stc", pv.p_stc),
            ("eta", pv.eta),
            ("beta_t", pv.beta_t),
            ("t_c_stc", pv.t_c_stc),
            ("noct", pv.noct),
            ("unit_panel_area", pv.unit_panel_area),
        ] {
            if !(val > 0.0) {
                bad(&format!("energy.pv.{name}"), "must be > 0".to_string());
            }
        }
        if pv.nb_solar > NB_SOLAR_MAX {
            bad("energy.pv.nb_solar", format!("{} outside [0, {NB_SOLAR_MAX}]", pv.nb_solar));
        }
        let w = &e.wind;
        if !(w.v_cut_in < w.v_rated && w.v_rated < w.v_cut_out) {
            bad("energy.wind.v_rated", "need v_cut_in < v_rated < v_cut_out".to_string());
        }
        if !(w.hub_height > 0.0 && w.ref_height > 0.0 && w.p_rated > 0.0) {
            bad("energy.wind", "heights and rated power must be > 0".to_string());
        }
        if w.nb_wind > NB_WIND_MAX {
            bad("energy.wind.nb_wind", format!("{} outside [0, {NB_WIND_MAX}]", w.nb_wind));
        }
        let s = &e.bess;
        if !(s.capacity_kwh >= 0.0) {
            bad("energy.bess.capacity_kwh", "must be >= 0".to_string());
        }
        if !(0.0 <= s.initial_soc_kwh && s.initial_soc_kwh <= s.capacity_kwh) {
            bad("energy.bess.initial_soc_kwh", "must lie in [0, capacity_kwh]".to_string());
        }
        for (name, eff) in [("charge_eff", s.charge_eff), ("discharge_eff", s.discharge_eff)] {
            if !(eff > 0.0 && eff <= 1.0) {
                bad(&format!("energy.bess.{name}"), format!("{eff} outside (0, 1]"));
            }
        }
        if e.grid_tariff_vnd_per_kwh < 0 {
            bad("energy.grid_tariff_vnd_per_kwh", "must be >= 0".to_string());
        }

        let o = &self.options;
        if !(o.charger_efficiency > 0.0 && o.charger_efficiency <= 1.0) {
            bad("options.charger_efficiency", format!("{} outside (0, 1]", o.charger_efficiency));
        }
        if !(self.metrics.payback_threshold_months > 0.0) {
            bad("metrics.payback_threshold_months", "must be > 0".to_string());
        }
        out
    }

    /// Content hash of the scenario with the seed removed, so that replicate
    /// runs of one scenario share a hash.
    pub fn scenario_hash(&self) -> String {
        let mut canon = self.clone();
        canon.rng_seed = 0;
        let bytes = serde_json::to_vec(&canon).expect("scenario serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }
}

fn valid_window(w: &[f64; 2]) -> bool {
    0.0 <= w[0] && w[0] <= w[1] && w[1] < 24.0
}

fn check_prob(bad: &mut impl FnMut(&str, String), field: &str, p: f64) {
    if !(0.0..=1.0).contains(&p) {
        bad(field, format!("{p} outside [0, 1]"));
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_json_str(&text)
}
