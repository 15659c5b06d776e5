//! Renewable generation, battery dispatch and the energy/money ledger.
//!
//! Generation is computed per panel and per turbine, then scaled by the
//! installed counts. Dispatch is greedy: renewables serve the charging load
//! first, surplus charges the battery, deficits discharge it, and whatever is
//! left comes from the grid.

use serde::{Deserialize, Serialize};

use crate::config::STEP_HOURS;

/// Irradiance used by the NOCT cell temperature model.
const NOCT_IRRADIANCE: f64 = 800.0;
/// Ambient temperature used by the NOCT cell temperature model.
const NOCT_AMBIENT: f64 = 20.0;

/// Bifacial PV panel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvParams {
    /// Bifacial absorption factor.
    pub k: f64,
    /// Reference irradiance, W/m².
    pub g_ref: f64,
    /// Rated panel power at standard test conditions, W.
    pub p_stc: f64,
    /// Absorption efficiency.
    pub eta: f64,
    /// Power degradation per °C above `t_c_stc`.
    pub beta_t: f64,
    pub t_c_stc: f64,
    /// Nominal operating cell temperature, °C.
    pub noct: f64,
    pub nb_solar: u32,
    /// m² per panel.
    pub unit_panel_area: f64,
    pub unit_panel_cost_vnd: i64,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            k: 1.15,
            g_ref: 800.0,
            p_stc: 610.0,
            eta: 0.226,
            beta_t: 0.0028,
            t_c_stc: 25.0,
            noct: 45.0,
            nb_solar: 500,
            unit_panel_area: 2.7,
            unit_panel_cost_vnd: 3_000_000,
        }
    }
}

impl PvParams {
    pub fn total_panel_area(&self) -> f64 {
        f64::from(self.nb_solar) * self.unit_panel_area
    }
}

/// Small wind turbine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindParams {
    /// Rated power, W.
    pub p_rated: f64,
    pub v_cut_in: f64,
    pub v_cut_out: f64,
    pub v_rated: f64,
    /// Hub height, m.
    pub hub_height: f64,
    /// Height of the wind measurement, m.
    pub ref_height: f64,
    /// Power-law wind shear exponent.
    pub shear_alpha: f64,
    pub nb_wind: u32,
    pub unit_turbine_cost_vnd: i64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            p_rated: 3000.0,
            v_cut_in: 3.5,
            v_cut_out: 45.0,
            v_rated: 12.0,
            hub_height: 100.0,
            ref_height: 10.0,
            shear_alpha: 0.14,
            nb_wind: 0,
            unit_turbine_cost_vnd: 40_000_000,
        }
    }
}

/// Battery storage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BessParams {
    pub capacity_kwh: f64,
    pub initial_soc_kwh: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    pub unit_cost_vnd_per_kwh: i64,
}

impl Default for BessParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 80.0,
            initial_soc_kwh: 0.0,
            charge_eff: 0.95,
            discharge_eff: 0.95,
            unit_cost_vnd_per_kwh: 4_000_000,
        }
    }
}

/// Everything the energy sub-model needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub pv: PvParams,
    pub wind: WindParams,
    pub bess: BessParams,
    /// Avoided grid cost per kWh of renewable energy served.
    pub grid_tariff_vnd_per_kwh: i64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            pv: PvParams::default(),
            wind: WindParams::default(),
            bess: BessParams::default(),
            grid_tariff_vnd_per_kwh: 3_000,
        }
    }
}

impl EnergyConfig {
    /// Capital cost of the renewable system (panels, turbines, storage).
    pub fn investment_vnd(&self) -> i64 {
        i64::from(self.pv.nb_solar) * self.pv.unit_panel_cost_vnd
            + i64::from(self.wind.nb_wind) * self.wind.unit_turbine_cost_vnd
            + (self.bess.capacity_kwh * self.bess.unit_cost_vnd_per_kwh as f64).round() as i64
    }

    /// Station-wide generation over one timestep, kWh.
    pub fn step_generation(&self, ghi: f64, air_temp: f64, wind_ref: f64) -> Generation {
        let solar_w = f64::from(self.pv.nb_solar) * pv_power(ghi, air_temp, &self.pv);
        let v_hub = wind_speed_at_hub(wind_ref, &self.wind);
        let wind_w = f64::from(self.wind.nb_wind) * wind_power(v_hub, &self.wind);
        Generation {
            solar_kwh: solar_w * STEP_HOURS / 1000.0,
            wind_kwh: wind_w * STEP_HOURS / 1000.0,
        }
    }
}

/// Renewable energy produced in one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub solar_kwh: f64,
    pub wind_kwh: f64,
}

impl Generation {
    pub fn total(&self) -> f64 {
        self.solar_kwh + self.wind_kwh
    }
}

/// NOCT cell temperature model.
pub fn cell_temperature(air_temp: f64, ghi: f64, noct: f64) -> f64 {
    air_temp + (noct - NOCT_AMBIENT) * ghi / NOCT_IRRADIANCE
}

/// Output of a single PV panel, W.
pub fn pv_power(ghi: f64, air_temp: f64, params: &PvParams) -> f64 {
    let t_cell = cell_temperature(air_temp, ghi, params.noct);
    pv_power_at_cell_temp(ghi, t_cell, params)
}

/// Output of a single PV panel for a known cell temperature, W.
pub fn pv_power_at_cell_temp(ghi: f64, t_cell: f64, params: &PvParams) -> f64 {
    let derate = 1.0 - params.beta_t * (t_cell - params.t_c_stc);
    let p = params.k * (ghi / params.g_ref) * params.p_stc * params.eta * derate;
    p.max(0.0)
}

/// Power-law extrapolation of a reference-height wind speed to hub height.
pub fn wind_speed_at_hub(v_ref: f64, params: &WindParams) -> f64 {
    v_ref * (params.hub_height / params.ref_height).powf(params.shear_alpha)
}

/// Output of a single turbine, W.
pub fn wind_power(v_hub: f64, params: &WindParams) -> f64 {
    if v_hub <= params.v_cut_in || v_hub >= params.v_cut_out {
        0.0
    } else if v_hub <= params.v_rated {
        let ci3 = params.v_cut_in.powi(3);
        params.p_rated * (v_hub.powi(3) - ci3) / (params.v_rated.powi(3) - ci3)
    } else {
        params.p_rated
    }
}

/// Runtime battery state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BessState {
    pub capacity_kwh: f64,
    pub soc_kwh: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
}

impl BessState {
    pub fn new(params: &BessParams) -> Self {
        Self {
            capacity_kwh: params.capacity_kwh,
            soc_kwh: params.initial_soc_kwh.clamp(0.0, params.capacity_kwh),
            charge_eff: params.charge_eff,
            discharge_eff: params.discharge_eff,
        }
    }

    pub fn empty(capacity_kwh: f64, eff: f64) -> Self {
        Self { capacity_kwh, soc_kwh: 0.0, charge_eff: eff, discharge_eff: eff }
    }
}

/// Energy flows of one dispatch step, kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepFlows {
    pub solar_kwh: f64,
    pub wind_kwh: f64,
    pub demand_kwh: f64,
    /// Renewable energy consumed directly by chargers.
    pub direct_kwh: f64,
    /// Surplus taken into the battery (before charge losses).
    pub bess_in_kwh: f64,
    /// Energy added to the battery state of charge.
    pub bess_stored_kwh: f64,
    /// Energy removed from the battery state of charge.
    pub bess_drawn_kwh: f64,
    /// Energy delivered by the battery to chargers (after discharge losses).
    pub bess_out_kwh: f64,
    pub curtailed_kwh: f64,
    pub grid_import_kwh: f64,
}

impl StepFlows {
    pub fn renewable_served_kwh(&self) -> f64 {
        self.direct_kwh + self.bess_out_kwh
    }

    /// `demand - (direct + battery + grid)`; zero up to rounding.
    pub fn balance_residual(&self) -> f64 {
        self.demand_kwh - (self.direct_kwh + self.bess_out_kwh + self.grid_import_kwh)
    }
}

/// Accumulated energy and money. Every field only ever grows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub solar_generated_kwh: f64,
    pub wind_generated_kwh: f64,
    pub demand_kwh: f64,
    pub renewable_served_kwh: f64,
    pub grid_import_kwh: f64,
    pub curtailed_kwh: f64,
    pub bess_charged_kwh: f64,
    pub bess_discharged_kwh: f64,
    pub idle_fee_revenue_vnd: i64,
    pub steps: u64,
}

impl EnergyLedger {
    pub fn renewable_generated_kwh(&self) -> f64 {
        self.solar_generated_kwh + self.wind_generated_kwh
    }

    pub fn record(&mut self, flows: &StepFlows) {
        self.solar_generated_kwh += flows.solar_kwh;
        self.wind_generated_kwh += flows.wind_kwh;
        self.demand_kwh += flows.demand_kwh;
        self.renewable_served_kwh += flows.renewable_served_kwh();
        self.grid_import_kwh += flows.grid_import_kwh;
        self.curtailed_kwh += flows.curtailed_kwh;
        self.bess_charged_kwh += flows.bess_in_kwh;
        self.bess_discharged_kwh += flows.bess_out_kwh;
        self.steps += 1;
    }

    pub fn add_fee(&mut self, vnd: i64) {
        debug_assert!(vnd >= 0);
        self.idle_fee_revenue_vnd += vnd;
    }

    /// Sum of two ledgers, e.g. to combine per-day ledgers into a run total.
    pub fn merged(&self, other: &EnergyLedger) -> EnergyLedger {
        EnergyLedger {
            solar_generated_kwh: self.solar_generated_kwh + other.solar_generated_kwh,
            wind_generated_kwh: self.wind_generated_kwh + other.wind_generated_kwh,
            demand_kwh: self.demand_kwh + other.demand_kwh,
            renewable_served_kwh: self.renewable_served_kwh + other.renewable_served_kwh,
            grid_import_kwh: self.grid_import_kwh + other.grid_import_kwh,
            curtailed_kwh: self.curtailed_kwh + other.curtailed_kwh,
            bess_charged_kwh: self.bess_charged_kwh + other.bess_charged_kwh,
            bess_discharged_kwh: self.bess_discharged_kwh + other.bess_discharged_kwh,
            idle_fee_revenue_vnd: self.idle_fee_revenue_vnd + other.idle_fee_revenue_vnd,
            steps: self.steps + other.steps,
        }
    }

    pub fn days(&self) -> f64 {
        self.steps as f64 / crate::config::STEPS_PER_DAY as f64
    }
}

/// Greedy dispatch of one step. Returns the flows; `ledger` and `bess` are
/// updated in place.
pub fn step_energy(
    ledger: &mut EnergyLedger,
    bess: &mut BessState,
    generation: Generation,
    demand_kwh: f64,
) -> StepFlows {
    debug_assert!(demand_kwh >= 0.0);
    let gen = generation.total().max(0.0);
    let demand = demand_kwh.max(0.0);
    let mut flows = StepFlows {
        solar_kwh: generation.solar_kwh,
        wind_kwh: generation.wind_kwh,
        demand_kwh: demand,
        ..StepFlows::default()
    };

    flows.direct_kwh = gen.min(demand);
    let surplus = gen - flows.direct_kwh;
    let mut deficit = demand - flows.direct_kwh;

    if surplus > 0.0 {
        let headroom = (bess.capacity_kwh - bess.soc_kwh).max(0.0);
        let accepted = if bess.charge_eff > 0.0 { surplus.min(headroom / bess.charge_eff) } else { 0.0 };
        let stored = (accepted * bess.charge_eff).min(headroom);
        bess.soc_kwh = (bess.soc_kwh + stored).min(bess.capacity_kwh);
        flows.bess_in_kwh = accepted;
        flows.bess_stored_kwh = stored;
        flows.curtailed_kwh = surplus - accepted;
    }

    if deficit > 0.0 && bess.soc_kwh > 0.0 && bess.discharge_eff > 0.0 {
        let deliverable = bess.soc_kwh * bess.discharge_eff;
        let out = deficit.min(deliverable);
        let drawn = if out >= deliverable { bess.soc_kwh } else { out / bess.discharge_eff };
        bess.soc_kwh = (bess.soc_kwh - drawn).max(0.0);
        flows.bess_out_kwh = out;
        flows.bess_drawn_kwh = drawn;
        deficit -= out;
    }

    flows.grid_import_kwh = deficit.max(0.0);
    ledger.record(&flows);
    flows
}

/// Money view of a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinancialSummary {
    pub investment_vnd: i64,
    pub monthly_profit_vnd: i64,
    /// `None` when the monthly profit is not positive (never pays back).
    pub payback_months: Option<f64>,
}

/// Investment, monthly profit (avoided grid cost plus idle fees, per 30-day
/// month) and payback period.
pub fn financial_summary(ledger: &EnergyLedger, energy: &EnergyConfig) -> FinancialSummary {
    let investment = energy.investment_vnd();
    let days = ledger.days().max(f64::MIN_POSITIVE);
    let served_per_day = ledger.renewable_served_kwh / days;
    let fees_per_day = ledger.idle_fee_revenue_vnd as f64 / days;
    let monthly = (served_per_day * energy.grid_tariff_vnd_per_kwh as f64 + fees_per_day) * 30.0;
    let monthly_profit = monthly.round() as i64;
    let payback_months = if monthly_profit > 0 {
        Some(investment as f64 / monthly_profit as f64)
    } else {
        None
    };
    FinancialSummary { investment_vnd: investment, monthly_profit_vnd: monthly_profit, payback_months }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cell_temperature_examples() {
        assert!(close(cell_temperature(25.0, 0.0, 45.0), 25.0, 1e-12));
        assert!(close(cell_temperature(30.0, 800.0, 45.0), 55.0, 1e-12));
        assert!(close(cell_temperature(20.0, 400.0, 45.0), 32.5, 1e-12));
    }

    #[test]
    fn pv_reference_case() {
        let p = PvParams::default();
        // k * P_stc * eta = 1.15 * 610 * 0.226
        assert!(close(pv_power_at_cell_temp(800.0, 25.0, &p), 158.539, 1e-9));
        assert!(close(pv_power_at_cell_temp(400.0, 35.0, &p), 77.05, 0.01));
        assert_eq!(pv_power(0.0, 35.0, &p), 0.0);
        assert_eq!(pv_power(0.0, -5.0, &p), 0.0);
    }

    #[test]
    fn pv_clamps_at_zero_for_absurd_temperature() {
        let p = PvParams::default();
        assert_eq!(pv_power_at_cell_temp(800.0, 500.0, &p), 0.0);
    }

    #[test]
    fn wind_curve() {
        let w = WindParams::default();
        assert_eq!(wind_power(3.0, &w), 0.0);
        assert_eq!(wind_power(3.5, &w), 0.0);
        assert_eq!(wind_power(12.0, &w), 3000.0);
        assert_eq!(wind_power(30.0, &w), 3000.0);
        assert_eq!(wind_power(45.0, &w), 0.0);
        assert!(close(wind_power(8.0, &w), 835.2, 0.1));
    }

    #[test]
    fn hub_height_shear() {
        let mut w = WindParams::default();
        assert!(close(wind_speed_at_hub(5.0, &w), 6.90, 0.01));
        assert_eq!(wind_speed_at_hub(0.0, &w), 0.0);
        w.hub_height = w.ref_height;
        assert_eq!(wind_speed_at_hub(5.0, &w), 5.0);
    }

    #[test]
    fn dispatch_surplus_charges_battery() {
        let mut ledger = EnergyLedger::default();
        let mut bess = BessState::empty(80.0, 0.95);
        let gen = Generation { solar_kwh: 10.0, wind_kwh: 0.0 };
        let f = step_energy(&mut ledger, &mut bess, gen, 4.0);
        assert!(close(f.direct_kwh, 4.0, 1e-12));
        assert!(close(bess.soc_kwh, 5.7, 1e-12));
        assert_eq!(f.grid_import_kwh, 0.0);
        assert_eq!(f.curtailed_kwh, 0.0);
    }

    #[test]
    fn dispatch_deficit_discharges_battery() {
        let mut ledger = EnergyLedger::default();
        let mut bess = BessState::empty(80.0, 0.95);
        bess.soc_kwh = 10.0;
        let f = step_energy(&mut ledger, &mut bess, Generation::default(), 5.0);
        assert!(close(f.bess_out_kwh, 5.0, 1e-12));
        assert!(close(f.bess_drawn_kwh, 5.0 / 0.95, 1e-9));
        assert!(close(bess.soc_kwh, 10.0 - 5.263_157_894_7, 1e-9));
        assert_eq!(f.grid_import_kwh, 0.0);
    }

    #[test]
    fn dispatch_empty_battery_imports() {
        let mut ledger = EnergyLedger::default();
        let mut bess = BessState::empty(80.0, 0.95);
        let f = step_energy(&mut ledger, &mut bess, Generation::default(), 5.0);
        assert_eq!(f.grid_import_kwh, 5.0);
        assert_eq!(ledger.grid_import_kwh, 5.0);
    }

    #[test]
    fn full_battery_curtails() {
        let mut ledger = EnergyLedger::default();
        let mut bess = BessState::empty(10.0, 0.95);
        bess.soc_kwh = 9.5;
        let f = step_energy(&mut ledger, &mut bess, Generation { solar_kwh: 3.0, wind_kwh: 0.0 }, 0.0);
        assert!(close(bess.soc_kwh, 10.0, 1e-12));
        assert!(close(f.bess_in_kwh, 0.5 / 0.95, 1e-12));
        assert!(close(f.curtailed_kwh, 3.0 - 0.5 / 0.95, 1e-12));
    }

    #[test]
    fn payback_examples() {
        let ledger = EnergyLedger { steps: 288, ..EnergyLedger::default() };
        let energy = EnergyConfig::default();
        assert_eq!(financial_summary(&ledger, &energy).payback_months, None);

        // 120e6 investment, 2e6/month profit.
        let mut energy = EnergyConfig::default();
        energy.pv.nb_solar = 40;
        energy.pv.unit_panel_cost_vnd = 3_000_000;
        energy.bess.capacity_kwh = 0.0;
        energy.grid_tariff_vnd_per_kwh = 2_000;
        let ledger = EnergyLedger { steps: 288, renewable_served_kwh: 2_000_000.0 / 30.0 / 2_000.0, ..ledger };
        let s = financial_summary(&ledger, &energy);
        assert_eq!(s.investment_vnd, 120_000_000);
        assert_eq!(s.monthly_profit_vnd, 2_000_000);
        assert!(close(s.payback_months.unwrap(), 60.0, 1e-9));

        energy.grid_tariff_vnd_per_kwh = 4_000;
        let doubled = financial_summary(&ledger, &energy);
        assert!(close(doubled.payback_months.unwrap(), 30.0, 1e-9));
    }
}
