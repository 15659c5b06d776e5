//! Total-order sensitivity of simulator outputs to infrastructure and
//! policy factors.

use std::path::Path;
use std::sync::Arc;

use super::ExperimentError;
use crate::config::ScenarioConfig;
use crate::metrics::{evaluate_reports, MetricSet};
use crate::sim::{resolve_site, run_with, SimError};
use crate::stats::{sobol_matrix, Factor, SobolMatrix, SobolOptions};
use crate::weather::resolve_weather;

pub const SOBOL_OUTPUTS: [&str; 5] = ["satisfaction", "self_sufficiency", "self_consumption", "normalized_payback", "objective"];

fn grid(lower: i64, upper: i64, step: i64) -> Vec<f64> {
    (lower..=upper).step_by(step as usize).map(|v| v as f64).collect()
}

/// C-Parking port counts and panel count over their search ranges, plus
/// the three operational flags as on/off factors.
pub fn simulator_factors() -> Vec<Factor> {
    vec![
        Factor::discrete("n11_C", &grid(20, 50, 5)),
        Factor::discrete("n30_C", &grid(2, 10, 2)),
        Factor::discrete("nb_solar", &grid(200, 900, 100)),
        Factor::flag("notification"),
        Factor::flag("idle_fee"),
        Factor::flag("relocate_full"),
    ]
}

/// Writes one factor value into a scenario.
pub fn apply_factor(cfg: &mut ScenarioConfig, name: &str, value: f64) -> Result<(), ExperimentError> {
    let count = || -> Result<u32, ExperimentError> {
        if value >= 0.0 && value.fract() == 0.0 && value <= f64::from(u32::MAX) {
            Ok(value as u32)
        } else {
            Err(ExperimentError::Invalid(format!("factor {name} needs a non-negative integer, got {value}")))
        }
    };
    let on = value >= 0.5;
    match name {
        "nb_solar" | "solar" => cfg.energy.pv.nb_solar = count()?,
        "nb_wind" | "wind" => cfg.energy.wind.nb_wind = count()?,
        "bess_kwh" => cfg.energy.bess.capacity_kwh = value,
        "nb_electrical" => cfg.nb_electrical = count()?,
        "ban_gasoline" => cfg.policies.ban_gasoline = on,
        "idle_fee" => cfg.policies.idle_fee = on,
        "relocate_full" => cfg.policies.relocate_full = on,
        "notification" => cfg.policies.notification = on,
        other => {
            let unknown = || ExperimentError::UnknownFactor(other.to_string());
            let (kind, suffix) = other.split_once('_').ok_or_else(unknown)?;
            let area = cfg.area_mut(&format!("{suffix}-Parking")).ok_or_else(unknown)?;
            match kind {
                "n11" => area.n_ports_11kw = count()?,
                "n30" => area.n_ports_30kw = count()?,
                _ => return Err(unknown()),
            }
        }
    }
    Ok(())
}

fn pick(m: &MetricSet, output: &str) -> f64 {
    match output {
        "satisfaction" => m.satisfaction,
        "self_sufficiency" => m.self_sufficiency,
        "self_consumption" => m.self_consumption,
        "normalized_payback" => m.normalized_payback,
        _ => m.objective,
    }
}

/// Sobol total-order indices of the chosen metric outputs. Every sample
/// point runs with `base.rng_seed`, so index differences come from the
/// factors and not from replicate noise.
pub fn sobol_campaign(
    base: &ScenarioConfig,
    factors: &[Factor],
    outputs: &[String],
    opts: &SobolOptions,
    base_dir: Option<&Path>,
) -> Result<SobolMatrix, ExperimentError> {
    for o in outputs {
        if !SOBOL_OUTPUTS.contains(&o.as_str()) {
            return Err(ExperimentError::Invalid(format!("unknown output {o:?}; expected one of {}", SOBOL_OUTPUTS.join(", "))));
        }
    }
    // every factor value must map onto a runnable scenario
    for f in factors {
        for u in [0.0, 0.999_999] {
            let mut c = base.clone();
            apply_factor(&mut c, f.name(), f.map(u))?;
            c.validate_for_engine()?;
        }
    }
    let weather = Arc::new(
        resolve_weather(&base.weather_ref, base_dir, base.horizon_days as usize).map_err(SimError::from)?,
    );
    let site = Arc::new(resolve_site(base, base_dir).map_err(SimError::from)?);
    let model = |x: &[f64]| -> Vec<f64> {
        let mut c = base.clone();
        for (f, v) in factors.iter().zip(x) {
            apply_factor(&mut c, f.name(), *v).expect("checked above");
        }
        let reports = run_with(&c, weather.clone(), site.clone()).expect("validated scenario runs");
        let m = evaluate_reports(&reports, &c.energy, &c.metrics).expect("at least one day");
        outputs.iter().map(|o| pick(&m, o)).collect()
    };
    Ok(sobol_matrix(model, factors, outputs, opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_mapping() {
        let mut c = ScenarioConfig::campus_baseline();
        apply_factor(&mut c, "n11_C", 45.0).unwrap();
        apply_factor(&mut c, "n30_J", 6.0).unwrap();
        apply_factor(&mut c, "notification", 1.0).unwrap();
        apply_factor(&mut c, "nb_solar", 300.0).unwrap();
        assert_eq!(c.area("C-Parking").unwrap().n_ports_11kw, 45);
        assert_eq!(c.area("J-Parking").unwrap().n_ports_30kw, 6);
        assert!(c.policies.notification);
        assert_eq!(c.energy.pv.nb_solar, 300);
        assert!(matches!(apply_factor(&mut c, "n11_Z", 1.0), Err(ExperimentError::UnknownFactor(_))));
        assert!(apply_factor(&mut c, "n11_C", 2.5).is_err());
    }

    #[test]
    fn simulator_sweep_ranks_solar_for_self_sufficiency() {
        let mut base = ScenarioConfig::campus_baseline();
        base.nb_electrical = 150;
        base.rng_seed = 4;
        let outputs = vec!["satisfaction".to_string(), "self_sufficiency".to_string()];
        let m = sobol_campaign(&base, &simulator_factors(), &outputs, &SobolOptions::new(64, 1), None).unwrap();
        assert_eq!(m.st.len(), 6);
        assert_eq!(m.evaluations, 64 * 8);
        let col: Vec<f64> = m.st.iter().map(|r| r[1]).collect();
        let solar = col[2];
        assert!(col.iter().all(|v| *v <= solar + 1e-12), "{col:?}");
        assert!(m.st.iter().flatten().all(|v| *v >= -0.02));
    }
}
