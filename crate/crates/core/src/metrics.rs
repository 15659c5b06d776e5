//! Evaluation metrics and the scalar objective used by the optimizers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{financial_summary, EnergyConfig, EnergyLedger};
use crate::sim::DayReport;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("payback threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("no day reports to aggregate")]
    NoReports,
}

/// How payback months are mapped into `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaybackNormalization {
    /// `x / T` up to the threshold, `exp((T - x) / T)` beyond it.
    #[default]
    Printed,
    /// Decreasing alternative: `1 - x / (2T)` up to the threshold,
    /// `0.5 * exp((T - x) / T)` beyond it. Shorter paybacks always score higher.
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub payback_threshold_months: f64,
    pub self_sufficiency_weight: f64,
    pub payback_normalization: PaybackNormalization,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            payback_threshold_months: 60.0,
            self_sufficiency_weight: 0.8,
            payback_normalization: PaybackNormalization::Printed,
        }
    }
}

/// One flat record of run metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub satisfaction: f64,
    pub self_sufficiency: f64,
    pub self_consumption: f64,
    /// `None` means the investment never pays back.
    pub payback_months: Option<f64>,
    pub normalized_payback: f64,
    pub objective: f64,
    pub payback_threshold_months: f64,
}

impl MetricSet {
    /// Builds a set from the three objective components using the default weight.
    pub fn from_components(satisfaction: f64, normalized_payback: f64, self_sufficiency: f64) -> Self {
        let mut m = MetricSet {
            satisfaction,
            self_sufficiency,
            self_consumption: 1.0,
            payback_months: None,
            normalized_payback,
            objective: 0.0,
            payback_threshold_months: 60.0,
        };
        m.objective = objective(&m, MetricParams::default().self_sufficiency_weight);
        m
    }
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Satisfied over requested EVs across all reports; 1.0 when nothing was requested.
pub fn satisfaction(reports: &[DayReport]) -> f64 {
    let requested: u64 = reports.iter().map(|r| u64::from(r.ev_requested)).sum();
    let satisfied: u64 = reports.iter().map(|r| u64::from(r.ev_satisfied)).sum();
    satisfaction_from_counts(satisfied, requested)
}

pub fn satisfaction_from_counts(satisfied: u64, requested: u64) -> f64 {
    if requested == 0 {
        1.0
    } else {
        satisfied as f64 / requested as f64
    }
}

/// Renewable-served energy over total charging demand.
pub fn self_sufficiency(ledger: &EnergyLedger) -> f64 {
    ratio_or_one(ledger.renewable_served_kwh, ledger.demand_kwh)
}

/// Renewable-served energy over renewable generation.
pub fn self_consumption(ledger: &EnergyLedger) -> f64 {
    ratio_or_one(ledger.renewable_served_kwh, ledger.renewable_generated_kwh())
}

/// Maps a payback period onto `[0, 1]`. `None` (never pays back) maps to 0.
pub fn normalize_payback(months: Option<f64>, threshold: f64) -> Result<f64, MetricsError> {
    normalize_payback_with(months, threshold, PaybackNormalization::Printed)
}

pub fn normalize_payback_with(
    months: Option<f64>,
    threshold: f64,
    mode: PaybackNormalization,
) -> Result<f64, MetricsError> {
    if !(threshold > 0.0) {
        return Err(MetricsError::NonPositiveThreshold(threshold));
    }
    let Some(x) = months else { return Ok(0.0) };
    if !x.is_finite() {
        return Ok(0.0);
    }
    let x = x.max(0.0);
    let tail = ((threshold - x) / threshold).exp();
    Ok(match mode {
        PaybackNormalization::Printed => {
            if x <= threshold {
                x / threshold
            } else {
                tail
            }
        }
        PaybackNormalization::Decreasing => {
            if x <= threshold {
                1.0 - x / (2.0 * threshold)
            } else {
                0.5 * tail
            }
        }
    })
}

/// `satisfaction + normalized_payback + weight * self_sufficiency`.
pub fn objective(m: &MetricSet, self_sufficiency_weight: f64) -> f64 {
    m.satisfaction + m.normalized_payback + self_sufficiency_weight * m.self_sufficiency
}

/// Aggregates a run's day reports into a metric set.
pub fn evaluate_reports(
    reports: &[DayReport],
    energy: &EnergyConfig,
    params: &MetricParams,
) -> Result<MetricSet, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let ledger = reports
        .iter()
        .fold(EnergyLedger::default(), |acc, r| acc.merged(&r.ledger));
    let fin = financial_summary(&ledger, energy);
    let normalized = normalize_payback_with(
        fin.payback_months,
        params.payback_threshold_months,
        params.payback_normalization,
    )?;
    let mut m = MetricSet {
        satisfaction: satisfaction(reports),
        self_sufficiency: self_sufficiency(&ledger),
        self_consumption: self_consumption(&ledger),
        payback_months: fin.payback_months,
        normalized_payback: normalized,
        objective: 0.0,
        payback_threshold_months: params.payback_threshold_months,
    };
    m.objective = objective(&m, params.self_sufficiency_weight);
    Ok(m)
}
