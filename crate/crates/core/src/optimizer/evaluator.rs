//! Cached, budgeted objective evaluation.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::SearchSpace;
use super::OptimizerError;
use crate::config::ScenarioConfig;
use crate::metrics::{evaluate_reports, MetricSet};
use crate::sim::run_with;
use crate::site::SiteGraph;
use crate::weather::WeatherSeries;

/// Black-box objective to maximize.
pub trait Objective: Sync {
    fn evaluate(&self, values: &[i64]) -> Outcome;

    /// Seeds the value depends on; part of the cache identity.
    fn seeds(&self) -> Vec<u64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub objective: f64,
    pub metrics: Option<MetricSet>,
}

impl<F: Fn(&[i64]) -> f64 + Sync> Objective for F {
    fn evaluate(&self, values: &[i64]) -> Outcome {
        Outcome { objective: self(values), metrics: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub values: Vec<i64>,
    /// Which algorithm and iteration first produced it.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub candidate: Candidate,
    pub metrics: Option<MetricSet>,
    pub objective: f64,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

/// Wraps an objective with a cache and an evaluation budget. Only cache
/// misses count against the budget.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    cache: HashMap<Vec<i64>, EvalResult>,
    budget: usize,
    used: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, budget: usize) -> Self {
        Self { objective, cache: HashMap::new(), budget, used: 0 }
    }

    pub fn unlimited(objective: &'a dyn Objective) -> Self {
        Self::new(objective, usize::MAX)
    }

    pub fn evaluations_used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.used
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    pub fn distinct_visited(&self) -> usize {
        self.cache.len()
    }

    pub fn cached(&self, values: &[i64]) -> Option<&EvalResult> {
        self.cache.get(values)
    }

    pub fn results(&self) -> impl Iterator<Item = &EvalResult> {
        self.cache.values()
    }

    /// Objective of one point, or `None` when it is uncached and the budget
    /// is spent.
    pub fn evaluate(&mut self, values: &[i64], provenance: &str) -> Option<f64> {
        self.evaluate_batch(&[values.to_vec()], provenance)[0]
    }

    /// Evaluates a batch; uncached points run in parallel. The points that
    /// fit in the remaining budget are chosen in batch order, so the result
    /// does not depend on thread scheduling.
    pub fn evaluate_batch(&mut self, points: &[Vec<i64>], provenance: &str) -> Vec<Option<f64>> {
        let mut fresh: Vec<Vec<i64>> = Vec::new();
        for p in points {
            if !self.cache.contains_key(p) && !fresh.contains(p) && fresh.len() < self.remaining() {
                fresh.push(p.clone());
            }
        }
        let objective = self.objective;
        let seeds = objective.seeds();
        let computed: Vec<EvalResult> = fresh
            .par_iter()
            .map(|values| {
                let start = Instant::now();
                let out = objective.evaluate(values);
                EvalResult {
                    candidate: Candidate { values: values.clone(), provenance: provenance.to_string() },
                    metrics: out.metrics,
                    objective: out.objective,
                    seeds: seeds.clone(),
                    wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                }
            })
            .collect();
        self.used += computed.len();
        for r in computed {
            self.cache.insert(r.candidate.values.clone(), r);
        }
        points.iter().map(|p| self.cache.get(p).map(|r| r.objective)).collect()
    }
}

/// Maps a search-space point onto a scenario and scores it by simulation,
/// averaging the objective over `seeds`.
pub struct SimulatorObjective {
    pub base: ScenarioConfig,
    pub space: SearchSpace,
    pub seeds: Vec<u64>,
    pub weather: Arc<WeatherSeries>,
    pub site: Arc<SiteGraph>,
}

impl SimulatorObjective {
    pub fn new(
        base: ScenarioConfig,
        space: SearchSpace,
        seeds: Vec<u64>,
        weather: Arc<WeatherSeries>,
        site: Arc<SiteGraph>,
    ) -> Result<Self, OptimizerError> {
        if seeds.is_empty() {
            return Err(OptimizerError::NoSeeds);
        }
        let obj = Self { base, space, seeds, weather, site };
        let lower: Vec<i64> = obj.space.dims.iter().map(|d| d.lower).collect();
        let upper: Vec<i64> = obj.space.dims.iter().map(|d| d.upper).collect();
        for corner in [lower, upper] {
            let cfg = obj.apply(&corner, obj.seeds[0])?;
            crate::sim::World::new(cfg, obj.weather.clone(), obj.site.clone()).map_err(OptimizerError::Sim)?;
        }
        Ok(obj)
    }

    /// The scenario for a point, with the given simulation seed.
    pub fn apply(&self, values: &[i64], seed: u64) -> Result<ScenarioConfig, OptimizerError> {
        apply_point(&self.base, &self.space, values, seed)
    }

    pub fn metrics(&self, values: &[i64]) -> MetricSet {
        let sets: Vec<MetricSet> = self
            .seeds
            .iter()
            .map(|&seed| {
                let cfg = self.apply(values, seed).expect("point maps onto a scenario");
                let reports = run_with(&cfg, self.weather.clone(), self.site.clone()).expect("validated scenario runs");
                evaluate_reports(&reports, &cfg.energy, &cfg.metrics).expect("at least one day")
            })
            .collect();
        mean_metrics(&sets)
    }
}

impl Objective for SimulatorObjective {
    fn evaluate(&self, values: &[i64]) -> Outcome {
        let m = self.metrics(values);
        Outcome { objective: m.objective, metrics: Some(m) }
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone()
    }
}

/// Component-wise mean; payback is `None` unless every set pays back.
pub fn mean_metrics(sets: &[MetricSet]) -> MetricSet {
    let n = sets.len() as f64;
    let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
    let finite: Vec<f64> = sets.iter().filter_map(|m| m.payback_months).collect();
    MetricSet {
        satisfaction: avg(|m| m.satisfaction),
        self_sufficiency: avg(|m| m.self_sufficiency),
        self_consumption: avg(|m| m.self_consumption),
        payback_months: (finite.len() == sets.len()).then(|| finite.iter().sum::<f64>() / n),
        normalized_payback: avg(|m| m.normalized_payback),
        objective: avg(|m| m.objective),
        payback_threshold_months: sets[0].payback_threshold_months,
    }
}

/// Writes a point's dimension values into a copy of `base`.
pub fn apply_point(base: &ScenarioConfig, space: &SearchSpace, values: &[i64], seed: u64) -> Result<ScenarioConfig, OptimizerError> {
    if values.len() != space.len() {
        return Err(OptimizerError::DimensionMismatch { expected: space.len(), got: values.len() });
    }
    let mut cfg = base.clone();
    cfg.rng_seed = seed;
    for (d, &v) in space.dims.iter().zip(values) {
        let v = u32::try_from(v).map_err(|_| OptimizerError::BadValue(d.name.clone(), v))?;
        match d.name.as_str() {
            "solar" | "nb_solar" => cfg.energy.pv.nb_solar = v,
            "wind" | "nb_wind" => cfg.energy.wind.nb_wind = v,
            "bess_kwh" => cfg.energy.bess.capacity_kwh = f64::from(v),
            "nb_electrical" => cfg.nb_electrical = v,
            name => {
                let (kind, suffix) = name.split_once('_').ok_or_else(|| OptimizerError::UnknownDimension(name.to_string()))?;
                let area_id = format!("{suffix}-Parking");
                let i = cfg
                    .areas
                    .iter()
                    .position(|a| a.area_id == area_id)
                    .ok_or_else(|| OptimizerError::UnknownDimension(name.to_string()))?;
                match kind {
                    "n11" => cfg.areas[i].n_ports_11kw = v,
                    "n30" => cfg.areas[i].n_ports_30kw = v,
                    _ => return Err(OptimizerError::UnknownDimension(name.to_string())),
                }
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl Objective for Counting {
        fn evaluate(&self, values: &[i64]) -> Outcome {
            self.0.fetch_add(1, Ordering::SeqCst);
            Outcome { objective: values.iter().sum::<i64>() as f64, metrics: None }
        }
    }

    #[test]
    fn cache_hits_are_free() {
        let obj = Counting(AtomicUsize::new(0));
        let mut ev = Evaluator::new(&obj, 3);
        assert_eq!(ev.evaluate(&[1, 2], "t"), Some(3.0));
        assert_eq!(ev.evaluate(&[1, 2], "t"), Some(3.0));
        assert_eq!(ev.evaluations_used(), 1);
        let out = ev.evaluate_batch(&[vec![0, 0], vec![0, 0], vec![5, 5], vec![9, 9]], "t");
        assert_eq!(out, vec![Some(0.0), Some(0.0), Some(10.0), None]);
        assert_eq!(ev.evaluations_used(), 3);
        assert_eq!(obj.0.load(Ordering::SeqCst), 3);
        assert_eq!(ev.evaluate(&[1, 2], "t"), Some(3.0));
    }

    #[test]
    fn apply_point_maps_dimensions() {
        let base = ScenarioConfig::campus_baseline();
        let cfg = apply_point(&base, &SearchSpace::extended_5d(), &[35, 6, 700, 18, 4], 11).unwrap();
        assert_eq!(cfg.areas[0].n_ports_11kw, 35);
        assert_eq!(cfg.areas[0].n_ports_30kw, 6);
        assert_eq!(cfg.energy.pv.nb_solar, 700);
        assert_eq!(cfg.areas[1].n_ports_11kw, 18);
        assert_eq!(cfg.areas[1].n_ports_30kw, 4);
        assert_eq!(cfg.rng_seed, 11);
        assert!(apply_point(&base, &SearchSpace::canonical_3d(), &[1, 2], 0).is_err());
    }
}
