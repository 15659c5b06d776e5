//! Policy sweeps, configuration grids and optimizer comparisons.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::runner::{run_jobs, Job, RunOptions};
use super::store::{ResultRecord, ResultsStore};
use super::{ExperimentError, PolicyCase};
use crate::config::ScenarioConfig;
use crate::metrics::MetricSet;
use crate::optimizer::{
    apply_point, mean_metrics, ned, optimize, Algorithm, EvalResult, Objective, OptimizerParams, Outcome, SearchSpace,
};
use crate::stats::{wilcoxon_signed_rank, Alternative, WilcoxonResult};

pub const EV_LEVELS: [u32; 4] = [50, 100, 150, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCell {
    pub ev_level: u32,
    pub case: PolicyCase,
    pub seeds: Vec<u64>,
    pub satisfaction: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySweep {
    pub cells: Vec<PolicyCell>,
    pub records: Vec<ResultRecord>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

impl PolicySweep {
    pub fn cell(&self, ev_level: u32, case: PolicyCase) -> Option<&PolicyCell> {
        self.cells.iter().find(|c| c.ev_level == ev_level && c.case == case)
    }

    /// Signed-rank test of case `a` against case `b` at one EV level,
    /// paired by seed.
    pub fn compare(&self, ev_level: u32, a: PolicyCase, b: PolicyCase, alt: Alternative) -> Result<WilcoxonResult, ExperimentError> {
        let missing = |c: PolicyCase| ExperimentError::Invalid(format!("no cell for {ev_level} EVs, {c}"));
        let ca = self.cell(ev_level, a).ok_or_else(|| missing(a))?;
        let cb = self.cell(ev_level, b).ok_or_else(|| missing(b))?;
        let by_seed: HashMap<u64, f64> = cb.seeds.iter().copied().zip(cb.satisfaction.iter().copied()).collect();
        let (xa, xb): (Vec<f64>, Vec<f64>) = ca
            .seeds
            .iter()
            .zip(&ca.satisfaction)
            .filter_map(|(s, x)| by_seed.get(s).map(|y| (*x, *y)))
            .unzip();
        Ok(wilcoxon_signed_rank(&xa, &xb, alt)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ev_level,case,seeds,mean_satisfaction,sd_satisfaction\n");
        for c in &self.cells {
            out.push_str(&format!("{},{},{},{:.6},{:.6}\n", c.ev_level, c.case.id(), c.seeds.len(), c.mean, c.sd));
        }
        out
    }
}

/// Satisfaction for every (EV level, policy case, seed) on the base
/// scenario's infrastructure.
pub fn policy_sweep(
    store: &mut ResultsStore,
    base: &ScenarioConfig,
    ev_levels: &[u32],
    cases: &[PolicyCase],
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<PolicySweep, ExperimentError> {
    if ev_levels.is_empty() || cases.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Invalid("policy sweep needs EV levels, cases and seeds".into()));
    }
    let mut jobs = Vec::new();
    for &ev in ev_levels {
        for &case in cases {
            for &seed in seeds {
                let mut c = base.clone();
                c.nb_electrical = ev;
                c.policies = case.apply(&base.policies);
                c.rng_seed = seed;
                jobs.push(Job { config: c, label: Some(format!("ev={ev} case={}", case.id())), candidate: None });
            }
        }
    }
    let records = run_jobs(store, "policy_sweep", &jobs, opts)?;
    let mut cells = Vec::new();
    let mut it = records.iter();
    for &ev in ev_levels {
        for &case in cases {
            let satisfaction: Vec<f64> = it.by_ref().take(seeds.len()).map(|r| r.metrics.satisfaction).collect();
            let (mean, sd) = mean_sd(&satisfaction);
            cells.push(PolicyCell { ev_level: ev, case, seeds: seeds.to_vec(), satisfaction, mean, sd });
        }
    }
    Ok(PolicySweep { cells, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub candidate: Vec<i64>,
    /// Mean over seeds.
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCampaign {
    pub space: SearchSpace,
    pub ev_level: u32,
    pub seeds: Vec<u64>,
    /// One row per grid point, in grid order.
    pub rows: Vec<GridRow>,
    /// Index of the highest seed-mean objective; first in grid order on ties.
    pub best: usize,
    pub records: Vec<ResultRecord>,
}

impl GridCampaign {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    pub fn rows_csv(&self) -> String {
        let names: Vec<&str> = self.space.dims.iter().map(|d| d.name.as_str()).collect();
        let mut out = format!(
            "{},satisfaction,self_consumption,self_sufficiency,normalized_payback,objective\n",
            names.join(",")
        );
        for r in &self.rows {
            out.push_str(&metric_line(&r.candidate, &r.metrics));
        }
        out
    }
}

fn metric_line(candidate: &[i64], m: &MetricSet) -> String {
    let c: Vec<String> = candidate.iter().map(i64::to_string).collect();
    format!(
        "{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        c.join(","),
        m.satisfaction,
        m.self_consumption,
        m.self_sufficiency,
        m.normalized_payback,
        m.objective
    )
}

/// One row per campaign with its best configuration and metrics, in the
/// column order of the published full-grid summary.
pub fn table10_csv(campaigns: &[GridCampaign]) -> String {
    let Some(first) = campaigns.first() else { return String::new() };
    let names: Vec<&str> = first.space.dims.iter().map(|d| d.name.as_str()).collect();
    let mut out = format!(
        "ev_level,{},satisfaction,self_consumption,self_sufficiency,normalized_payback,objective\n",
        names.join(",")
    );
    for c in campaigns {
        let b = c.best_row();
        out.push_str(&format!("{},{}", c.ev_level, metric_line(&b.candidate, &b.metrics)));
    }
    out
}

/// Evaluates every grid point of `space` at one EV level for each seed.
pub fn grid_campaign(
    store: &mut ResultsStore,
    base: &ScenarioConfig,
    space: &SearchSpace,
    ev_level: u32,
    seeds: &[u64],
    cap: usize,
    opts: &RunOptions,
) -> Result<GridCampaign, ExperimentError> {
    let cardinality = space.cardinality();
    if cardinality > cap {
        return Err(crate::optimizer::OptimizerError::OverCap { cardinality, cap }.into());
    }
    if seeds.is_empty() {
        return Err(crate::optimizer::OptimizerError::NoSeeds.into());
    }
    let mut base = base.clone();
    base.nb_electrical = ev_level;
    let points: Vec<Vec<i64>> = space.grid_points().collect();
    let mut jobs = Vec::with_capacity(points.len() * seeds.len());
    for p in &points {
        for &seed in seeds {
            jobs.push(Job { config: apply_point(&base, space, p, seed)?, label: None, candidate: Some(p.clone()) });
        }
    }
    let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
    let experiment = format!("grid:{}:ev{ev_level}", names.join(","));
    let records = run_jobs(store, &experiment, &jobs, opts)?;
    let rows: Vec<GridRow> = points
        .iter()
        .zip(records.chunks(seeds.len()))
        .map(|(p, recs)| {
            let sets: Vec<MetricSet> = recs.iter().map(|r| r.metrics.clone()).collect();
            GridRow { candidate: p.clone(), metrics: mean_metrics(&sets) }
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.metrics.objective > rows[best].metrics.objective {
            best = i;
        }
    }
    Ok(GridCampaign { space: space.clone(), ev_level, seeds: seeds.to_vec(), rows, best, records })
}

/// Exhaustive results an optimizer comparison is measured against.
#[derive(Debug, Clone)]
pub struct GridReference {
    pub space: SearchSpace,
    pub best: Vec<i64>,
    pub best_objective: f64,
    table: HashMap<Vec<i64>, Outcome>,
}

impl GridReference {
    pub fn from_campaign(c: &GridCampaign) -> Result<Self, ExperimentError> {
        let rows: Vec<(Vec<i64>, Outcome)> = c
            .rows
            .iter()
            .map(|r| (r.candidate.clone(), Outcome { objective: r.metrics.objective, metrics: Some(r.metrics.clone()) }))
            .collect();
        Self::build(&c.space, rows)
    }

    /// From `optimizer::full_grid` output.
    pub fn from_results(space: &SearchSpace, results: &[EvalResult]) -> Result<Self, ExperimentError> {
        let rows = results
            .iter()
            .map(|r| (r.candidate.values.clone(), Outcome { objective: r.objective, metrics: r.metrics.clone() }))
            .collect();
        Self::build(space, rows)
    }

    fn build(space: &SearchSpace, rows: Vec<(Vec<i64>, Outcome)>) -> Result<Self, ExperimentError> {
        let table: HashMap<Vec<i64>, Outcome> = rows.into_iter().collect();
        if table.len() != space.cardinality() || !space.grid_points().all(|p| table.contains_key(&p)) {
            return Err(ExperimentError::MissingGrid(format!(
                "{} of {} grid points evaluated",
                table.len(),
                space.cardinality()
            )));
        }
        let mut best: Option<(Vec<i64>, f64)> = None;
        for p in space.grid_points() {
            let o = table[&p].objective;
            if best.as_ref().is_none_or(|b| o > b.1) {
                best = Some((p, o));
            }
        }
        let (best, best_objective) = best.expect("non-empty grid");
        Ok(Self { space: space.clone(), best, best_objective, table })
    }
}

/// Serves grid points from a reference table and defers everything else.
/// The simulator is deterministic, so this changes wall time only.
struct Reuse<'a> {
    inner: &'a dyn Objective,
    table: &'a HashMap<Vec<i64>, Outcome>,
}

impl Objective for Reuse<'_> {
    fn evaluate(&self, values: &[i64]) -> Outcome {
        match self.table.get(values) {
            Some(o) => o.clone(),
            None => self.inner.evaluate(values),
        }
    }

    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub budget: usize,
    pub evaluations_used: usize,
    pub best: Vec<i64>,
    pub best_objective: f64,
    pub grid_best: Vec<i64>,
    pub grid_objective: f64,
    pub ned: f64,
    /// `best_objective / grid_objective`.
    pub objective_ratio: f64,
    /// Fraction of the grid's evaluations saved.
    pub reduction: f64,
}

impl OptimizerRow {
    pub const CSV_HEADER: &'static str =
        "algorithm,seed,budget,evaluations_used,best,best_objective,grid_best,grid_objective,ned,objective_ratio,reduction";

    pub fn csv_line(&self) -> String {
        let fmt = |v: &[i64]| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "{},{},{},{},{},{:.6},{},{:.6},{:.6},{:.6},{:.4}",
            self.algorithm,
            self.seed,
            self.budget,
            self.evaluations_used,
            fmt(&self.best),
            self.best_objective,
            fmt(&self.grid_best),
            self.grid_objective,
            self.ned,
            self.objective_ratio,
            self.reduction
        )
    }
}

/// Runs each algorithm for each budget and optimizer seed against the same
/// objective the grid was computed with, and scores the result against the
/// grid optimum.
pub fn optimizer_campaign(
    objective: &dyn Objective,
    grid: &GridReference,
    algorithms: &[Algorithm],
    budgets: &[usize],
    seeds: &[u64],
    params: &OptimizerParams,
) -> Result<Vec<OptimizerRow>, ExperimentError> {
    let reuse = Reuse { inner: objective, table: &grid.table };
    let mut rows = Vec::new();
    for &algorithm in algorithms {
        for &budget in budgets {
            for &seed in seeds {
                let report = optimize(algorithm, &grid.space, &reuse, budget, seed, params)?;
                rows.push(OptimizerRow {
                    algorithm,
                    seed,
                    budget,
                    evaluations_used: report.evaluations_used,
                    ned: ned(&report.best.values, &grid.best, &grid.space)?,
                    best: report.best.values,
                    best_objective: report.best_objective,
                    grid_best: grid.best.clone(),
                    grid_objective: grid.best_objective,
                    objective_ratio: report.best_objective / grid.best_objective,
                    reduction: 1.0 - report.evaluations_used as f64 / grid.space.cardinality() as f64,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{full_grid, ned_values, Dimension};

    fn small_base() -> ScenarioConfig {
        let mut c = ScenarioConfig::campus_baseline();
        c.nb_gasoline = 10;
        c
    }

    #[test]
    fn sweep_cardinality_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        let sweep = policy_sweep(&mut store, &small_base(), &EV_LEVELS, &PolicyCase::ALL, &[1], &RunOptions::default()).unwrap();
        assert_eq!(sweep.records.len(), 24);
        assert_eq!(sweep.cells.len(), 24);
        assert_eq!(store.len(), 24);
        assert_eq!(sweep.to_csv().lines().count(), 25);
        assert!(sweep.cells.iter().all(|c| c.sd == 0.0 && (0.0..=1.0).contains(&c.mean)));
    }

    #[test]
    fn sweep_compare_pairs_by_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        let cases = [PolicyCase::new(0).unwrap(), PolicyCase::new(5).unwrap()];
        let seeds: Vec<u64> = (0..8).collect();
        let sweep = policy_sweep(&mut store, &small_base(), &[150], &cases, &seeds, &RunOptions::default()).unwrap();
        let r = sweep.compare(150, cases[1], cases[0], Alternative::Greater).unwrap();
        assert!(r.n_effective <= 8);
        assert!(sweep.compare(50, cases[1], cases[0], Alternative::Greater).is_err());
    }

    fn tiny_space() -> SearchSpace {
        SearchSpace::new(vec![Dimension::new("n11_C", 20, 30, 10), Dimension::new("solar", 200, 400, 200)])
    }

    #[test]
    fn grid_counts_and_seed_means() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        let space = tiny_space();
        let g = grid_campaign(&mut store, &small_base(), &space, 50, &[1, 2], 100, &RunOptions::default()).unwrap();
        assert_eq!(g.records.len(), 8);
        assert_eq!(g.rows.len(), 4);
        let pair = &g.records[..2];
        let expect = (pair[0].metrics.objective + pair[1].metrics.objective) / 2.0;
        assert!((g.rows[0].metrics.objective - expect).abs() < 1e-12);
        assert!(g.rows.iter().all(|r| r.metrics.objective <= g.best_row().metrics.objective));
        let csv = table10_csv(&[g.clone()]);
        assert!(csv.starts_with("ev_level,n11_C,solar,satisfaction"));
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(g.rows_csv().lines().count(), 5);
        assert!(grid_campaign(&mut store, &small_base(), &space, 50, &[1], 3, &RunOptions::default()).is_err());
    }

    #[test]
    fn one_point_grid_names_that_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        let space = SearchSpace::new(vec![Dimension::new("n11_C", 25, 25, 5)]);
        let g = grid_campaign(&mut store, &small_base(), &space, 50, &[3], 10, &RunOptions::default()).unwrap();
        assert_eq!(g.best_row().candidate, vec![25]);
    }

    #[test]
    fn optimizer_rows_against_reference() {
        let space = SearchSpace::canonical_3d();
        let target = vec![35, 6, 700];
        let steps = space.steps();
        let f = move |x: &[i64]| -ned_values(x, &target, &steps);
        let grid = GridReference::from_results(&space, &full_grid(&space, &f, 1000).unwrap()).unwrap();
        assert_eq!(grid.best, vec![35, 6, 700]);
        let rows = optimizer_campaign(&f, &grid, &Algorithm::ALL, &[55], &[1, 2], &OptimizerParams::default()).unwrap();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            assert!(r.evaluations_used <= 55);
            assert!(r.reduction >= 1.0 - 55.0 / 280.0 - 1e-12);
            assert!((r.ned - ned(&r.best, &grid.best, &space).unwrap()).abs() < 1e-12);
        }
        assert!(rows[0].csv_line().split(',').count() == OptimizerRow::CSV_HEADER.split(',').count());
    }

    #[test]
    fn reference_requires_complete_grid() {
        let space = SearchSpace::canonical_3d();
        let f = |x: &[i64]| x[0] as f64;
        let mut results = full_grid(&space, &f, 1000).unwrap();
        results.pop();
        assert!(matches!(GridReference::from_results(&space, &results), Err(ExperimentError::MissingGrid(_))));
    }
}
