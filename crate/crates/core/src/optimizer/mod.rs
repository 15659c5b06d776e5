//! Metaheuristic search over infrastructure configurations.

mod algorithms;
pub mod evaluator;
pub mod space;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::sim::SimError;

pub use evaluator::{apply_point, mean_metrics, Candidate, EvalResult, Evaluator, Objective, Outcome, SimulatorObjective};
pub use space::{neighbors, ned_values, Dimension, SearchSpace};

pub const DEFAULT_GRID_CAP: usize = 10_000;
pub const DEFAULT_PSO_BUDGET: usize = 55;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("unknown algorithm {0:?}; expected one of hill_climbing, simulated_annealing, tabu, reactive_tabu, genetic, pso")]
    UnknownAlgorithm(String),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("budget {budget} is smaller than the population size {population}")]
    BudgetBelowPopulation { budget: usize, population: usize },
    #[error("grid has {cardinality} points, over the cap of {cap}")]
    OverCap { cardinality: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown search dimension {0:?}")]
    UnknownDimension(String),
    #[error("dimension {0} cannot take value {1}")]
    BadValue(String, i64),
    #[error("at least one simulation seed is required")]
    NoSeeds,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HillClimbing,
    SimulatedAnnealing,
    Tabu,
    ReactiveTabu,
    Genetic,
    Pso,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::HillClimbing,
        Algorithm::SimulatedAnnealing,
        Algorithm::Tabu,
        Algorithm::ReactiveTabu,
        Algorithm::Genetic,
        Algorithm::Pso,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HillClimbing => "hill_climbing",
            Algorithm::SimulatedAnnealing => "simulated_annealing",
            Algorithm::Tabu => "tabu",
            Algorithm::ReactiveTabu => "reactive_tabu",
            Algorithm::Genetic => "genetic",
            Algorithm::Pso => "pso",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| OptimizerError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerParams {
    pub sa_initial_temperature: f64,
    pub sa_cooling: f64,
    pub tabu_tenure: usize,
    pub reactive_increase: f64,
    pub reactive_decrease: f64,
    /// Iterations without a revisit before the reactive tenure shrinks.
    pub reactive_patience: usize,
    pub ga_population: usize,
    pub ga_tournament: usize,
    pub ga_mutation: f64,
    pub ga_elitism: usize,
    pub pso_swarm: usize,
    pub pso_inertia: f64,
    pub pso_cognitive: f64,
    pub pso_social: f64,
    /// Guards against endless loops when every proposal is a cache hit.
    pub max_iterations: usize,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            sa_initial_temperature: 0.05,
            sa_cooling: 0.95,
            tabu_tenure: 10,
            reactive_increase: 1.1,
            reactive_decrease: 0.9,
            reactive_patience: 10,
            ga_population: 12,
            ga_tournament: 3,
            ga_mutation: 0.2,
            ga_elitism: 1,
            pso_swarm: 10,
            pso_inertia: 0.72,
            pso_cognitive: 1.49,
            pso_social: 1.49,
            max_iterations: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub evaluations: usize,
    pub best_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRunReport {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub evaluations_used: usize,
    pub best: Candidate,
    pub best_objective: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub seed: u64,
}

/// Best-so-far bookkeeping shared by the algorithms.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    best: Option<(Vec<i64>, f64)>,
    points: Vec<TrajectoryPoint>,
}

impl Trace {
    fn offer(&mut self, values: &[i64], score: f64) {
        if self.best.as_ref().is_none_or(|b| score > b.1) {
            self.best = Some((values.to_vec(), score));
        }
    }

    fn mark(&mut self, iteration: usize, ev: &Evaluator) {
        if let Some((_, s)) = &self.best {
            self.points.push(TrajectoryPoint { iteration, evaluations: ev.evaluations_used(), best_objective: *s });
        }
    }
}

/// Maximizes the objective with the named algorithm within `budget`
/// distinct evaluations.
pub fn optimize(
    algorithm: Algorithm,
    space: &SearchSpace,
    objective: &dyn Objective,
    budget: usize,
    seed: u64,
    params: &OptimizerParams,
) -> Result<OptimizerRunReport, OptimizerError> {
    if budget == 0 {
        return Err(OptimizerError::ZeroBudget);
    }
    let population = match algorithm {
        Algorithm::Genetic => params.ga_population,
        Algorithm::Pso => params.pso_swarm,
        _ => 1,
    };
    if budget < population {
        return Err(OptimizerError::BudgetBelowPopulation { budget, population });
    }
    let mut ev = Evaluator::new(objective, budget);
    let mut r = rng::stream(seed, &[rng::TAG_OPTIMIZER, algorithm.tag()]);
    let mut trace = Trace::default();
    match algorithm {
        Algorithm::HillClimbing => algorithms::hill_climbing(&mut ev, space, &mut r, params, &mut trace),
        Algorithm::SimulatedAnnealing => algorithms::simulated_annealing(&mut ev, space, &mut r, params, &mut trace),
        Algorithm::Tabu => algorithms::tabu(&mut ev, space, &mut r, params, &mut trace, false),
        Algorithm::ReactiveTabu => algorithms::tabu(&mut ev, space, &mut r, params, &mut trace, true),
        Algorithm::Genetic => algorithms::genetic(&mut ev, space, &mut r, params, &mut trace),
        Algorithm::Pso => algorithms::pso(&mut ev, space, &mut r, params, &mut trace),
    }
    let (values, best_objective) = trace.best.clone().expect("budget >= 1 yields one evaluation");
    let provenance = ev.cached(&values).map(|r| r.candidate.provenance.clone()).unwrap_or_default();
    Ok(OptimizerRunReport {
        algorithm,
        budget,
        evaluations_used: ev.evaluations_used(),
        best: Candidate { values, provenance },
        best_objective,
        trajectory: trace.points,
        seed,
    })
}

/// Evaluates every grid point; results sorted by objective, best first, ties
/// broken by candidate order.
pub fn full_grid(space: &SearchSpace, objective: &dyn Objective, cap: usize) -> Result<Vec<EvalResult>, OptimizerError> {
    let cardinality = space.cardinality();
    if cardinality > cap {
        return Err(OptimizerError::OverCap { cardinality, cap });
    }
    let points: Vec<Vec<i64>> = space.grid_points().collect();
    let mut ev = Evaluator::unlimited(objective);
    ev.evaluate_batch(&points, "full_grid");
    let mut results: Vec<EvalResult> = points.iter().map(|p| ev.cached(p).expect("evaluated").clone()).collect();
    results.sort_by(|a, b| b.objective.total_cmp(&a.objective).then_with(|| a.candidate.values.cmp(&b.candidate.values)));
    Ok(results)
}

/// Step-normalized Euclidean distance between two candidates.
pub fn ned(x1: &[i64], x2: &[i64], space: &SearchSpace) -> Result<f64, OptimizerError> {
    if x1.len() != space.len() || x2.len() != space.len() {
        return Err(OptimizerError::DimensionMismatch { expected: space.len(), got: x1.len().min(x2.len()) });
    }
    Ok(ned_values(x1, x2, &space.steps()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target_distance(target: Vec<i64>) -> impl Fn(&[i64]) -> f64 + Sync {
        let steps = SearchSpace::canonical_3d().steps();
        move |x: &[i64]| -ned_values(x, &target, &steps)
    }

    #[test]
    fn ned_table_rows() {
        let s = SearchSpace::canonical_3d();
        let cases = [
            ([35, 2, 500], [35, 4, 500], 1.0),
            ([50, 2, 827], [50, 4, 900], 1.2381),
            ([25, 10, 690], [20, 10, 600], 1.3454),
            ([22, 10, 548], [20, 10, 600], 0.6560),
        ];
        for (a, b, want) in cases {
            assert!((ned(&a, &b, &s).unwrap() - want).abs() < 1e-3, "{a:?} {b:?}");
        }
        assert_eq!(ned(&[35, 2, 500], &[35, 2, 500], &s).unwrap(), 0.0);
        assert!(ned(&[1, 2], &[1, 2, 3], &s).is_err());
    }

    #[test]
    fn every_algorithm_finds_the_target() {
        let s = SearchSpace::canonical_3d();
        let target = vec![35, 6, 700];
        let f = target_distance(target.clone());
        for alg in Algorithm::ALL {
            let r = optimize(alg, &s, &f, 280, 3, &OptimizerParams::default()).unwrap();
            assert_eq!(r.best.values, target, "{alg}");
            assert!(r.evaluations_used <= 280);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SearchSpace::canonical_3d();
        let f = target_distance(vec![45, 8, 300]);
        for alg in Algorithm::ALL {
            let a = optimize(alg, &s, &f, 40, 5, &OptimizerParams::default()).unwrap();
            let b = optimize(alg, &s, &f, 40, 5, &OptimizerParams::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trajectories_are_monotone_and_in_bounds() {
        let s = SearchSpace::canonical_3d();
        let f = |x: &[i64]| ((x[0] * 7 + x[1] * 13 + x[2]) % 97) as f64;
        for alg in Algorithm::ALL {
            let r = optimize(alg, &s, &f, 60, 1, &OptimizerParams::default()).unwrap();
            assert!(r.trajectory.windows(2).all(|w| w[0].best_objective <= w[1].best_objective), "{alg}");
            assert!(s.contains(&r.best.values));
            assert!(r.evaluations_used <= 60);
            if alg != Algorithm::Pso {
                assert!(s.on_grid(&r.best.values), "{alg}");
            }
        }
    }

    #[test]
    fn errors() {
        let s = SearchSpace::canonical_3d();
        let f = |_: &[i64]| 0.0;
        assert!(matches!("ant_colony".parse::<Algorithm>(), Err(OptimizerError::UnknownAlgorithm(_))));
        assert!(matches!(
            optimize(Algorithm::Genetic, &s, &f, 5, 0, &OptimizerParams::default()),
            Err(OptimizerError::BudgetBelowPopulation { budget: 5, population: 12 })
        ));
        assert!(matches!(optimize(Algorithm::Tabu, &s, &f, 0, 0, &OptimizerParams::default()), Err(OptimizerError::ZeroBudget)));
    }

    #[test]
    fn grid_counts_and_cap() {
        let f = |x: &[i64]| x.iter().sum::<i64>() as f64;
        let r = full_grid(&SearchSpace::canonical_3d(), &f, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(r.len(), 280);
        assert_eq!(r[0].candidate.values, vec![50, 10, 900]);
        assert_eq!(full_grid(&SearchSpace::extended_5d(), &f, DEFAULT_GRID_CAP).unwrap().len(), 6720);
        assert!(matches!(
            full_grid(&SearchSpace::extended_5d(), &f, 5000),
            Err(OptimizerError::OverCap { cardinality: 6720, cap: 5000 })
        ));
        let one = SearchSpace::new(vec![Dimension::new("a", 1, 1, 1), Dimension::new("b", 2, 2, 1), Dimension::new("c", 3, 3, 1)]);
        assert_eq!(full_grid(&one, &f, DEFAULT_GRID_CAP).unwrap().len(), 1);
    }
}
