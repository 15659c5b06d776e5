//! The six search algorithms. Each one maximizes through an [`Evaluator`]
//! and stops when the budget is spent, the grid is exhausted, or the
//! iteration cap is hit.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::evaluator::Evaluator;
use super::space::{neighbors, SearchSpace};
use super::{OptimizerParams, Trace};

fn grid_done(ev: &Evaluator, space: &SearchSpace) -> bool {
    ev.exhausted() || ev.distinct_visited() >= space.cardinality()
}

/// Best-scoring point of a batch, first one on ties.
fn best_of(points: &[Vec<i64>], scores: &[Option<f64>]) -> Option<(Vec<i64>, f64)> {
    let mut best: Option<(Vec<i64>, f64)> = None;
    for (p, s) in points.iter().zip(scores) {
        if let Some(s) = *s {
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((p.clone(), s));
            }
        }
    }
    best
}

pub(super) fn hill_climbing(ev: &mut Evaluator, space: &SearchSpace, rng: &mut ChaCha8Rng, p: &OptimizerParams, trace: &mut Trace) {
    let mut current = space.random_grid_point(rng);
    let Some(mut score) = ev.evaluate(&current, "hill_climbing:0") else { return };
    trace.offer(&current, score);
    for it in 1..=p.max_iterations {
        if grid_done(ev, space) {
            break;
        }
        let tag = format!("hill_climbing:{it}");
        let nbrs = neighbors(&current, space);
        let scores = ev.evaluate_batch(&nbrs, &tag);
        for (n, s) in nbrs.iter().zip(&scores) {
            if let Some(s) = s {
                trace.offer(n, *s);
            }
        }
        match best_of(&nbrs, &scores) {
            Some((n, s)) if s > score => {
                current = n;
                score = s;
            }
            _ => {
                // local optimum: restart from a random point
                current = space.random_grid_point(rng);
                match ev.evaluate(&current, &tag) {
                    Some(s) => {
                        score = s;
                        trace.offer(&current, s);
                    }
                    None => break,
                }
            }
        }
        trace.mark(it, ev);
    }
}

pub(super) fn simulated_annealing(ev: &mut Evaluator, space: &SearchSpace, rng: &mut ChaCha8Rng, p: &OptimizerParams, trace: &mut Trace) {
    let mut current = space.random_grid_point(rng);
    let Some(mut score) = ev.evaluate(&current, "simulated_annealing:0") else { return };
    trace.offer(&current, score);
    let mut temperature = p.sa_initial_temperature;
    for it in 1..=p.max_iterations {
        if grid_done(ev, space) {
            break;
        }
        let nbrs = neighbors(&current, space);
        if nbrs.is_empty() {
            break;
        }
        let next = nbrs[rng.random_range(0..nbrs.len())].clone();
        let Some(s) = ev.evaluate(&next, &format!("simulated_annealing:{it}")) else { break };
        trace.offer(&next, s);
        let delta = s - score;
        let u: f64 = rng.random();
        if delta >= 0.0 || (temperature > 0.0 && u < (delta / temperature).exp()) {
            current = next;
            score = s;
        }
        temperature *= p.sa_cooling;
        trace.mark(it, ev);
    }
}

/// Shared body of fixed and reactive tabu search.
pub(super) fn tabu(
    ev: &mut Evaluator,
    space: &SearchSpace,
    rng: &mut ChaCha8Rng,
    p: &OptimizerParams,
    trace: &mut Trace,
    reactive: bool,
) {
    let name = if reactive { "reactive_tabu" } else { "tabu" };
    let mut current = space.random_grid_point(rng);
    let Some(score) = ev.evaluate(&current, &format!("{name}:0")) else { return };
    trace.offer(&current, score);
    let mut best = score;
    let mut tenure = p.tabu_tenure as f64;
    let mut tabu: VecDeque<Vec<i64>> = VecDeque::new();
    let mut visits: HashMap<Vec<i64>, usize> = HashMap::from([(current.clone(), 1)]);
    let mut quiet = 0usize;
    for it in 1..=p.max_iterations {
        if grid_done(ev, space) {
            break;
        }
        let nbrs = neighbors(&current, space);
        let scores = ev.evaluate_batch(&nbrs, &format!("{name}:{it}"));
        let mut chosen: Option<(Vec<i64>, f64)> = None;
        for (n, s) in nbrs.iter().zip(&scores) {
            let Some(s) = *s else { continue };
            trace.offer(n, s);
            let allowed = !tabu.contains(n) || s > best;
            if allowed && chosen.as_ref().is_none_or(|c| s > c.1) {
                chosen = Some((n.clone(), s));
            }
        }
        let Some((next, s)) = chosen else {
            if ev.exhausted() {
                break;
            }
            // every neighbor is tabu: jump
            current = space.random_grid_point(rng);
            tabu.clear();
            trace.mark(it, ev);
            continue;
        };
        best = best.max(s);
        tabu.push_back(current.clone());
        current = next;
        let count = visits.entry(current.clone()).or_insert(0);
        *count += 1;
        if reactive {
            if *count > 1 {
                tenure *= p.reactive_increase;
                quiet = 0;
            } else {
                quiet += 1;
                if quiet >= p.reactive_patience {
                    tenure = (tenure * p.reactive_decrease).max(1.0);
                    quiet = 0;
                }
            }
        }
        while tabu.len() > tenure.round().max(1.0) as usize {
            tabu.pop_front();
        }
        trace.mark(it, ev);
    }
}

fn mutate(values: &mut [i64], space: &SearchSpace, rng: &mut ChaCha8Rng, prob: f64) {
    for (k, d) in space.dims.iter().enumerate() {
        if rng.random::<f64>() < prob {
            let delta = if rng.random::<bool>() { d.step } else { -d.step };
            values[k] = d.clip(values[k] + delta);
        }
    }
}

pub(super) fn genetic(ev: &mut Evaluator, space: &SearchSpace, rng: &mut ChaCha8Rng, p: &OptimizerParams, trace: &mut Trace) {
    let n = p.ga_population;
    // Grid start: one-step mutations and crossover then keep every child on the grid.
    let mut population: Vec<Vec<i64>> = (0..n).map(|_| space.random_grid_point(rng)).collect();
    let mut fitness = ev.evaluate_batch(&population, "genetic:0");
    for (x, f) in population.iter().zip(&fitness) {
        if let Some(f) = f {
            trace.offer(x, *f);
        }
    }
    trace.mark(0, ev);
    for it in 1..=p.max_iterations {
        if ev.exhausted() {
            break;
        }
        let scored: Vec<(Vec<i64>, f64)> = population
            .iter()
            .zip(&fitness)
            .filter_map(|(x, f)| f.map(|f| (x.clone(), f)))
            .collect();
        if scored.is_empty() {
            break;
        }
        let mut ranked = scored.clone();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut next: Vec<Vec<i64>> = ranked.iter().take(p.ga_elitism).map(|r| r.0.clone()).collect();
        let tournament = |rng: &mut ChaCha8Rng| -> Vec<i64> {
            let mut best: Option<&(Vec<i64>, f64)> = None;
            for _ in 0..p.ga_tournament {
                let c = &scored[rng.random_range(0..scored.len())];
                if best.is_none_or(|b| c.1 > b.1) {
                    best = Some(c);
                }
            }
            best.expect("non-empty tournament").0.clone()
        };
        while next.len() < n {
            let a = tournament(rng);
            let b = tournament(rng);
            let mut child = if space.len() > 1 {
                let cut = rng.random_range(1..space.len());
                a[..cut].iter().chain(&b[cut..]).copied().collect()
            } else {
                a.clone()
            };
            mutate(&mut child, space, rng, p.ga_mutation);
            next.push(child);
        }
        population = next;
        fitness = ev.evaluate_batch(&population, &format!("genetic:{it}"));
        for (x, f) in population.iter().zip(&fitness) {
            if let Some(f) = f {
                trace.offer(x, *f);
            }
        }
        trace.mark(it, ev);
    }
}

pub(super) fn pso(ev: &mut Evaluator, space: &SearchSpace, rng: &mut ChaCha8Rng, p: &OptimizerParams, trace: &mut Trace) {
    let d = space.len();
    let lo: Vec<f64> = space.dims.iter().map(|x| x.lower as f64).collect();
    let hi: Vec<f64> = space.dims.iter().map(|x| x.upper as f64).collect();
    let mut pos: Vec<Vec<f64>> = (0..p.pso_swarm)
        .map(|_| (0..d).map(|k| lo[k] + rng.random::<f64>() * (hi[k] - lo[k])).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..p.pso_swarm)
        .map(|_| (0..d).map(|k| (rng.random::<f64>() * 2.0 - 1.0) * 0.2 * (hi[k] - lo[k])).collect())
        .collect();
    let to_point = |x: &[f64]| -> Vec<i64> {
        let mut v: Vec<i64> = x.iter().map(|c| c.round() as i64).collect();
        space.clip(&mut v);
        v
    };
    let mut pbest: Vec<Option<(Vec<f64>, f64)>> = vec![None; p.pso_swarm];
    let mut gbest: Option<(Vec<f64>, f64)> = None;
    for it in 0..=p.max_iterations {
        if ev.exhausted() {
            break;
        }
        let points: Vec<Vec<i64>> = pos.iter().map(|x| to_point(x)).collect();
        let scores = ev.evaluate_batch(&points, &format!("pso:{it}"));
        for i in 0..p.pso_swarm {
            let Some(s) = scores[i] else { continue };
            trace.offer(&points[i], s);
            if pbest[i].as_ref().is_none_or(|b| s > b.1) {
                pbest[i] = Some((pos[i].clone(), s));
            }
            if gbest.as_ref().is_none_or(|b| s > b.1) {
                gbest = Some((pos[i].clone(), s));
            }
        }
        trace.mark(it, ev);
        let Some((g, _)) = gbest.clone() else { break };
        for i in 0..p.pso_swarm {
            let own = pbest[i].as_ref().map_or(pos[i].clone(), |b| b.0.clone());
            for k in 0..d {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                vel[i][k] = p.pso_inertia * vel[i][k]
                    + p.pso_cognitive * r1 * (own[k] - pos[i][k])
                    + p.pso_social * r2 * (g[k] - pos[i][k]);
                let x = pos[i][k] + vel[i][k];
                if x < lo[k] || x > hi[k] {
                    pos[i][k] = x.clamp(lo[k], hi[k]);
                    vel[i][k] = 0.0;
                } else {
                    pos[i][k] = x;
                }
            }
        }
    }
}
