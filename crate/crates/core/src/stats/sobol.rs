//! Total-order Sobol indices with A/B/AB_i sampling and the Jansen estimator.
//!
//! Base samples come from two independent Latin hypercubes over the unit
//! cube. Each unit coordinate is mapped onto its factor: linearly for
//! continuous ranges, by uniform quantization for discrete value sets.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::rng::{self, TAG_BOOTSTRAP, TAG_SOBOL};

pub const ESTIMATOR: &str = "jansen";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Factor {
    Continuous { name: String, lower: f64, upper: f64 },
    Discrete { name: String, values: Vec<f64> },
}

impl Factor {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        Factor::Continuous { name: name.to_string(), lower, upper }
    }

    pub fn discrete(name: &str, values: &[f64]) -> Self {
        Factor::Discrete { name: name.to_string(), values: values.to_vec() }
    }

    /// Two-level on/off factor.
    pub fn flag(name: &str) -> Self {
        Self::discrete(name, &[0.0, 1.0])
    }

    pub fn name(&self) -> &str {
        match self {
            Factor::Continuous { name, .. } | Factor::Discrete { name, .. } => name,
        }
    }

    /// Value at unit coordinate `u` in `[0, 1)`.
    pub fn map(&self, u: f64) -> f64 {
        match self {
            Factor::Continuous { lower, upper, .. } => lower + u * (upper - lower),
            Factor::Discrete { values, .. } => {
                let k = ((u * values.len() as f64) as usize).min(values.len() - 1);
                values[k]
            }
        }
    }

    fn validate(&self) -> Result<(), StatsError> {
        let bad = |msg: &str| Err(StatsError::BadFactor(self.name().to_string(), msg.to_string()));
        match self {
            Factor::Continuous { lower, upper, .. } if !(lower.is_finite() && upper.is_finite() && lower < upper) => {
                bad("bounds must be finite with lower < upper")
            }
            Factor::Discrete { values, .. } if values.is_empty() => bad("empty value set"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolOptions {
    /// Base sample size N; a power of two, at least 64.
    pub n_base: usize,
    pub seed: u64,
    /// Bootstrap resamples for the confidence half-widths.
    pub bootstrap: usize,
    pub confidence: f64,
}

impl SobolOptions {
    pub fn new(n_base: usize, seed: u64) -> Self {
        Self { n_base, seed, bootstrap: 200, confidence: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub factors: Vec<String>,
    pub st: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub n_base: usize,
    pub estimator: String,
    pub evaluations: usize,
    pub variance: f64,
}

/// Total-order indices of several outputs at once, `st[factor][output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolMatrix {
    pub factors: Vec<String>,
    pub outputs: Vec<String>,
    pub st: Vec<Vec<f64>>,
    pub half_widths: Vec<Vec<f64>>,
    /// Output variance over f(A) and f(B).
    pub variances: Vec<f64>,
    pub n_base: usize,
    pub estimator: String,
    pub evaluations: usize,
}

impl SobolMatrix {
    /// Plain CSV with one row per factor and one column per output.
    pub fn to_csv(&self) -> String {
        let mut out = format!("factor,{}\n", self.outputs.join(","));
        for (name, row) in self.factors.iter().zip(&self.st) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }

    pub fn column(&self, output: usize) -> SobolReport {
        SobolReport {
            factors: self.factors.clone(),
            st: self.st.iter().map(|r| r[output]).collect(),
            half_widths: self.half_widths.iter().map(|r| r[output]).collect(),
            n_base: self.n_base,
            estimator: self.estimator.clone(),
            evaluations: self.evaluations,
            variance: self.variances[output],
        }
    }
}

fn latin_hypercube(n: usize, d: usize, seed: u64, which: u64) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; d]; n];
    for c in 0..d {
        let mut r = rng::stream(seed, &[TAG_SOBOL, which, c as u64]);
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut r);
        for (row, s) in rows.iter_mut().zip(strata) {
            row[c] = (s as f64 + r.random::<f64>()) / n as f64;
        }
    }
    rows
}

/// The `(d + 2) N` unit-cube points: A, then B, then AB_1 .. AB_d, where
/// AB_i is A with column `i` taken from B.
pub fn saltelli_design(n_base: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let a = latin_hypercube(n_base, d, seed, 0);
    let b = latin_hypercube(n_base, d, seed, 1);
    let mut out = Vec::with_capacity((d + 2) * n_base);
    out.extend(a.iter().cloned());
    out.extend(b.iter().cloned());
    for i in 0..d {
        for (ra, rb) in a.iter().zip(&b) {
            let mut row = ra.clone();
            row[i] = rb[i];
            out.push(row);
        }
    }
    out
}

/// Jansen total-order index of every factor over the sample indices `idx`.
fn jansen(fa: &[f64], fb: &[f64], fab: &[Vec<f64>], idx: &[usize]) -> (Vec<f64>, f64) {
    let m = 2.0 * idx.len() as f64;
    let mean = idx.iter().map(|&j| fa[j] + fb[j]).sum::<f64>() / m;
    let var = idx.iter().map(|&j| (fa[j] - mean).powi(2) + (fb[j] - mean).powi(2)).sum::<f64>() / m;
    let st = fab
        .iter()
        .map(|col| idx.iter().map(|&j| (fa[j] - col[j]).powi(2)).sum::<f64>() / m / var)
        .collect();
    (st, var)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check(factors: &[Factor], opts: &SobolOptions) -> Result<(), StatsError> {
    if !opts.n_base.is_power_of_two() || opts.n_base < 64 {
        return Err(StatsError::BadBaseSize(opts.n_base));
    }
    if factors.is_empty() {
        return Err(StatsError::NoFactors);
    }
    factors.iter().try_for_each(Factor::validate)
}

/// Total-order indices of a vector-valued model. `model` receives mapped
/// factor values and must return one value per entry of `outputs`.
/// Evaluations run in parallel; each has a fixed position in the design,
/// so the result does not depend on scheduling.
pub fn sobol_matrix<F>(model: F, factors: &[Factor], outputs: &[String], opts: &SobolOptions) -> Result<SobolMatrix, StatsError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    check(factors, opts)?;
    let (n, d) = (opts.n_base, factors.len());
    let design = saltelli_design(n, d, opts.seed);
    let values: Vec<Vec<f64>> = design
        .par_iter()
        .map(|u| {
            let x: Vec<f64> = u.iter().zip(factors).map(|(u, f)| f.map(*u)).collect();
            model(&x)
        })
        .collect();
    if let Some(bad) = values.iter().find(|v| v.len() != outputs.len()) {
        return Err(StatsError::OutputArity { expected: outputs.len(), got: bad.len() });
    }

    let all: Vec<usize> = (0..n).collect();
    let lo_q = (1.0 - opts.confidence) / 2.0;
    let mut st = vec![vec![0.0; outputs.len()]; d];
    let mut half = vec![vec![0.0; outputs.len()]; d];
    let mut variances = vec![0.0; outputs.len()];
    for (o, name) in outputs.iter().enumerate() {
        let col = |block: usize| -> Vec<f64> { values[block * n..(block + 1) * n].iter().map(|v| v[o]).collect() };
        let fa = col(0);
        let fb = col(1);
        let fab: Vec<Vec<f64>> = (0..d).map(|i| col(i + 2)).collect();
        let (point, var) = jansen(&fa, &fb, &fab, &all);
        if !(var > 1e-12 * (1.0 + fa.iter().map(|v| v * v).sum::<f64>() / n as f64)) {
            return Err(StatsError::ZeroVariance(name.clone()));
        }
        variances[o] = var;
        let mut r = rng::stream(opts.seed, &[TAG_BOOTSTRAP, o as u64]);
        let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(opts.bootstrap); d];
        for _ in 0..opts.bootstrap {
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let (s, v) = jansen(&fa, &fb, &fab, &idx);
            if v > 0.0 {
                for (i, x) in s.into_iter().enumerate() {
                    draws[i].push(x);
                }
            }
        }
        for i in 0..d {
            st[i][o] = point[i];
            draws[i].sort_by(f64::total_cmp);
            if !draws[i].is_empty() {
                half[i][o] = (percentile(&draws[i], 1.0 - lo_q) - percentile(&draws[i], lo_q)) / 2.0;
            }
        }
    }
    Ok(SobolMatrix {
        factors: factors.iter().map(|f| f.name().to_string()).collect(),
        outputs: outputs.to_vec(),
        st,
        half_widths: half,
        variances,
        n_base: n,
        estimator: ESTIMATOR.to_string(),
        evaluations: design.len(),
    })
}

/// Total-order indices of a scalar model.
pub fn sobol_total_order<F>(model: F, factors: &[Factor], opts: &SobolOptions) -> Result<SobolReport, StatsError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = sobol_matrix(|x: &[f64]| vec![model(x)], factors, &["y".to_string()], opts)?;
    Ok(m.column(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ishigami(x: &[f64]) -> f64 {
        x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
    }

    fn ishigami_factors() -> Vec<Factor> {
        ["x1", "x2", "x3"].iter().map(|n| Factor::continuous(n, -PI, PI)).collect()
    }

    /// Closed-form total-order indices of the Ishigami function.
    fn ishigami_analytic(a: f64, b: f64) -> [f64; 3] {
        let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = 8.0 * b * b * PI.powi(8) / 225.0;
        let v = v1 + v2 + v13;
        [(v1 + v13) / v, v2 / v, v13 / v]
    }

    #[test]
    fn analytic_oracle_values() {
        let st = ishigami_analytic(7.0, 0.1);
        for (got, want) in st.iter().zip([0.5574, 0.4424, 0.2437]) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn ishigami_total_order() {
        let r = sobol_total_order(ishigami, &ishigami_factors(), &SobolOptions::new(1 << 14, 3)).unwrap();
        for (got, want) in r.st.iter().zip(ishigami_analytic(7.0, 0.1)) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
        assert_eq!(r.evaluations, 5 << 14);
        assert_eq!(r.estimator, "jansen");
    }

    #[test]
    fn dead_factor_and_symmetry() {
        let f: Vec<Factor> = ["a", "b", "c"].iter().map(|n| Factor::continuous(n, 0.0, 1.0)).collect();
        let opts = SobolOptions::new(4096, 1);
        let r = sobol_total_order(|x: &[f64]| x[0] + x[1], &f, &opts).unwrap();
        assert!(r.st[2].abs() < 0.02);
        assert!((r.st[0] - r.st[1]).abs() < 0.02);
        assert!((r.st[0] - 0.5).abs() < 0.05);
    }

    #[test]
    fn half_widths_shrink_with_sample_size() {
        let widths: Vec<f64> = (8..12)
            .map(|k| {
                let r = sobol_total_order(ishigami, &ishigami_factors(), &SobolOptions::new(1 << k, 5)).unwrap();
                r.half_widths.iter().sum::<f64>()
            })
            .collect();
        for w in widths.windows(2) {
            assert!(w[1] < w[0] * 1.05, "{widths:?}");
        }
        assert!(widths[3] < widths[0] * 0.6);
    }

    #[test]
    fn discrete_factors_quantize_uniformly() {
        let f = Factor::discrete("ports", &[10.0, 20.0, 30.0]);
        assert_eq!(f.map(0.0), 10.0);
        assert_eq!(f.map(0.34), 20.0);
        assert_eq!(f.map(0.999), 30.0);
        let flag = Factor::flag("fee");
        assert_eq!((flag.map(0.49), flag.map(0.5)), (0.0, 1.0));
    }

    #[test]
    fn design_is_stratified_and_seeded() {
        let d = saltelli_design(64, 2, 9);
        assert_eq!(d.len(), 4 * 64);
        let mut strata: Vec<usize> = d[..64].iter().map(|r| (r[0] * 64.0) as usize).collect();
        strata.sort_unstable();
        assert_eq!(strata, (0..64).collect::<Vec<_>>());
        assert_eq!(d, saltelli_design(64, 2, 9));
        assert_ne!(d, saltelli_design(64, 2, 10));
        // AB_1 keeps A's second column and takes B's first
        assert_eq!(d[128][1], d[0][1]);
        assert_eq!(d[128][0], d[64][0]);
    }

    #[test]
    fn errors() {
        let f = ishigami_factors();
        assert_eq!(sobol_total_order(ishigami, &f, &SobolOptions::new(100, 0)), Err(StatsError::BadBaseSize(100)));
        assert_eq!(sobol_total_order(ishigami, &f, &SobolOptions::new(32, 0)), Err(StatsError::BadBaseSize(32)));
        assert!(matches!(
            sobol_total_order(|_: &[f64]| 4.0, &f, &SobolOptions::new(64, 0)),
            Err(StatsError::ZeroVariance(_))
        ));
        assert_eq!(sobol_total_order(ishigami, &[], &SobolOptions::new(64, 0)), Err(StatsError::NoFactors));
    }

    #[test]
    fn matrix_columns_match_scalar_runs() {
        let f = ishigami_factors();
        let opts = SobolOptions::new(256, 2);
        let outputs = vec!["y".to_string(), "x1".to_string()];
        let m = sobol_matrix(|x: &[f64]| vec![ishigami(x), x[0]], &f, &outputs, &opts).unwrap();
        let s = sobol_total_order(ishigami, &f, &opts).unwrap();
        assert_eq!(m.column(0).st, s.st);
        assert!(m.st[1][1] < 1e-12 && m.st[2][1] < 1e-12);
        assert!(m.to_csv().starts_with("factor,y,x1\nx1,"));
    }
}
