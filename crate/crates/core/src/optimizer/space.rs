//! Integer search spaces over infrastructure parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: i64,
    pub upper: i64,
    /// Grid stride.
    pub step: i64,
}

impl Dimension {
    pub fn new(name: &str, lower: i64, upper: i64, step: i64) -> Self {
        assert!(lower <= upper && step > 0, "invalid dimension {name}");
        Self { name: name.to_string(), lower, upper, step }
    }

    pub fn grid_len(&self) -> usize {
        ((self.upper - self.lower) / self.step + 1) as usize
    }

    pub fn grid_value(&self, i: usize) -> i64 {
        self.lower + i as i64 * self.step
    }

    pub fn clip(&self, v: i64) -> i64 {
        v.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
    /// Whether population methods may leave the grid (integers within bounds).
    pub continuous_allowed: bool,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Self {
        Self { dims, continuous_allowed: true }
    }

    /// C-Parking 11 kW ports, C-Parking 30 kW ports, PV panels.
    pub fn canonical_3d() -> Self {
        Self::new(vec![
            Dimension::new("n11_C", 20, 50, 5),
            Dimension::new("n30_C", 2, 10, 2),
            Dimension::new("solar", 200, 900, 100),
        ])
    }

    /// The 3-D space plus J-Parking 11 kW and 30 kW ports.
    pub fn extended_5d() -> Self {
        let mut s = Self::canonical_3d();
        s.dims.push(Dimension::new("n11_J", 15, 30, 3));
        s.dims.push(Dimension::new("n30_J", 2, 8, 2));
        s
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "3d" => Some(Self::canonical_3d()),
            "5d" => Some(Self::extended_5d()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn cardinality(&self) -> usize {
        self.dims.iter().map(Dimension::grid_len).product()
    }

    pub fn steps(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.step as f64).collect()
    }

    /// Grid point with mixed-radix index `i` (last dimension fastest).
    pub fn grid_point(&self, mut i: usize) -> Vec<i64> {
        let mut out = vec![0; self.dims.len()];
        for (k, d) in self.dims.iter().enumerate().rev() {
            let n = d.grid_len();
            out[k] = d.grid_value(i % n);
            i /= n;
        }
        out
    }

    pub fn grid_points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.cardinality()).map(move |i| self.grid_point(i))
    }

    pub fn contains(&self, values: &[i64]) -> bool {
        values.len() == self.dims.len() && self.dims.iter().zip(values).all(|(d, v)| (d.lower..=d.upper).contains(v))
    }

    pub fn on_grid(&self, values: &[i64]) -> bool {
        self.contains(values) && self.dims.iter().zip(values).all(|(d, v)| (v - d.lower) % d.step == 0)
    }

    pub fn clip(&self, values: &mut [i64]) {
        for (d, v) in self.dims.iter().zip(values.iter_mut()) {
            *v = d.clip(*v);
        }
    }

    pub fn random_grid_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        self.dims.iter().map(|d| d.grid_value(rng.random_range(0..d.grid_len()))).collect()
    }

    pub fn random_integer_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        self.dims.iter().map(|d| rng.random_range(d.lower..=d.upper)).collect()
    }
}

/// All points differing from `c` in exactly one dimension by one step,
/// clipped to bounds, in dimension order (minus before plus).
pub fn neighbors(c: &[i64], space: &SearchSpace) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for (k, d) in space.dims.iter().enumerate() {
        for delta in [-d.step, d.step] {
            let v = d.clip(c[k] + delta);
            if v == c[k] {
                continue;
            }
            let mut n = c.to_vec();
            n[k] = v;
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// Step-normalized Euclidean distance.
pub fn ned_values(a: &[i64], b: &[i64], steps: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(steps)
        .map(|((x, y), s)| ((x - y) as f64 / s).powi(2))
        .sum::<f64>()
        .sqrt()
}
