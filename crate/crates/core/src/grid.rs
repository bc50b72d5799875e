//! Functions sampled on the uniform grid `{i/n : i = 1..n}`.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Values `f(i/n)` for `i = 1..=n`.
///
/// Point evaluation between nodes is piecewise linear, with the value at
/// `x = 0` taken equal to the value at the first node `1/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    /// Samples `f` at `i/n`, `i = 1..=n`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self((1..=n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Grid location of node `i` (zero-based storage index).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.0.len() as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_piecewise_linear(&self.0, x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Left-endpoint quadrature of `f²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>() / self.0.len() as f64
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Piecewise-linear evaluation of grid values `v[i-1] = f(i/n)` at `x ∈ [0,1]`.
///
/// Uses the blend `(⌊nx⌋+1−nx)·f(⌊nx⌋/n) + (nx−⌊nx⌋)·f((⌊nx⌋+1)/n)` with
/// `f(0) := f(1/n)`.
pub(crate) fn eval_piecewise_linear(v: &[f64], x: f64) -> f64 {
    let n = v.len();
    let at = |i: usize| v[i.clamp(1, n) - 1];
    let nx = x.clamp(0.0, 1.0) * n as f64;
    let mut i = nx.floor() as usize;
    let mut frac = nx - i as f64;
    // snap values within rounding of a node
    if frac > 1.0 - 1e-12 {
        i += 1;
        frac = 0.0;
    } else if frac < 1e-12 {
        frac = 0.0;
    }
    if frac == 0.0 || i >= n {
        at(i)
    } else {
        (1.0 - frac) * at(i) + frac * at(i + 1)
    }
}

/// Named C¹ initial profiles on `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothProfile {
    /// `amplitude·√2·cos(2πkx)`.
    Cosine { amplitude: f64, k: u32 },
    /// `1 + √2·cos(2πx)`.
    Mixed,
    /// `Σ_{k=1..modes} (a_k √2 cos 2πkx + b_k √2 sin 2πkx) / k²` plus a
    /// constant `a_0`, with standard normal coefficients drawn from `seed`.
    RandomFourier { seed: u64, modes: u32 },
}

impl SmoothProfile {
    fn coefficients(&self) -> Vec<(u32, f64, f64)> {
        match *self {
            SmoothProfile::Cosine { amplitude, k } => vec![(k, amplitude, 0.0)],
            SmoothProfile::Mixed => vec![(0, 1.0, 0.0), (1, 1.0, 0.0)],
            SmoothProfile::RandomFourier { seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut c = vec![(0, rng.sample::<f64, _>(StandardNormal), 0.0)];
                for k in 1..=modes {
                    let w = 1.0 / (k as f64 * k as f64);
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    c.push((k, a * w, b * w));
                }
                c
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients()
            .into_iter()
            .map(|(k, a, b)| {
                if k == 0 {
                    a
                } else {
                    let arg = 2.0 * PI * k as f64 * x;
                    SQRT_2 * (a * arg.cos() + b * arg.sin())
                }
            })
            .sum()
    }

    /// Bound on `|g'|`.
    pub fn lipschitz(&self) -> f64 {
        self.coefficients()
            .into_iter()
            .map(|(k, a, b)| SQRT_2 * 2.0 * PI * k as f64 * (a.abs() + b.abs()))
            .sum()
    }

    pub fn sample(&self, n: usize) -> GridFunction {
        let c = self.coefficients();
        GridFunction::from_fn(n, |x| {
            c.iter()
                .map(|&(k, a, b)| {
                    if k == 0 {
                        a
                    } else {
                        let arg = 2.0 * PI * k as f64 * x;
                        SQRT_2 * (a * arg.cos() + b * arg.sin())
                    }
                })
                .sum()
        })
    }
}

/// Initial condition `Δθ⁰` for the particle system and for the limit equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitProfile {
    Constant { value: f64 },
    Smooth { profile: SmoothProfile },
    Custom { values: GridFunction },
}

impl InitProfile {
    pub fn constant(value: f64) -> Self {
        InitProfile::Constant { value }
    }

    pub fn smooth(profile: SmoothProfile) -> Self {
        InitProfile::Smooth { profile }
    }

    /// Samples the profile on the `n`-point grid. Custom profiles must already
    /// have length `n`.
    pub fn sample(&self, n: usize) -> Result<GridFunction> {
        match self {
            InitProfile::Constant { value } => Ok(GridFunction::constant(n, *value)),
            InitProfile::Smooth { profile } => Ok(profile.sample(n)),
            InitProfile::Custom { values } => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: values.len(),
                    });
                }
                Ok(values.clone())
            }
        }
    }

    /// Like [`sample`](Self::sample), but custom profiles of another length
    /// are interpolated piecewise linearly onto the `n`-point grid.
    pub fn resampled(&self, n: usize) -> GridFunction {
        match self {
            InitProfile::Custom { values } if values.len() != n => {
                GridFunction::from_fn(n, |x| values.eval(x))
            }
            _ => self.sample(n).expect("lengths agree"),
        }
    }

    /// Lipschitz constant of the underlying profile; `None` for custom data.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            InitProfile::Constant { .. } => Some(0.0),
            InitProfile::Smooth { profile } => Some(profile.lipschitz()),
            InitProfile::Custom { .. } => None,
        }
    }
}
