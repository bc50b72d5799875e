//! Online least-squares SGD as an interacting particle system.
//!
//! The centralized iterate `Δθ = θ − θ*` evolves as
//!
//! ```text
//! Δθ_i ← Δθ_i − η x_i ⟨x, Δθ⟩ + η x_i ε
//! ```
//!
//! and [`Trajectory::interpolate`] gives the space-time interpolation
//! `Θ̄(s, x)`: linear in time between `t = ⌊sT⌋` and `t + 1`, piecewise
//! linear in space with `Δθ_0 := Δθ_1`.

use rand::Rng;
use serde::Serialize;

use crate::field::{FieldSampler, NoiseSpec};
use crate::grid::{eval_piecewise_linear, GridFunction, InitProfile};
use crate::limit::LimitSolution;
use crate::{Error, Result};

/// `max|Δθ|` above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Snapping tolerance for time indices `sT` that land within rounding of an integer.
const TIME_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub d: usize,
    /// Time-resolution parameter `T`; step `t` sits at time `t/T`.
    pub t_param: f64,
    pub tau: f64,
    pub eta: f64,
    pub init: InitProfile,
    /// Declared Lipschitz constant `L` of the initial profile; defaults to the
    /// profile's own bound.
    pub init_lipschitz: Option<f64>,
    /// Store every k-th iterate; `None` means `max(1, ⌊N/1000⌋)`.
    pub record_stride: Option<usize>,
    /// Additional iterate indices to store regardless of the stride.
    pub record_extra: Vec<usize>,
    /// When set, run the raw recursion on `θ` and report `θ − θ*`.
    pub theta_star: Option<GridFunction>,
}

impl SgdConfig {
    pub fn new(d: usize, t_param: f64, tau: f64, eta: f64, init: InitProfile) -> Result<Self> {
        let cfg = Self {
            d,
            t_param,
            tau,
            eta,
            init,
            init_lipschitz: None,
            record_stride: None,
            record_extra: Vec::new(),
            theta_star: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn with_theta_star(mut self, theta_star: GridFunction) -> Self {
        self.theta_star = Some(theta_star);
        self
    }

    /// Also stores the iterates needed to interpolate at each time in `times`.
    pub fn recording_times(mut self, times: &[f64]) -> Self {
        for &s in times {
            let st = s * self.t_param;
            let t0 = snap_floor(st);
            self.record_extra.push(t0);
            self.record_extra.push(t0 + 1);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        for (name, v) in [("T", self.t_param), ("tau", self.tau), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.record_stride == Some(0) {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        if let Some(ts) = &self.theta_star {
            if ts.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: ts.len(),
                });
            }
        }
        let init = self.init.sample(self.d)?;
        let declared = self.init_lipschitz.or(self.init.lipschitz());
        if let (Some(l), false) = (declared, matches!(self.init, InitProfile::Custom { .. })) {
            let worst = init
                .values()
                .windows(2)
                .fold(0.0_f64, |m, w| m.max((w[1] - w[0]).abs()));
            if worst > l / self.d as f64 + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "initial profile jumps by {worst:.3e} between neighbours, more than L/d = {:.3e}",
                    l / self.d as f64
                )));
            }
        }
        Ok(())
    }

    /// `N = ⌊τT⌋`.
    pub fn n_steps(&self) -> usize {
        snap_floor(self.tau * self.t_param)
    }

    pub fn stride(&self) -> usize {
        self.record_stride.unwrap_or_else(|| (self.n_steps() / 1000).max(1))
    }

    /// `ηdT`, the low-noise stand-in for `α`.
    pub fn eta_dt(&self) -> f64 {
        self.eta * self.d as f64 * self.t_param
    }

    /// `ησ√T`, the high-noise stand-in for `α`.
    pub fn eta_sigma_sqrt_t(&self, sigma: f64) -> f64 {
        self.eta * sigma * self.t_param.sqrt()
    }

    fn is_recorded(&self, t: usize, stride: usize, n: usize) -> bool {
        t % stride == 0 || t == n || self.record_extra.contains(&t)
    }
}

/// `⌊v⌋`, treating values within `1e-9` below an integer as that integer.
fn snap_floor(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() < TIME_SNAP {
        r.max(0.0) as usize
    } else {
        v.floor().max(0.0) as usize
    }
}

/// Stored SGD iterates. Each state has `d + 1` entries with index 0 a copy of index 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub d: usize,
    pub t_param: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub stride: usize,
    states: Vec<(usize, Vec<f64>)>,
}

impl Trajectory {
    /// `1/T`.
    pub fn dt(&self) -> f64 {
        1.0 / self.t_param
    }

    pub fn states(&self) -> &[(usize, Vec<f64>)] {
        &self.states
    }

    pub fn recorded_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.states.iter().map(|(t, _)| *t)
    }

    /// Full stored vector (length `d + 1`) at iterate `t`.
    pub fn state(&self, t: usize) -> Option<&[f64]> {
        self.states
            .binary_search_by_key(&t, |(i, _)| *i)
            .ok()
            .map(|k| self.states[k].1.as_slice())
    }

    /// Grid values `Δθ^t_i`, `i = 1..=d`.
    pub fn grid_values(&self, t: usize) -> Result<&[f64]> {
        self.state(t).map(|v| &v[1..]).ok_or(Error::MissingState {
            index: t,
            stride: self.stride,
        })
    }

    pub fn final_values(&self) -> &[f64] {
        &self.states.last().expect("trajectory has at least one state").1[1..]
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if !(s.is_finite() && s >= -TIME_SNAP && s <= self.tau + TIME_SNAP) {
            return Err(Error::OutOfRange { s, tau: self.tau });
        }
        Ok(())
    }

    /// `Θ̄(s, x)`.
    pub fn interpolate(&self, s: f64, x: f64) -> Result<f64> {
        self.check_time(s)?;
        let st = s.max(0.0) * self.t_param;
        let t0 = snap_floor(st);
        let frac = (st - t0 as f64).max(0.0);
        let v0 = eval_piecewise_linear(self.grid_values(t0.min(self.n_steps))?, x);
        if frac < TIME_SNAP || t0 >= self.n_steps {
            return Ok(v0);
        }
        let v1 = eval_piecewise_linear(self.grid_values(t0 + 1)?, x);
        Ok((1.0 - frac) * v0 + frac * v1)
    }

    /// Grid values at `⌊sT⌋`, the sampling used by the discrete MSE/PE.
    pub fn values_at_floor(&self, s: f64) -> Result<&[f64]> {
        self.check_time(s)?;
        let t = snap_floor(s.max(0.0) * self.t_param).min(self.n_steps);
        self.grid_values(t)
    }
}

/// `Δθ − η x ⟨x, Δθ⟩ + η x ε`.
pub fn sgd_step(state: &GridFunction, x: &GridFunction, eps: f64, eta: f64) -> GridFunction {
    assert_eq!(state.len(), x.len(), "state and data must have equal length");
    let mut out = state.clone();
    sgd_step_in_place(out.values_mut(), x.values(), eps, eta);
    out
}

/// In-place form of [`sgd_step`]; one dot product and one axpy.
#[inline]
pub fn sgd_step_in_place(state: &mut [f64], x: &[f64], eps: f64, eta: f64) {
    let dot: f64 = state.iter().zip(x).map(|(a, b)| a * b).sum();
    let coef = eta * (eps - dot);
    for (s, xi) in state.iter_mut().zip(x) {
        *s += coef * xi;
    }
}

/// Raw recursion on `θ`: `θ ← θ + η(⟨x, θ*⟩ + ε − ⟨x, θ⟩)x`.
#[inline]
fn raw_step_in_place(theta: &mut [f64], theta_star: &[f64], x: &[f64], eps: f64, eta: f64) {
    let y: f64 = theta_star.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + eps;
    let pred: f64 = theta.iter().zip(x).map(|(a, b)| a * b).sum();
    let coef = eta * (y - pred);
    for (t, xi) in theta.iter_mut().zip(x) {
        *t += coef * xi;
    }
}

fn with_boundary(values: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(values.len() + 1);
    v.push(values[0]);
    v.extend_from_slice(values);
    v
}

/// Runs `N` SGD steps, drawing `x^t` from `field_rng` and `ε^t` from `noise_rng`.
pub fn run<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    config: &SgdConfig,
    sampler: &FieldSampler,
    noise: &NoiseSpec,
    field_rng: &mut R1,
    noise_rng: &mut R2,
) -> Result<Trajectory> {
    config.validate()?;
    if sampler.d() != config.d {
        return Err(Error::DimensionMismatch {
            expected: config.d,
            actual: sampler.d(),
        });
    }
    let n = config.n_steps();
    let stride = config.stride();
    let eta = config.eta;
    let delta0 = config.init.sample(config.d)?.into_inner();

    let theta_star = config.theta_star.as_ref().map(|g| g.values().to_vec());
    // the evolving vector: Δθ directly, or raw θ when θ* is given
    let mut state = match &theta_star {
        Some(ts) => delta0.iter().zip(ts).map(|(a, b)| a + b).collect(),
        None => delta0,
    };
    let centralized = |state: &[f64]| -> Vec<f64> {
        match &theta_star {
            Some(ts) => state.iter().zip(ts).map(|(a, b)| a - b).collect(),
            None => state.to_vec(),
        }
    };

    let mut states = vec![(0, with_boundary(&centralized(&state)))];
    let mut x = vec![0.0; config.d];
    let mut scratch = sampler.scratch();
    for t in 1..=n {
        sampler.draw_into(field_rng, &mut x, &mut scratch);
        let eps = noise.draw(noise_rng);
        match &theta_star {
            Some(ts) => raw_step_in_place(&mut state, ts, &x, eps, eta),
            None => sgd_step_in_place(&mut state, &x, eps, eta),
        }
        let record = config.is_recorded(t, stride, n);
        if record || t % 16 == 0 {
            let magnitude = centralized(&state).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if !(magnitude <= DIVERGENCE_THRESHOLD) {
                return Err(Error::Diverged { step: t, magnitude });
            }
        }
        if record {
            states.push((t, with_boundary(&centralized(&state))));
        }
    }
    Ok(Trajectory {
        d: config.d,
        t_param: config.t_param,
        tau: config.tau,
        n_steps: n,
        stride,
        states,
    })
}

/// `U(s, x) = γ(Θ̄(s, x) − Θ(s, x))`.
pub fn fluctuation_field(traj: &Trajectory, limit: &LimitSolution, gamma: f64, s: f64, x: f64) -> Result<f64> {
    Ok(gamma * (traj.interpolate(s, x)? - limit.eval(s, x)?))
}
