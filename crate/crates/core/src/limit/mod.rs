//! Solvers for the limiting equations on an `n`-point grid.
//!
//! All linear dynamics run in the eigenbasis of the quadrature operator
//! `Σ_n / n`, where `∂_s Θ = −α ∫A Θ` decouples into independent modes
//! `dc_k = −αλ_k c_k ds`. Noise fields with spatial covariance `A` enter a
//! mode with amplitude `√λ_k`.

mod noise;
mod picard;
mod stability;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::SpectralData;
use crate::grid::{eval_piecewise_linear, GridFunction};
use crate::{Error, Result};

pub use noise::{xi3_kernel, NoiseIncrements};
pub use picard::{picard_solve, PicardResult};
pub use stability::{stability_check, StabilityReport};

/// Default spatial grid size for limit solvers.
pub const DEFAULT_GRID: usize = 256;

/// `min(10⁻³, 1/(20αλ_max))`.
pub fn default_dt(alpha: f64, lambda_max: f64) -> f64 {
    let limit = alpha * lambda_max;
    if limit > 0.0 {
        1e-3_f64.min(1.0 / (20.0 * limit))
    } else {
        1e-3
    }
}

/// Uniform time grid on `[0, τ]` with every `stride`-th point stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
}

impl TimeGrid {
    /// Uses `⌈τ/dt⌉` steps (rounded when within `10⁻⁹` of an integer) of
    /// equal length `τ / n_steps`.
    pub fn new(tau: f64, dt: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let ratio = tau / dt;
        let n_steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        }
        .max(1);
        Ok(Self {
            tau,
            dt: tau / n_steps as f64,
            n_steps,
            stride: 1,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    /// Keeps only the initial and final time.
    pub fn endpoints_only(self) -> Self {
        let n = self.n_steps;
        self.with_stride(n)
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.n_steps {
            self.tau
        } else {
            step as f64 * self.dt
        }
    }

    pub fn is_recorded(&self, step: usize) -> bool {
        step % self.stride == 0 || step == self.n_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    DeterministicOde,
    PathwiseSde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    EulerMaruyama,
    ExactOu,
}

/// Which term dominates the fluctuation equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FluctuationRegime {
    ParticleInteraction,
    NoiseDominates,
    InterpolationError,
}

/// Grid values of a limit solution at stored times, with their mode coefficients.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub kind: SolutionKind,
    spectral: Arc<SpectralData>,
    times: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    values: Vec<GridFunction>,
}

impl LimitSolution {
    pub(crate) fn new(
        kind: SolutionKind,
        spectral: Arc<SpectralData>,
        times: Vec<f64>,
        coeffs: Vec<Vec<f64>>,
        values: Vec<GridFunction>,
    ) -> Self {
        debug_assert_eq!(times.len(), values.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self {
            kind,
            spectral,
            times,
            coeffs,
            values,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.spectral.grid_size
    }

    pub fn spectral(&self) -> &Arc<SpectralData> {
        &self.spectral
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[GridFunction] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn tau(&self) -> f64 {
        *self.times.last().expect("solution has at least one time")
    }

    pub fn final_values(&self) -> &GridFunction {
        self.values.last().expect("solution has at least one time")
    }

    /// Largest gap between stored times.
    pub fn max_time_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Bracketing stored indices and blend weight for time `s`.
    fn bracket(&self, s: f64) -> Result<(usize, usize, f64)> {
        let tau = self.tau();
        let tol = 1e-9 * tau.max(1.0);
        if !(s.is_finite() && s >= -tol && s <= tau + tol) {
            return Err(Error::OutOfRange { s, tau });
        }
        let s = s.clamp(0.0, tau);
        let hi = self.times.partition_point(|&t| t < s).min(self.times.len() - 1);
        if (self.times[hi] - s).abs() <= tol || hi == 0 {
            return Ok((hi, hi, 0.0));
        }
        let lo = hi - 1;
        let w = (s - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok((lo, hi, w))
    }

    /// Grid values at time `s`, linear between stored times.
    pub fn values_at(&self, s: f64) -> Result<GridFunction> {
        let (lo, hi, w) = self.bracket(s)?;
        if lo == hi {
            return Ok(self.values[lo].clone());
        }
        Ok(GridFunction::new(
            self.values[lo]
                .values()
                .iter()
                .zip(self.values[hi].values())
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        ))
    }

    /// Mode coefficients at time `s`, linear between stored times.
    pub fn coeffs_at(&self, s: f64) -> Result<Vec<f64>> {
        let (lo, hi, w) = self.bracket(s)?;
        if lo == hi {
            return Ok(self.coeffs[lo].clone());
        }
        Ok(self.coeffs[lo]
            .iter()
            .zip(&self.coeffs[hi])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect())
    }

    /// `Θ(s, x)`: linear in time between stored times, piecewise linear in space.
    pub fn eval(&self, s: f64, x: f64) -> Result<f64> {
        let (lo, hi, w) = self.bracket(s)?;
        let a = eval_piecewise_linear(self.values[lo].values(), x);
        if lo == hi {
            return Ok(a);
        }
        let b = eval_piecewise_linear(self.values[hi].values(), x);
        Ok((1.0 - w) * a + w * b)
    }
}

fn check_init(spectral: &SpectralData, init: &GridFunction) -> Result<()> {
    if init.len() != spectral.grid_size {
        return Err(Error::DimensionMismatch {
            expected: spectral.grid_size,
            actual: init.len(),
        });
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Accumulates stored times, applying the spectral reconstruction plus the
/// static part of the initial data lying outside the retained modes.
struct Recorder {
    spectral: Arc<SpectralData>,
    residual: Vec<f64>,
    times: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    values: Vec<GridFunction>,
}

impl Recorder {
    fn new(spectral: &Arc<SpectralData>, init: &GridFunction) -> (Self, Vec<f64>) {
        let c0 = spectral.project(init.values());
        let rec = spectral.reconstruct(&c0);
        let residual = init.values().iter().zip(rec.values()).map(|(a, b)| a - b).collect();
        (
            Self {
                spectral: Arc::clone(spectral),
                residual,
                times: Vec::new(),
                coeffs: Vec::new(),
                values: Vec::new(),
            },
            c0,
        )
    }

    fn push(&mut self, s: f64, c: &[f64]) {
        let mut v = self.spectral.reconstruct(c);
        for (a, r) in v.values_mut().iter_mut().zip(&self.residual) {
            *a += r;
        }
        self.times.push(s);
        self.coeffs.push(c.to_vec());
        self.values.push(v);
    }

    fn finish(self, kind: SolutionKind) -> LimitSolution {
        LimitSolution::new(kind, self.spectral, self.times, self.coeffs, self.values)
    }
}

/// `∂_s Θ = −α ∫A(x,y) Θ(s,y) dy`, solved exactly per mode:
/// `c_k(s) = c_k(0) e^{−αλ_k s}`. `dt` sets only the output times.
pub fn solve_ode(
    spectral: &Arc<SpectralData>,
    init: &GridFunction,
    alpha: f64,
    grid: &TimeGrid,
) -> Result<LimitSolution> {
    check_init(spectral, init)?;
    check_nonneg("alpha", alpha)?;
    let (mut rec, c0) = Recorder::new(spectral, init);
    for step in 0..=grid.n_steps {
        if grid.is_recorded(step) {
            let s = grid.time(step);
            let c: Vec<f64> = c0
                .iter()
                .zip(&spectral.eigenvalues)
                .map(|(c, l)| c * (-alpha * l * s).exp())
                .collect();
            rec.push(s, &c);
        }
    }
    Ok(rec.finish(SolutionKind::DeterministicOde))
}

/// Parameters of `dΘ = −α∫AΘ ds + αβ dξ₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSde {
    pub alpha: f64,
    pub beta: f64,
    pub scheme: SdeScheme,
    /// With `drift = false` the equation is the pure diffusion `dΘ = α dξ₁`.
    pub drift: bool,
}

impl ThetaSde {
    pub fn new(alpha: f64, beta: f64, scheme: SdeScheme) -> Self {
        Self {
            alpha,
            beta,
            scheme,
            drift: true,
        }
    }

    /// `dΘ = α dξ₁`.
    pub fn diffusion_only(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 1.0,
            scheme: SdeScheme::ExactOu,
            drift: false,
        }
    }
}

/// One path of the theta SDE. Each mode is an OU process
/// `dc_k = −αλ_k c_k ds + αβ√λ_k dW_k`.
pub fn solve_theta_sde<R: Rng + ?Sized>(
    spectral: &Arc<SpectralData>,
    init: &GridFunction,
    params: &ThetaSde,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<LimitSolution> {
    check_init(spectral, init)?;
    check_nonneg("alpha", params.alpha)?;
    check_nonneg("beta", params.beta)?;
    let alpha = params.alpha;
    let dt = grid.dt;
    if params.drift && params.scheme == SdeScheme::EulerMaruyama {
        let limit = 1.0 / (10.0 * alpha * spectral.lambda_max());
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::UnstableStep { dt, limit });
        }
    }
    let amp = alpha * params.beta;
    // per-mode (multiplier, noise standard deviation)
    let step: Vec<(f64, f64)> = spectral
        .eigenvalues
        .iter()
        .map(|&l| {
            if !params.drift {
                return (1.0, amp * (l * dt).sqrt());
            }
            let rate = alpha * l;
            match params.scheme {
                SdeScheme::ExactOu => {
                    let var = if rate > 0.0 { -(-2.0 * rate * dt).exp_m1() / (2.0 * rate) } else { dt };
                    ((-rate * dt).exp(), amp * (l * var).sqrt())
                }
                SdeScheme::EulerMaruyama => (1.0 - rate * dt, amp * (l * dt).sqrt()),
            }
        })
        .collect();
    let (mut rec, mut c) = Recorder::new(spectral, init);
    rec.push(0.0, &c);
    for j in 1..=grid.n_steps {
        for (ck, &(mult, sd)) in c.iter_mut().zip(&step) {
            let z: f64 = if sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *ck = mult * *ck + sd * z;
        }
        if grid.is_recorded(j) {
            rec.push(grid.time(j), &c);
        }
    }
    Ok(rec.finish(SolutionKind::PathwiseSde))
}

/// Parameters of the fluctuation equation
/// `dU = −α∫AU ds + αβ dξ₂ + αζ dξ₃`.
#[derive(Debug, Clone)]
pub struct FluctuationSpec {
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    pub regime: FluctuationRegime,
    /// ODE solution `Θ` on the same spatial grid; sets the ξ₃ covariance.
    pub theta_path: Arc<LimitSolution>,
}

impl FluctuationSpec {
    pub fn new(
        alpha: f64,
        beta: f64,
        zeta: f64,
        regime: FluctuationRegime,
        theta_path: Arc<LimitSolution>,
    ) -> Result<Self> {
        check_nonneg("alpha", alpha)?;
        check_nonneg("beta", beta)?;
        check_nonneg("zeta", zeta)?;
        Ok(Self {
            alpha,
            beta,
            zeta,
            regime,
            theta_path,
        })
    }

    /// `β`, zero under interpolation-error dominance.
    pub fn effective_beta(&self) -> f64 {
        match self.regime {
            FluctuationRegime::InterpolationError => 0.0,
            _ => self.beta,
        }
    }

    /// `ζ`, zero unless particle interaction dominates.
    pub fn effective_zeta(&self) -> f64 {
        match self.regime {
            FluctuationRegime::ParticleInteraction => self.zeta,
            _ => 0.0,
        }
    }

    pub(crate) fn check(&self, spectral: &Arc<SpectralData>, grid: &TimeGrid) -> Result<()> {
        if self.theta_path.grid_size() != spectral.grid_size {
            return Err(Error::DimensionMismatch {
                expected: spectral.grid_size,
                actual: self.theta_path.grid_size(),
            });
        }
        if self.theta_path.tau() < grid.tau * (1.0 - 1e-12) {
            return Err(Error::OutOfRange {
                s: grid.tau,
                tau: self.theta_path.tau(),
            });
        }
        if self.effective_zeta() > 0.0 && self.theta_path.max_time_step() > grid.dt * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "theta path time step {} is coarser than dt = {}",
                self.theta_path.max_time_step(),
                grid.dt
            )));
        }
        Ok(())
    }
}

/// Mode-space stepper shared by the sampled and frozen-noise fluctuation
/// solvers: `c ← e^{−αλΔ} c + αβ Δξ₂ + αζ Δξ₃`.
fn fluctuation_from_increments(
    spec: &FluctuationSpec,
    spectral: &Arc<SpectralData>,
    init_u: &GridFunction,
    grid: &TimeGrid,
    mut increments: impl FnMut(usize, &mut [f64], &mut [f64]) -> Result<()>,
) -> Result<LimitSolution> {
    check_init(spectral, init_u)?;
    spec.check(spectral, grid)?;
    let beta = spec.effective_beta();
    let zeta = spec.effective_zeta();
    let alpha = spec.alpha;
    let decay: Vec<f64> = spectral
        .eigenvalues
        .iter()
        .map(|l| (-alpha * l * grid.dt).exp())
        .collect();
    let m = spectral.modes();
    let mut d2 = vec![0.0; m];
    let mut d3 = vec![0.0; m];
    let (mut rec, mut c) = Recorder::new(spectral, init_u);
    rec.push(0.0, &c);
    let deterministic = beta == 0.0 && zeta == 0.0;
    for j in 0..grid.n_steps {
        if !deterministic {
            increments(j, &mut d2, &mut d3)?;
        }
        for k in 0..m {
            c[k] = decay[k] * c[k];
            if !deterministic {
                c[k] += alpha * (beta * d2[k] + zeta * d3[k]);
            }
        }
        if grid.is_recorded(j + 1) {
            rec.push(grid.time(j + 1), &c);
        }
    }
    let kind = if deterministic {
        SolutionKind::DeterministicOde
    } else {
        SolutionKind::PathwiseSde
    };
    Ok(rec.finish(kind))
}

/// One path of the fluctuation SDE, drawing ξ₂ increments from `noise_rng`
/// and ξ₃ increments from the independent `interaction_rng`.
pub fn solve_fluctuation_sde<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    spec: &FluctuationSpec,
    spectral: &Arc<SpectralData>,
    init_u: &GridFunction,
    grid: &TimeGrid,
    noise_rng: &mut R1,
    interaction_rng: &mut R2,
) -> Result<LimitSolution> {
    let need_xi3 = spec.effective_zeta() > 0.0;
    fluctuation_from_increments(spec, spectral, init_u, grid, |j, d2, d3| {
        noise::draw_xi2(spectral, grid.dt, noise_rng, d2);
        if need_xi3 {
            let theta = spec.theta_path.coeffs_at(grid.time(j))?;
            noise::draw_xi3(spectral, &theta, grid.dt, interaction_rng, d3)?;
        } else {
            d3.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    })
}

/// The fluctuation SDE driven by precomputed increments.
pub fn solve_fluctuation_frozen(
    spec: &FluctuationSpec,
    spectral: &Arc<SpectralData>,
    init_u: &GridFunction,
    grid: &TimeGrid,
    increments: &NoiseIncrements,
) -> Result<LimitSolution> {
    increments.check(spectral, grid)?;
    fluctuation_from_increments(spec, spectral, init_u, grid, |j, d2, d3| {
        d2.copy_from_slice(increments.xi2(j));
        d3.copy_from_slice(increments.xi3(j));
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceModel;
    use crate::grid::SmoothProfile;
    use crate::streams::{substream, Role};
    use nalgebra::DVector;
    use std::f64::consts::{PI, SQRT_2};

    fn example1_spectral(n: usize) -> Arc<SpectralData> {
        Arc::new(CovarianceModel::example1().spectral_decompose(n, 0.0).unwrap())
    }

    #[test]
    fn ode_constant_init() {
        let sp = example1_spectral(64);
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let sol = solve_ode(&sp, &GridFunction::constant(64, 1.5), 2.0, &grid).unwrap();
        let want = 1.5 * (-2.0f64).exp();
        assert!(sol.final_values().values().iter().all(|v| (v - want).abs() < 1e-10));
        for v in sol.values() {
            let spread = v.values().iter().cloned().fold(f64::MIN, f64::max)
                - v.values().iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-10);
        }
        assert_eq!(sol.times()[0], 0.0);
        assert_eq!(sol.tau(), 1.0);
    }

    #[test]
    fn ode_eigenfunction_init_relative_error() {
        let n = 128;
        let sp = example1_spectral(n);
        let init = GridFunction::from_fn(n, |x| SQRT_2 * (2.0 * PI * x).cos());
        let grid = TimeGrid::new(2.0, 0.05).unwrap();
        let sol = solve_ode(&sp, &init, 2.0, &grid).unwrap();
        for (s, v) in sol.times().iter().zip(sol.values()) {
            let factor = (-s).exp();
            for (a, b) in v.values().iter().zip(init.values()) {
                assert!((a - factor * b).abs() <= 1e-8 * factor * b.abs().max(1e-300) + 1e-12);
            }
        }
    }

    #[test]
    fn ode_matches_rk4_reference() {
        let n = 64;
        let model = CovarianceModel::example1();
        let sp = Arc::new(model.spectral_decompose(n, 0.0).unwrap());
        let init = SmoothProfile::Mixed.sample(n);
        let alpha = 2.0;
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let sol = solve_ode(&sp, &init, alpha, &grid).unwrap();
        let op = model.sigma_matrix(n).unwrap() / n as f64;
        let f = |u: &DVector<f64>| -(&op * u) * alpha;
        let h = 1e-4;
        let mut u = DVector::from_column_slice(init.values());
        for _ in 0..10_000 {
            let k1 = f(&u);
            let k2 = f(&(&u + &k1 * (h / 2.0)));
            let k3 = f(&(&u + &k2 * (h / 2.0)));
            let k4 = f(&(&u + &k3 * h));
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let err = sol
            .final_values()
            .values()
            .iter()
            .zip(u.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn solution_eval_interpolates() {
        let sp = example1_spectral(16);
        let grid = TimeGrid::new(1.0, 0.5).unwrap();
        let sol = solve_ode(&sp, &GridFunction::constant(16, 1.0), 1.0, &grid).unwrap();
        let a = (-0.5f64).exp();
        let b = (-1.0f64).exp();
        assert!((sol.eval(0.75, 0.3).unwrap() - 0.5 * (a + b)).abs() < 1e-10);
        assert!(sol.eval(1.1, 0.3).is_err());
    }

    #[test]
    fn sde_without_noise_matches_ode() {
        let n = 32;
        let sp = example1_spectral(n);
        let init = SmoothProfile::Mixed.sample(n);
        let grid = TimeGrid::new(1.0, 1e-3).unwrap().with_stride(100);
        let ode = solve_ode(&sp, &init, 2.0, &grid).unwrap();
        let mut rng = substream(0, 0, 0, Role::LimitNoise);
        let exact = solve_theta_sde(&sp, &init, &ThetaSde::new(2.0, 0.0, SdeScheme::ExactOu), &grid, &mut rng).unwrap();
        let em = solve_theta_sde(&sp, &init, &ThetaSde::new(2.0, 0.0, SdeScheme::EulerMaruyama), &grid, &mut rng).unwrap();
        for ((a, b), c) in ode.values().iter().zip(exact.values()).zip(em.values()) {
            assert!(a.max_abs_diff(b) < 1e-10);
            assert!(a.max_abs_diff(c) < 10.0 * grid.dt);
        }
    }

    #[test]
    fn euler_maruyama_rejects_large_steps() {
        let sp = example1_spectral(16);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let r = solve_theta_sde(
            &sp,
            &GridFunction::zeros(16),
            &ThetaSde::new(2.0, 1.0, SdeScheme::EulerMaruyama),
            &grid,
            &mut substream(0, 0, 0, Role::LimitNoise),
        );
        assert!(matches!(r, Err(Error::UnstableStep { .. })));
    }

    #[test]
    fn ou_stationary_variance() {
        let n = 32;
        let sp = example1_spectral(n);
        let (alpha, beta) = (2.0, 1.0);
        let params = ThetaSde::new(alpha, beta, SdeScheme::ExactOu);
        // s = 5/(αλ) for the slowest retained mode λ = 1/2
        let grid = TimeGrid::new(5.0, 0.05).unwrap().endpoints_only();
        let paths = 500;
        let mut samples = vec![Vec::new(); 3];
        for p in 0..paths {
            let sol = solve_theta_sde(&sp, &GridFunction::zeros(n), &params, &grid, &mut substream(1, 0, p, Role::LimitNoise)).unwrap();
            let c = sol.coeffs().last().unwrap();
            for k in 0..3 {
                samples[k].push(c[k]);
            }
        }
        let want = alpha * beta * beta / 2.0;
        for s in samples {
            let var = s.iter().map(|v| v * v).sum::<f64>() / paths as f64;
            assert!((var / want - 1.0).abs() < 0.15, "{var} vs {want}");
        }
    }

    #[test]
    fn diffusion_only_variance() {
        let n = 32;
        let sp = example1_spectral(n);
        let grid = TimeGrid::new(1.0, 0.05).unwrap().endpoints_only();
        let paths = 1000;
        let vals: Vec<f64> = (0..paths)
            .map(|p| {
                let sol = solve_theta_sde(
                    &sp,
                    &GridFunction::zeros(n),
                    &ThetaSde::diffusion_only(1.0),
                    &grid,
                    &mut substream(2, 0, p, Role::LimitNoise),
                )
                .unwrap();
                sol.eval(1.0, 0.5).unwrap()
            })
            .collect();
        let var = vals.iter().map(|v| v * v).sum::<f64>() / paths as f64;
        assert!((var - 2.0).abs() < 0.15 * 2.0, "{var}");
    }

    fn fluct_spec(alpha: f64, beta: f64, zeta: f64, regime: FluctuationRegime, sp: &Arc<SpectralData>, tau: f64, init: &GridFunction, dt: f64) -> FluctuationSpec {
        let theta = solve_ode(sp, init, alpha, &TimeGrid::new(tau, dt).unwrap()).unwrap();
        FluctuationSpec::new(alpha, beta, zeta, regime, Arc::new(theta)).unwrap()
    }

    #[test]
    fn fluctuation_without_noise_is_ode() {
        let n = 32;
        let sp = example1_spectral(n);
        let init = SmoothProfile::Mixed.sample(n);
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let spec = fluct_spec(1.0, 0.7, 0.4, FluctuationRegime::InterpolationError, &sp, 1.0, &GridFunction::constant(n, 1.0), grid.dt);
        let u = solve_fluctuation_sde(&spec, &sp, &init, &grid, &mut substream(0, 0, 0, Role::LimitNoise), &mut substream(0, 0, 0, Role::LimitInteraction)).unwrap();
        let ode = solve_ode(&sp, &init, 1.0, &grid).unwrap();
        assert_eq!(u.kind, SolutionKind::DeterministicOde);
        assert!(u.final_values().max_abs_diff(ode.final_values()) < 1e-10);
    }

    #[test]
    fn regimes_zero_out_terms() {
        let n = 16;
        let sp = example1_spectral(n);
        let spec = fluct_spec(1.0, 2.0, 3.0, FluctuationRegime::NoiseDominates, &sp, 1.0, &GridFunction::constant(n, 1.0), 0.1);
        assert_eq!(spec.effective_zeta(), 0.0);
        assert_eq!(spec.effective_beta(), 2.0);
        let spec = FluctuationSpec { regime: FluctuationRegime::ParticleInteraction, ..spec };
        assert_eq!(spec.effective_zeta(), 3.0);
    }

    #[test]
    fn zero_signal_matches_noise_regime_law() {
        let n = 16;
        let sp = example1_spectral(n);
        let grid = TimeGrid::new(0.5, 1e-2).unwrap();
        let zero = fluct_spec(1.0, 1.0, 1.0, FluctuationRegime::ParticleInteraction, &sp, 0.5, &GridFunction::zeros(n), grid.dt);
        let noise_only = FluctuationSpec { regime: FluctuationRegime::NoiseDominates, ..zero.clone() };
        let a = solve_fluctuation_sde(&zero, &sp, &GridFunction::zeros(n), &grid, &mut substream(5, 0, 0, Role::LimitNoise), &mut substream(5, 0, 0, Role::LimitInteraction)).unwrap();
        let b = solve_fluctuation_sde(&noise_only, &sp, &GridFunction::zeros(n), &grid, &mut substream(5, 0, 0, Role::LimitNoise), &mut substream(5, 0, 0, Role::LimitInteraction)).unwrap();
        assert!(a.final_values().max_abs_diff(b.final_values()) < 1e-14);
    }

    #[test]
    fn xi3_variance_matches_kernel_integral() {
        // Example 1 with constant Θ(s) = e^{−αs}: K_s(x,x) = 3e^{−2αs}
        let n = 32;
        let model = CovarianceModel::example1();
        let sp = Arc::new(model.spectral_decompose(n, 0.0).unwrap());
        let (alpha, tau) = (1.0, 0.5);
        let grid = TimeGrid::new(tau, 1e-2).unwrap();
        let spec = fluct_spec(alpha, 0.0, 1.0, FluctuationRegime::ParticleInteraction, &sp, tau, &GridFunction::constant(n, 1.0), grid.dt);
        let node = n / 2 - 1; // x = 1/2
        let paths = 1000;
        let vals: Vec<f64> = (0..paths)
            .map(|p| {
                let inc = NoiseIncrements::generate(
                    &spec,
                    &sp,
                    &grid,
                    &mut substream(3, 0, p, Role::LimitNoise),
                    &mut substream(3, 0, p, Role::LimitInteraction),
                )
                .unwrap();
                let mut total = vec![0.0; sp.modes()];
                for j in 0..inc.n_steps {
                    for (t, v) in total.iter_mut().zip(inc.xi3(j)) {
                        *t += v;
                    }
                }
                sp.reconstruct(&total).values()[node]
            })
            .collect();
        let var = vals.iter().map(|v| v * v).sum::<f64>() / paths as f64;
        let integral: f64 = (0..grid.n_steps)
            .map(|j| 3.0 * (-2.0 * alpha * j as f64 * grid.dt).exp() * grid.dt)
            .sum();
        assert!((var / integral - 1.0).abs() < 0.1, "{var} vs {integral}");
    }
}
