//! Gaussian field increments driving the fluctuation equation.
//!
//! Over a step of length `Δ`, ξ₂ has spatial covariance `Δ·A(x,y)` and ξ₃ has
//! `Δ·K_s(x,y)` with
//!
//! ```text
//! K_s(x,y) = ∫∫ Θ(s,z₁) Θ(s,z₂) Cov(W(x)W(z₁), W(y)W(z₂)) dz₁ dz₂
//!          = A(x,y)·⟨Θ, AΘ⟩ + (AΘ)(x)·(AΘ)(y)
//! ```
//!
//! by Isserlis. In the eigenbasis `AΘ` has coefficients `λ_k θ_k` and
//! `⟨Θ, AΘ⟩ = Σ λ_k θ_k²`, so an increment is
//! `√(qΔλ_k) Z'_k + λ_k θ_k √Δ Z` with one shared scalar `Z`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{FluctuationSpec, TimeGrid};
use crate::covariance::{CovarianceModel, SpectralData, PSD_CLIP_TOL};
use crate::grid::GridFunction;
use crate::{Error, Result};

pub(super) fn draw_xi2<R: Rng + ?Sized>(spectral: &SpectralData, dt: f64, rng: &mut R, out: &mut [f64]) {
    for (o, &l) in out.iter_mut().zip(&spectral.eigenvalues) {
        let z: f64 = rng.sample(StandardNormal);
        *o = (l * dt).sqrt() * z;
    }
}

pub(super) fn draw_xi3<R: Rng + ?Sized>(
    spectral: &SpectralData,
    theta: &[f64],
    dt: f64,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let q: f64 = spectral
        .eigenvalues
        .iter()
        .zip(theta)
        .map(|(l, t)| l * t * t)
        .sum();
    let scale = theta.iter().map(|t| t * t).sum::<f64>().max(1.0) * spectral.lambda_max();
    if q < -PSD_CLIP_TOL * scale {
        return Err(Error::NotPsd {
            eigenvalue: q,
            tolerance: PSD_CLIP_TOL * scale,
        });
    }
    let q = q.max(0.0);
    let shared: f64 = rng.sample(StandardNormal);
    let sqrt_dt = dt.sqrt();
    for ((o, &l), &t) in out.iter_mut().zip(&spectral.eigenvalues).zip(theta) {
        let z: f64 = rng.sample(StandardNormal);
        *o = (q * dt * l).sqrt() * z + l * t * sqrt_dt * shared;
    }
    Ok(())
}

/// `K(x_i, x_j) = A_ij·q + v_i v_j` on the `n`-point grid of `theta`, with
/// `v = (Σ_n/n) θ` and `q = θᵀ Σ_n θ / n²`. O(n²).
pub fn xi3_kernel(model: &CovarianceModel, theta: &GridFunction) -> Result<DMatrix<f64>> {
    let n = theta.len();
    let sigma = model.sigma_matrix(n)?;
    let th = DVector::from_column_slice(theta.values());
    let v = &sigma * &th / n as f64;
    let q = th.dot(&v) / n as f64;
    Ok(sigma * q + &v * v.transpose())
}

/// Frozen per-step mode increments of ξ₂ and ξ₃ for one path.
#[derive(Debug, Clone)]
pub struct NoiseIncrements {
    pub dt: f64,
    pub n_steps: usize,
    modes: usize,
    xi2: Vec<f64>,
    xi3: Vec<f64>,
}

impl NoiseIncrements {
    /// Draws increments for every step of `grid`; ξ₃ follows `spec.theta_path`
    /// at each step's left endpoint.
    pub fn generate<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        spec: &FluctuationSpec,
        spectral: &Arc<SpectralData>,
        grid: &TimeGrid,
        noise_rng: &mut R1,
        interaction_rng: &mut R2,
    ) -> Result<Self> {
        let m = spectral.modes();
        let mut xi2 = vec![0.0; grid.n_steps * m];
        let mut xi3 = vec![0.0; grid.n_steps * m];
        for j in 0..grid.n_steps {
            draw_xi2(spectral, grid.dt, noise_rng, &mut xi2[j * m..(j + 1) * m]);
            let theta = spec.theta_path.coeffs_at(grid.time(j))?;
            draw_xi3(spectral, &theta, grid.dt, interaction_rng, &mut xi3[j * m..(j + 1) * m])?;
        }
        Ok(Self {
            dt: grid.dt,
            n_steps: grid.n_steps,
            modes: m,
            xi2,
            xi3,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn xi2(&self, step: usize) -> &[f64] {
        &self.xi2[step * self.modes..(step + 1) * self.modes]
    }

    pub fn xi3(&self, step: usize) -> &[f64] {
        &self.xi3[step * self.modes..(step + 1) * self.modes]
    }

    /// Increments on a grid with twice the step, obtained by summing
    /// consecutive pairs. Requires an even step count.
    pub fn coarsen(&self) -> Result<Self> {
        if self.n_steps % 2 != 0 {
            return Err(Error::InvalidArgument("coarsening needs an even number of steps".into()));
        }
        let m = self.modes;
        let pairwise = |v: &[f64]| -> Vec<f64> {
            v.chunks(2 * m)
                .flat_map(|c| (0..m).map(move |k| c[k] + c[m + k]))
                .collect()
        };
        Ok(Self {
            dt: 2.0 * self.dt,
            n_steps: self.n_steps / 2,
            modes: m,
            xi2: pairwise(&self.xi2),
            xi3: pairwise(&self.xi3),
        })
    }

    pub(super) fn check(&self, spectral: &SpectralData, grid: &TimeGrid) -> Result<()> {
        if self.modes != spectral.modes() {
            return Err(Error::DimensionMismatch {
                expected: spectral.modes(),
                actual: self.modes,
            });
        }
        if self.n_steps != grid.n_steps || (self.dt - grid.dt).abs() > 1e-12 * grid.dt {
            return Err(Error::InvalidArgument(format!(
                "increments cover {} steps of {}, grid has {} steps of {}",
                self.n_steps, self.dt, grid.n_steps, grid.dt
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{solve_ode, FluctuationRegime};
    use crate::streams::{substream, Role};

    fn naive_kernel(model: &CovarianceModel, theta: &GridFunction) -> DMatrix<f64> {
        let n = theta.len();
        let x = |i: usize| (i + 1) as f64 / n as f64;
        DMatrix::from_fn(n, n, |i, j| {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += theta.values()[a]
                        * theta.values()[b]
                        * model.eval_product_covariance(x(i), x(a), x(j), x(b));
                }
            }
            acc / (n * n) as f64
        })
    }

    #[test]
    fn fast_kernel_matches_naive_contraction() {
        let n = 16;
        for model in [CovarianceModel::example1(), CovarianceModel::example2(8)] {
            let theta = GridFunction::from_fn(n, |x| 1.0 + (7.0 * x).sin() - x * x);
            let fast = xi3_kernel(&model, &theta).unwrap();
            let slow = naive_kernel(&model, &theta);
            assert!((fast - slow).amax() < 1e-10);
        }
    }

    #[test]
    fn mode_increments_have_kernel_covariance() {
        let n = 16;
        let model = CovarianceModel::example2(6);
        let sp = model.spectral_decompose(n, 0.0).unwrap();
        let theta = GridFunction::from_fn(n, |x| (3.0 * x).cos() + 0.5);
        let c = sp.project(theta.values());
        // Cov(V·inc) = V diag(qλ) Vᵀ + (V λθ)(V λθ)ᵀ per unit time
        let q: f64 = sp.eigenvalues.iter().zip(&c).map(|(l, t)| l * t * t).sum();
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(sp.modes(), sp.eigenvalues.iter().map(|l| l * q)));
        let lt = DVector::from_iterator(sp.modes(), sp.eigenvalues.iter().zip(&c).map(|(l, t)| l * t));
        let v = &sp.eigenvectors * lt;
        let cov = &sp.eigenvectors * lam * sp.eigenvectors.transpose() + &v * v.transpose();
        let kernel = xi3_kernel(&model, &theta).unwrap();
        assert!((cov - kernel).amax() < 1e-10);
    }

    #[test]
    fn xi2_and_xi3_are_uncorrelated() {
        let n = 16;
        let model = CovarianceModel::example1();
        let sp = Arc::new(model.spectral_decompose(n, 0.0).unwrap());
        let grid = TimeGrid::new(10.0, 1e-3).unwrap();
        let theta = solve_ode(&sp, &GridFunction::constant(n, 1.0), 0.1, &grid).unwrap();
        let spec = FluctuationSpec::new(0.1, 1.0, 1.0, FluctuationRegime::ParticleInteraction, Arc::new(theta)).unwrap();
        let inc = NoiseIncrements::generate(&spec, &sp, &grid, &mut substream(4, 0, 0, Role::LimitNoise), &mut substream(4, 0, 0, Role::LimitInteraction)).unwrap();
        // constant mode increments, normalized to unit variance
        let k = 0;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for j in 0..inc.n_steps {
            let (a, b) = (inc.xi2(j)[k], inc.xi3(j)[k]);
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 4.0 / (inc.n_steps as f64).sqrt(), "{corr}");
    }

    #[test]
    fn kernel_matches_quadrature_oracle_on_diagonal() {
        // Example 1, Θ ≡ 1: K(x,x) = ∫∫ Cov(W(x)W(z₁), W(x)W(z₂)) dz₁dz₂ = 3
        let model = CovarianceModel::example1();
        let n = 256;
        let x = 0.5;
        let mut acc = 0.0;
        for a in 1..=n {
            for b in 1..=n {
                acc += model.eval_product_covariance(x, a as f64 / n as f64, x, b as f64 / n as f64);
            }
        }
        let quad = acc / (n * n) as f64;
        assert!((quad - 3.0).abs() < 1e-9);
        let k = xi3_kernel(&model, &GridFunction::constant(32, 1.0)).unwrap();
        assert!((k[(15, 15)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coarsening_sums_pairs() {
        let n = 8;
        let model = CovarianceModel::example1();
        let sp = Arc::new(model.spectral_decompose(n, 0.0).unwrap());
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let theta = solve_ode(&sp, &GridFunction::constant(n, 1.0), 1.0, &grid).unwrap();
        let spec = FluctuationSpec::new(1.0, 1.0, 1.0, FluctuationRegime::ParticleInteraction, Arc::new(theta)).unwrap();
        let inc = NoiseIncrements::generate(&spec, &sp, &grid, &mut substream(0, 0, 0, Role::LimitNoise), &mut substream(0, 0, 0, Role::LimitInteraction)).unwrap();
        let c = inc.coarsen().unwrap();
        assert_eq!(c.n_steps, 2);
        assert!((c.dt - 0.5).abs() < 1e-15);
        assert_eq!(c.xi2(1)[0], inc.xi2(2)[0] + inc.xi2(3)[0]);
        assert_eq!(c.xi3(0)[2], inc.xi3(0)[2] + inc.xi3(1)[2]);
        assert!(c.coarsen().unwrap().coarsen().is_err());
    }
}
