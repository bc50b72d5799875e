//! Sampling the data field `x^t` and the observation noise `ε^t`.
//!
//! Draws are white in time: each call produces an independent
//! `N(0, Σ_d)` vector. On the grid `{i/d}` every sinusoidal kernel gives a
//! circulant `Σ_d`, so the FFT path needs no embedding padding.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::grid::GridFunction;
use crate::{Error, Result};

/// Maximum deviation tolerated when checking that `Σ_d` is circulant.
pub const CIRCULANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Dense,
    CirculantFft,
}

#[derive(Clone)]
enum Factor {
    /// `L` with `L Lᵀ = Σ_d`.
    Dense(DMatrix<f64>),
    /// `√(μ_k / d)` per frequency plus a forward FFT plan.
    Circulant {
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
}

/// Precomputed `N(0, Σ_d)` sampler. Immutable and shareable across threads.
#[derive(Clone)]
pub struct FieldSampler {
    model: CovarianceModel,
    d: usize,
    factor: Factor,
}

impl fmt::Debug for FieldSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSampler")
            .field("d", &self.d)
            .field("mode", &self.mode())
            .finish()
    }
}

/// Per-worker buffers for [`FieldSampler::draw_into`].
pub struct FieldScratch {
    z: Vec<f64>,
    spectrum: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl FieldSampler {
    /// Uses the circulant FFT path when `prefer_fft` is set and `Σ_d` checks
    /// out as circulant; otherwise factors `Σ_d` densely.
    pub fn new(model: &CovarianceModel, d: usize, prefer_fft: bool) -> Result<Self> {
        let sigma = model.sigma_matrix(d)?;
        let factor = if prefer_fft && is_circulant(model, d) {
            let spectrum = model.circulant_spectrum(d);
            let scale = spectrum
                .iter()
                .map(|&mu| (mu.max(0.0) / d as f64).sqrt())
                .collect();
            let fft = FftPlanner::new().plan_fft_forward(d);
            Factor::Circulant { scale, fft }
        } else {
            let eig = SymmetricEigen::new(sigma);
            let mut l = eig.eigenvectors;
            for (k, &mu) in eig.eigenvalues.iter().enumerate() {
                l.column_mut(k).scale_mut(mu.max(0.0).sqrt());
            }
            Factor::Dense(l)
        };
        Ok(Self {
            model: model.clone(),
            d,
            factor,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> SamplerMode {
        match self.factor {
            Factor::Dense(_) => SamplerMode::Dense,
            Factor::Circulant { .. } => SamplerMode::CirculantFft,
        }
    }

    /// The dense factor `L`, when the sampler uses one.
    pub fn dense_factor(&self) -> Option<&DMatrix<f64>> {
        match &self.factor {
            Factor::Dense(l) => Some(l),
            Factor::Circulant { .. } => None,
        }
    }

    pub fn scratch(&self) -> FieldScratch {
        let fft_len = match &self.factor {
            Factor::Dense(_) => 0,
            Factor::Circulant { fft, .. } => fft.get_inplace_scratch_len(),
        };
        FieldScratch {
            z: vec![0.0; self.d],
            spectrum: vec![Complex64::new(0.0, 0.0); self.d],
            fft_scratch: vec![Complex64::new(0.0, 0.0); fft_len],
        }
    }

    pub fn draw_field<R: Rng + ?Sized>(&self, rng: &mut R) -> GridFunction {
        let mut out = vec![0.0; self.d];
        self.draw_into(rng, &mut out, &mut self.scratch());
        GridFunction::new(out)
    }

    /// Writes one draw into `out` without allocating.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut FieldScratch) {
        assert_eq!(out.len(), self.d, "output length must equal d");
        match &self.factor {
            Factor::Dense(l) => {
                for z in scratch.z.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
                let z = DVector::from_column_slice(&scratch.z);
                let x = l * z;
                out.copy_from_slice(x.as_slice());
            }
            Factor::Circulant { scale, fft } => {
                for (c, &s) in scratch.spectrum.iter_mut().zip(scale) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *c = Complex64::new(s * re, s * im);
                }
                fft.process_with_scratch(&mut scratch.spectrum, &mut scratch.fft_scratch);
                for (o, c) in out.iter_mut().zip(&scratch.spectrum) {
                    *o = c.re;
                }
            }
        }
    }
}

/// Checks that row `i` of `Σ_d` is the cyclic shift of row 0 by `i`.
///
/// The full `d²` comparison runs for `d ≤ 256`; larger grids compare the first
/// column against the wrapped first row, which together with the kernel's
/// shift invariance covers every entry.
fn is_circulant(model: &CovarianceModel, d: usize) -> bool {
    let row = model.first_row(d);
    let node = |i: usize| (i + 1) as f64 / d as f64;
    if d <= 256 {
        (0..d).all(|i| {
            (0..d).all(|j| (model.eval_a(node(i), node(j)) - row[(j + d - i) % d]).abs() <= CIRCULANT_TOL)
        })
    } else {
        (0..d).all(|i| (model.eval_a(node(i), node(0)) - row[(d - i) % d]).abs() <= CIRCULANT_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    Rademacher,
    /// Student-t with `ν > 4` degrees of freedom, rescaled to unit variance.
    StudentT { nu: f64 },
}

/// Observation noise `ε` with mean 0 and variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
    distribution: NoiseDistribution,
    student: Option<StudentT<f64>>,
}

impl NoiseSpec {
    pub fn new(sigma: f64, distribution: NoiseDistribution) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        let student = match distribution {
            NoiseDistribution::StudentT { nu } => {
                if !(nu.is_finite() && nu > 4.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Student-t noise needs nu > 4 for a finite fourth moment, got {nu}"
                    )));
                }
                Some(StudentT::new(nu).map_err(|e| Error::InvalidArgument(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Self {
            sigma,
            distribution,
            student,
        })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(sigma, NoiseDistribution::Gaussian)
    }

    pub fn none() -> Self {
        Self::gaussian(0.0).expect("zero noise is valid")
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn distribution(&self) -> NoiseDistribution {
        self.distribution
    }

    /// `C₁` with `E[ε⁴] ≤ C₁ σ⁴`.
    pub fn fourth_moment_constant(&self) -> f64 {
        match self.distribution {
            NoiseDistribution::Gaussian => 3.0,
            NoiseDistribution::Rademacher => 1.0,
            NoiseDistribution::StudentT { nu } => 3.0 * (nu - 2.0) / (nu - 4.0),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        match self.distribution {
            NoiseDistribution::Gaussian => self.sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseDistribution::Rademacher => {
                if rng.random::<bool>() {
                    self.sigma
                } else {
                    -self.sigma
                }
            }
            NoiseDistribution::StudentT { nu } => {
                let t = self.student.expect("validated at construction").sample(rng);
                self.sigma * ((nu - 2.0) / nu).sqrt() * t
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::{substream, Role};

    fn empirical_cov(sampler: &FieldSampler, n: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
        let d = sampler.d();
        let mut rng = substream(seed, 0, 0, Role::Field);
        let mut scratch = sampler.scratch();
        let mut x = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::zeros(d, d);
        for _ in 0..n {
            sampler.draw_into(&mut rng, &mut x, &mut scratch);
            for i in 0..d {
                mean[i] += x[i];
                for j in 0..d {
                    cov[(i, j)] += x[i] * x[j];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        (mean, cov / n as f64)
    }

    #[test]
    fn mode_selection() {
        let m = CovarianceModel::example1();
        assert_eq!(FieldSampler::new(&m, 8, true).unwrap().mode(), SamplerMode::CirculantFft);
        assert_eq!(FieldSampler::new(&m, 8, false).unwrap().mode(), SamplerMode::Dense);
        assert_eq!(FieldSampler::new(&m, 600, true).unwrap().mode(), SamplerMode::CirculantFft);
    }

    #[test]
    fn constant_kernel_d1_factor() {
        let c = CovarianceModel::constant(2.25).unwrap();
        let s = FieldSampler::new(&c, 1, false).unwrap();
        let l = s.dense_factor().unwrap();
        assert!((l[(0, 0)].abs() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn unit_variance_d1() {
        let c = CovarianceModel::constant(1.0).unwrap();
        for prefer in [false, true] {
            let s = FieldSampler::new(&c, 1, prefer).unwrap();
            let (_, cov) = empirical_cov(&s, 100_000, 3);
            assert!((cov[(0, 0)] - 1.0).abs() < 0.02, "{}", cov[(0, 0)]);
        }
    }

    #[test]
    fn example1_covariance_both_modes() {
        let m = CovarianceModel::example1();
        let d = 16;
        let n = 100_000;
        let sigma = m.sigma_matrix(d).unwrap();
        let bound = 5.0 * m.sup_c2() * ((d as f64).ln() / n as f64).sqrt();
        for prefer in [false, true] {
            let s = FieldSampler::new(&m, d, prefer).unwrap();
            let (mean, cov) = empirical_cov(&s, n, 17);
            assert!(cov[(0, 8)].abs() < 0.03);
            assert!((&cov - &sigma).amax() <= bound, "{:?}", s.mode());
            let mean_bound = 4.0 * (m.sup_c2() / n as f64).sqrt();
            assert!(mean.iter().all(|v| v.abs() <= mean_bound));
        }
    }

    #[test]
    fn example2_fft_covariance() {
        let m = CovarianceModel::example2(50);
        let d = 32;
        let n = 100_000;
        let s = FieldSampler::new(&m, d, true).unwrap();
        let (_, cov) = empirical_cov(&s, n, 5);
        let sigma = m.sigma_matrix(d).unwrap();
        let bound = 5.0 * m.sup_c2() * ((d as f64).ln() / n as f64).sqrt();
        assert!((cov - sigma).amax() <= bound);
    }

    #[test]
    fn draws_are_deterministic() {
        let m = CovarianceModel::example1();
        let s = FieldSampler::new(&m, 12, true).unwrap();
        let a = s.draw_field(&mut substream(9, 1, 2, Role::Field));
        let b = s.draw_field(&mut substream(9, 1, 2, Role::Field));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        let mut rng = substream(1, 0, 0, Role::Noise);
        let g = NoiseSpec::gaussian(2.0).unwrap();
        let v: f64 = (0..n).map(|_| g.draw(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 4.0).abs() < 0.1, "{v}");

        let r = NoiseSpec::new(1.0, NoiseDistribution::Rademacher).unwrap();
        assert!((0..1000).all(|_| r.draw(&mut rng).abs() == 1.0));

        let t = NoiseSpec::new(1.0, NoiseDistribution::StudentT { nu: 8.0 }).unwrap();
        let v: f64 = (0..n).map(|_| t.draw(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.04, "{v}");
        assert_eq!(t.fourth_moment_constant(), 4.5);

        let z = NoiseSpec::none();
        assert_eq!(z.draw(&mut rng), 0.0);
    }

    #[test]
    fn student_t_needs_nu_above_four() {
        assert!(NoiseSpec::new(1.0, NoiseDistribution::StudentT { nu: 4.0 }).is_err());
        assert!(NoiseSpec::new(-1.0, NoiseDistribution::Gaussian).is_err());
    }
}
