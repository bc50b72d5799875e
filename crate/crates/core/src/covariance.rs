//! Smooth stationary covariance kernels and their Gaussian moment tensors.
//!
//! The kernel family is the finite sinusoidal sum
//!
//! ```text
//! A(x, y) = a0 + Σ_k b_k cos(2πk(x − y)),   a0 ≥ 0, b_k ≥ 0
//! ```
//!
//! which is positive semidefinite on every grid and circulant on the grid
//! `{i/d}`. Fourth and eighth moments of the Gaussian field with covariance
//! `A` follow from Isserlis' theorem as sums over pairings.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::grid::{eval_piecewise_linear, GridFunction};
use crate::{Error, Result};

/// Relative tolerance below which negative operator eigenvalues count as
/// floating-point noise and are clipped to zero.
pub const PSD_CLIP_TOL: f64 = 1e-10;

/// Relative tolerance for the grid-matrix PSD check in [`CovarianceModel::sigma_matrix`].
pub const SIGMA_PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    a0: f64,
    harmonics: Vec<(u32, f64)>,
    epsilon: f64,
    lipschitz_c3: f64,
    sup_c2: f64,
}

/// Serializable description used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `example1`, `example2` or omitted for an explicit kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ModelSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            truncation: None,
            a0: None,
            harmonics: None,
            epsilon: None,
        }
    }

    pub fn build(&self) -> Result<CovarianceModel> {
        match self.preset.as_deref() {
            Some(name) => {
                if self.a0.is_some() || self.harmonics.is_some() {
                    return Err(Error::Config(
                        "model: `preset` cannot be combined with `a0`/`harmonics`".into(),
                    ));
                }
                CovarianceModel::from_preset(name, self.truncation)
            }
            None => {
                let a0 = self
                    .a0
                    .ok_or_else(|| Error::Config("model: missing `a0` (or `preset`)".into()))?;
                let harmonics = self.harmonics.clone().unwrap_or_default();
                let epsilon = self.epsilon.unwrap_or(1.0);
                CovarianceModel::new(a0, harmonics, epsilon)
            }
        }
    }
}

impl CovarianceModel {
    /// Builds `a0 + Σ b_k cos(2πk(x−y))`.
    ///
    /// `epsilon` is the declared exponent slack in `Σ k^{5+ε} b_k² < ∞`; every
    /// finite list satisfies it, so only `ε > 0` and `b_k ≥ 0` are checked.
    pub fn new(a0: f64, harmonics: Vec<(u32, f64)>, epsilon: f64) -> Result<Self> {
        if !(a0.is_finite() && a0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("a0 must be finite and >= 0, got {a0}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
        }
        for &(k, b) in &harmonics {
            if k == 0 {
                return Err(Error::InvalidArgument("harmonic index k must be >= 1".into()));
            }
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "harmonic coefficient b_{k} must be finite and >= 0, got {b}"
                )));
            }
        }
        let lipschitz_c3 = 2.0 * PI * harmonics.iter().map(|&(k, b)| k as f64 * b).sum::<f64>();
        let sup_c2 = a0 + harmonics.iter().map(|&(_, b)| b).sum::<f64>();
        Ok(Self {
            a0,
            harmonics,
            epsilon,
            lipschitz_c3,
            sup_c2,
        })
    }

    /// `A ≡ c`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, Vec::new(), 1.0)
    }

    /// `A(x,y) = 1 + cos(2π(x−y))`.
    pub fn example1() -> Self {
        Self::new(1.0, vec![(1, 1.0)], 1.0).expect("valid preset")
    }

    /// Fourier truncation of `A(x,y) = (|x−y|−½)² − 2(|x−y|−½)⁴`:
    /// `a0 = 7/120`, `b_k = 6/(π⁴k⁴)` for `k ≤ truncation`.
    pub fn example2(truncation: u32) -> Self {
        let harmonics = (1..=truncation)
            .map(|k| (k, 6.0 / (PI.powi(4) * (k as f64).powi(4))))
            .collect();
        Self::new(7.0 / 120.0, harmonics, 1.0).expect("valid preset")
    }

    pub fn from_preset(name: &str, truncation: Option<u32>) -> Result<Self> {
        match name {
            "example1" => Ok(Self::example1()),
            "example2" => Ok(Self::example2(truncation.unwrap_or(50))),
            other => {
                if let Some(c) = other.strip_prefix("constant:") {
                    let c: f64 = c
                        .parse()
                        .map_err(|_| Error::Config(format!("bad constant kernel `{other}`")))?;
                    return Self::constant(c);
                }
                Err(Error::Config(format!(
                    "unknown model preset `{other}` (expected example1, example2 or constant:<c>)"
                )))
            }
        }
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn harmonics(&self) -> &[(u32, f64)] {
        &self.harmonics
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `C₃ = 2π Σ k b_k`, a bound on `|∂A/∂x|`.
    pub fn lipschitz_c3(&self) -> f64 {
        self.lipschitz_c3
    }

    /// `C₂ = a0 + Σ b_k = sup |A|`.
    pub fn sup_c2(&self) -> f64 {
        self.sup_c2
    }

    /// `4π² Σ k² b_k`, bounding `|A(x,x)+A(y,y)−2A(x,y)| / |x−y|²`
    /// (sharp as `x → y`, from `1 − cos u ≤ u²/2`).
    pub fn curvature_bound(&self) -> f64 {
        4.0 * PI * PI * self.harmonics.iter().map(|&(k, b)| (k as f64).powi(2) * b).sum::<f64>()
    }

    /// `sup |B| = 3 C₂²` for the Gaussian field (attained on the diagonal).
    pub fn sup_b(&self) -> f64 {
        3.0 * self.sup_c2 * self.sup_c2
    }

    /// `Σ k^{5+ε} b_k²` for the retained harmonics.
    pub fn smoothness_sum(&self) -> f64 {
        self.harmonics
            .iter()
            .map(|&(k, b)| (k as f64).powf(5.0 + self.epsilon) * b * b)
            .sum()
    }

    /// `Ā(u) = a0 + Σ b_k cos(2πku)`, so that `A(x,y) = Ā(x−y)`.
    pub fn profile(&self, u: f64) -> f64 {
        self.a0
            + self
                .harmonics
                .iter()
                .map(|&(k, b)| b * (2.0 * PI * k as f64 * u).cos())
                .sum::<f64>()
    }

    pub fn eval_a(&self, x: f64, y: f64) -> f64 {
        self.profile(x - y)
    }

    /// Isserlis fourth moment `E[W(x1)W(x2)W(x3)W(x4)]`.
    pub fn eval_b_gaussian(&self, x1: f64, x2: f64, x3: f64, x4: f64) -> f64 {
        let a = |p: f64, q: f64| self.eval_a(p, q);
        a(x1, x2) * a(x3, x4) + a(x1, x3) * a(x2, x4) + a(x1, x4) * a(x2, x3)
    }

    /// `B̃(x1,x2,x3,x4) = B(x1,x2,x3,x4) − A(x1,x3)A(x2,x4)`.
    pub fn eval_btilde(&self, x1: f64, x2: f64, x3: f64, x4: f64) -> f64 {
        self.eval_b_gaussian(x1, x2, x3, x4) - self.eval_a(x1, x3) * self.eval_a(x2, x4)
    }

    /// `Cov(W(x1)W(x2), W(x3)W(x4)) = B(x1,x2,x3,x4) − A(x1,x2)A(x3,x4)`.
    ///
    /// This is the kernel of the fluctuation noise ξ₃: the per-step interaction
    /// term `Σ_j (x_i x_j − A_ij) θ_j` has covariance
    /// `Σ_{l1,l2} θ_l1 θ_l2 Cov(x_i x_l1, x_j x_l2)`.
    pub fn eval_product_covariance(&self, x1: f64, x2: f64, x3: f64, x4: f64) -> f64 {
        self.eval_b_gaussian(x1, x2, x3, x4) - self.eval_a(x1, x2) * self.eval_a(x3, x4)
    }

    /// Isserlis eighth moment: sum over the 105 pairings of `{1..8}`.
    pub fn eval_e_gaussian(&self, x: &[f64; 8]) -> f64 {
        pairings_of_eight()
            .iter()
            .map(|p| p.iter().map(|&(i, j)| self.eval_a(x[i], x[j])).product::<f64>())
            .sum()
    }

    /// `Σ_d(i,j) = A(i/d, j/d)` for `i, j = 1..=d`.
    ///
    /// Fails when the numerically computed minimum eigenvalue is below
    /// `−10⁻⁸·C₂`.
    pub fn sigma_matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        if d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        let m = self.grid_matrix(d);
        let min_eig = self
            .circulant_spectrum(d)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let tol = SIGMA_PSD_TOL * self.sup_c2;
        if min_eig < -tol {
            return Err(Error::NotPsd {
                eigenvalue: min_eig,
                tolerance: tol,
            });
        }
        Ok(m)
    }

    fn grid_matrix(&self, d: usize) -> DMatrix<f64> {
        let row = self.first_row(d);
        DMatrix::from_fn(d, d, |i, j| row[(j + d - i) % d])
    }

    /// `c_j = Σ_d(1, 1+j) = Ā(j/d)`, `j = 0..d`.
    pub fn first_row(&self, d: usize) -> Vec<f64> {
        (0..d).map(|j| self.profile(j as f64 / d as f64)).collect()
    }

    /// Eigenvalues `μ_k = Σ_j c_j e^{−2πijk/d}` of the circulant grid matrix
    /// `Σ_d`, computed by FFT of its first row. Ordered by frequency `k`.
    pub fn circulant_spectrum(&self, d: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .first_row(d)
            .into_iter()
            .map(|c| Complex64::new(c, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(d).process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Sup over a `8d × 8d` midpoint grid of `|W_{Σ_d}(x,y) − A(x,y)|`, where
    /// `W_{Σ_d}(x,y) = Σ_d(⌈dx⌉, ⌈dy⌉)` is the piecewise-constant embedding.
    ///
    /// Stationarity reduces the double loop to cell offsets `m = ⌈dx⌉−⌈dy⌉`
    /// and within-cell offsets `δ ∈ {−7/8, …, 7/8}`:
    /// `W − A = Ā(m/d) − Ā((m+δ)/d)`.
    pub fn embedding_sup_error(&self, d: usize) -> f64 {
        const SUB: i64 = 8;
        let d_f = d as f64;
        let mut sup = 0.0_f64;
        for m in -(d as i64 - 1)..=(d as i64 - 1) {
            let w = self.profile(m as f64 / d_f);
            for p in -(SUB - 1)..=(SUB - 1) {
                let delta = p as f64 / SUB as f64;
                let a = self.profile((m as f64 + delta) / d_f);
                sup = sup.max((w - a).abs());
            }
        }
        sup
    }

    /// Eigen-decomposition of the quadrature operator `Σ_n / n`.
    ///
    /// Eigenvalues come back in descending order; values in
    /// `[−10⁻¹⁰·C₂, 0)` are clipped to zero and anything lower is an error.
    /// Only modes with `λ ≥ mode_cutoff` are retained. Eigenvectors are
    /// scaled to be orthonormal under `⟨f,g⟩ = (1/n) Σ f(i/n) g(i/n)`.
    pub fn spectral_decompose(&self, n: usize, mode_cutoff: f64) -> Result<SpectralData> {
        if n < 2 {
            return Err(Error::InvalidArgument("spectral grid needs n >= 2".into()));
        }
        let operator = self.grid_matrix(n) / n as f64;
        let eig = SymmetricEigen::new(operator);
        let tol = PSD_CLIP_TOL * self.sup_c2;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut eigenvalues = Vec::with_capacity(n);
        let mut columns = Vec::with_capacity(n);
        let scale = (n as f64).sqrt();
        for &idx in &order {
            let mut lambda = eig.eigenvalues[idx];
            if lambda < -tol {
                return Err(Error::NotPsd {
                    eigenvalue: lambda,
                    tolerance: tol,
                });
            }
            if lambda < 0.0 {
                lambda = 0.0;
            }
            if lambda < mode_cutoff {
                continue;
            }
            eigenvalues.push(lambda);
            columns.push(eig.eigenvectors.column(idx) * scale);
        }
        let eigenvectors = if columns.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&columns)
        };
        Ok(SpectralData {
            grid_size: n,
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Eigenpairs of the quadrature operator `g ↦ (1/n) Σ_j A(·, j/n) g(j/n)`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub grid_size: usize,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// `n × m`; column `k` holds `φ_k(i/n)` with `(1/n) Σ_i φ_k φ_l = δ_kl`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue above `threshold`.
    pub fn min_positive(&self, threshold: f64) -> Option<f64> {
        self.eigenvalues.iter().copied().filter(|&l| l > threshold).reduce(f64::min)
    }

    /// Coefficients `c_k = ⟨f, φ_k⟩` under the quadrature inner product.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid_size, "grid size mismatch in project");
        let v = DVector::from_column_slice(f);
        let c = self.eigenvectors.tr_mul(&v) / self.grid_size as f64;
        c.as_slice().to_vec()
    }

    /// `Σ_k c_k φ_k` on the grid.
    pub fn reconstruct(&self, coeffs: &[f64]) -> GridFunction {
        assert_eq!(coeffs.len(), self.modes(), "mode count mismatch in reconstruct");
        let c = DVector::from_column_slice(coeffs);
        GridFunction::new((&self.eigenvectors * c).as_slice().to_vec())
    }

    /// `Σ_k c_k φ_k(x)` at an arbitrary point, linear between grid nodes.
    pub fn reconstruct_at(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * eval_piecewise_linear(self.eigenvectors.column(k).as_slice(), x))
            .sum()
    }

    /// `V Λ Vᵀ / n`, which reproduces `Σ_n / n` when all modes are kept.
    pub fn reconstructed_operator(&self) -> DMatrix<f64> {
        let n = self.grid_size as f64;
        let mut scaled = self.eigenvectors.clone();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(l);
        }
        &scaled * self.eigenvectors.transpose() / n
    }
}

fn pairings(items: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let first = items[0];
    let mut out = Vec::new();
    for pos in 1..items.len() {
        let partner = items[pos];
        let rest: Vec<usize> = items[1..]
            .iter()
            .copied()
            .filter(|&v| v != partner)
            .collect();
        for mut tail in pairings(&rest) {
            tail.insert(0, (first, partner));
            out.push(tail);
        }
    }
    out
}

/// All 105 perfect matchings of `{0, …, 7}`.
pub fn pairings_of_eight() -> &'static [Vec<(usize, usize)>] {
    static CELL: OnceLock<Vec<Vec<(usize, usize)>>> = OnceLock::new();
    CELL.get_or_init(|| pairings(&[0, 1, 2, 3, 4, 5, 6, 7]))
}

/// Closed form of the Example-2 kernel, `(|u|−½)² − 2(|u|−½)⁴`.
pub fn example2_closed_form(x: f64, y: f64) -> f64 {
    let v = (x - y).abs() - 0.5;
    v * v - 2.0 * v.powi(4)
}
