//! Pathwise Picard iteration for the fluctuation equation.
//!
//! With the stochastic integrals frozen,
//!
//! ```text
//! U_k(s) = U(0) − α ∫₀ˢ A U_{k−1}(u) du + αβ ξ₂(s) + αζ ξ₃(s)
//! ```
//!
//! is iterated on the physical grid from `U_0(s) ≡ U(0)`. The time integral
//! uses the left-endpoint rule, which keeps the successive-difference bound
//! `‖U_{k+1} − U_k‖ ≤ ‖U_1 − U_0‖ (C₂ατ)^k / k!` exact at the discrete level.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{FluctuationSpec, LimitSolution, NoiseIncrements, SolutionKind, TimeGrid};
use crate::covariance::SpectralData;
use crate::grid::GridFunction;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub solution: LimitSolution,
    /// Number of Picard maps applied; the last one moved the iterate by at most `tol`.
    pub iterations: usize,
    /// `‖U_{k+1} − U_k‖_sup` for `k = 0, 1, …`.
    pub differences: Vec<f64>,
}

impl PicardResult {
    /// `D_{k+1} / D_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.differences
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }
}

pub fn picard_solve(
    spec: &FluctuationSpec,
    spectral: &Arc<SpectralData>,
    init_u: &GridFunction,
    grid: &TimeGrid,
    increments: &NoiseIncrements,
    max_iters: usize,
    tol: f64,
) -> Result<PicardResult> {
    super::check_init(spectral, init_u)?;
    spec.check(spectral, grid)?;
    increments.check(spectral, grid)?;
    let n = spectral.grid_size;
    let steps = grid.n_steps;
    let alpha = spec.alpha;
    let beta = spec.effective_beta();
    let zeta = spec.effective_zeta();

    // forcing(·, j) = U(0) + αβ ξ₂(s_j) + αζ ξ₃(s_j)
    let mut forcing = DMatrix::zeros(n, steps + 1);
    let mut mode_sum = vec![0.0; spectral.modes()];
    forcing.set_column(0, &nalgebra::DVector::from_column_slice(init_u.values()));
    for j in 0..steps {
        for ((m, a), b) in mode_sum.iter_mut().zip(increments.xi2(j)).zip(increments.xi3(j)) {
            *m += alpha * (beta * a + zeta * b);
        }
        let noise = spectral.reconstruct(&mode_sum);
        for i in 0..n {
            forcing[(i, j + 1)] = init_u.values()[i] + noise.values()[i];
        }
    }

    let op = spectral.reconstructed_operator() * (alpha * grid.dt);
    let mut current = DMatrix::from_fn(n, steps + 1, |i, _| init_u.values()[i]);
    let mut differences = Vec::new();
    let mut converged = None;
    for k in 0..max_iters {
        let drift = &op * &current;
        let mut next = forcing.clone();
        let mut acc = vec![0.0; n];
        for j in 1..=steps {
            for (i, a) in acc.iter_mut().enumerate() {
                *a += drift[(i, j - 1)];
                next[(i, j)] -= *a;
            }
        }
        let change = (&next - &current).amax();
        differences.push(change);
        current = next;
        if change <= tol {
            converged = Some(k + 1);
            break;
        }
    }
    let iterations = match converged {
        Some(k) => k,
        None => {
            let last = *differences.last().unwrap_or(&f64::NAN);
            let ratio = match differences.len() {
                0 | 1 => f64::NAN,
                l => differences[l - 1] / differences[l - 2],
            };
            return Err(Error::PicardNotConverged {
                iterations: max_iters,
                last_change: last,
                ratio,
            });
        }
    };

    let mut times = Vec::new();
    let mut coeffs = Vec::new();
    let mut values = Vec::new();
    for j in 0..=steps {
        if grid.is_recorded(j) {
            let v: Vec<f64> = current.column(j).iter().copied().collect();
            times.push(grid.time(j));
            coeffs.push(spectral.project(&v));
            values.push(GridFunction::new(v));
        }
    }
    let kind = if beta == 0.0 && zeta == 0.0 {
        SolutionKind::DeterministicOde
    } else {
        SolutionKind::PathwiseSde
    };
    Ok(PicardResult {
        solution: LimitSolution::new(kind, Arc::clone(spectral), times, coeffs, values),
        iterations,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceModel;
    use crate::limit::{solve_fluctuation_frozen, solve_ode, FluctuationRegime};
    use crate::streams::{substream, Role};

    fn setup(n: usize, alpha: f64, dt: f64) -> (Arc<SpectralData>, FluctuationSpec, TimeGrid, NoiseIncrements) {
        let model = CovarianceModel::example1();
        let sp = Arc::new(model.spectral_decompose(n, 0.0).unwrap());
        let grid = TimeGrid::new(1.0, dt).unwrap();
        let theta = solve_ode(&sp, &GridFunction::constant(n, 1.0), alpha.max(1.0), &grid).unwrap();
        let spec = FluctuationSpec::new(alpha, 1.0, 1.0, FluctuationRegime::ParticleInteraction, Arc::new(theta)).unwrap();
        let inc = NoiseIncrements::generate(&spec, &sp, &grid, &mut substream(8, 0, 0, Role::LimitNoise), &mut substream(8, 0, 0, Role::LimitInteraction)).unwrap();
        (sp, spec, grid, inc)
    }

    #[test]
    fn zero_alpha_converges_in_one_iteration() {
        let (sp, spec, grid, inc) = setup(16, 0.0, 1e-2);
        let init = GridFunction::constant(16, 0.3);
        let r = picard_solve(&spec, &sp, &init, &grid, &inc, 10, 1e-12).unwrap();
        assert_eq!(r.iterations, 1);
        // with α = 0 the stochastic integrals vanish too
        assert!(r.solution.final_values().max_abs_diff(&init) < 1e-14);
    }

    #[test]
    fn agrees_with_mode_solver() {
        let n = 32;
        let (sp, spec, grid, inc) = setup(n, 1.0, 1e-3);
        let init = GridFunction::zeros(n);
        let p = picard_solve(&spec, &sp, &init, &grid, &inc, 100, 1e-12).unwrap();
        let s = solve_fluctuation_frozen(&spec, &sp, &init, &grid, &inc).unwrap();
        let err = p
            .solution
            .values()
            .iter()
            .zip(s.values())
            .fold(0.0_f64, |m, (a, b)| m.max(a.max_abs_diff(b)));
        assert!(err <= 10.0 * grid.dt, "{err}");
    }

    #[test]
    fn differences_obey_factorial_envelope() {
        let n = 32;
        let (sp, spec, grid, inc) = setup(n, 1.0, 1e-2);
        let p = picard_solve(&spec, &sp, &GridFunction::constant(n, 0.5), &grid, &inc, 100, 1e-13).unwrap();
        let c2 = CovarianceModel::example1().sup_c2();
        let x = c2 * spec.alpha * grid.tau;
        let d0 = p.differences[0];
        let mut fact = 1.0;
        for (k, d) in p.differences.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!(*d <= d0 * x.powi(k as i32) / fact * (1.0 + 1e-9) + 1e-14, "k={k}");
        }
    }

    #[test]
    fn nonconvergence_reports_ratio() {
        let (sp, spec, grid, inc) = setup(16, 1.0, 1e-2);
        let err = picard_solve(&spec, &sp, &GridFunction::constant(16, 1.0), &grid, &inc, 3, 0.0).unwrap_err();
        match err {
            Error::PicardNotConverged { iterations, ratio, .. } => {
                assert_eq!(iterations, 3);
                assert!(ratio.is_finite() && ratio < 1.0);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
