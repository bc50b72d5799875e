//! Error functionals, decay bounds and convergence metrics.
//!
//! `MSE(s) = ∫ Θ(s,x)² dx` and `PE(s) = ∫∫ Θ(s,x) A(x,y) Θ(s,y) dx dy`,
//! evaluated either on an SGD trajectory at `t = ⌊sT⌋` or on a limit
//! solution by grid quadrature.

mod ks;
mod regime;

use serde::Serialize;

use crate::covariance::CovarianceModel;
use crate::limit::LimitSolution;
use crate::sgdsim::Trajectory;
use crate::{Error, Result};

pub use ks::{kolmogorov_cdf, kolmogorov_limit, ks_normal, ks_statistic, ks_studentized, ks_test, qq_normal, KsResult};
pub use regime::{classify_regime, NoiseRegime, RegimeReport, Thresholds};

/// `(1/d) Σᵢ Δθ^{⌊sT⌋}_i²`.
pub fn mse_discrete(traj: &Trajectory, s: f64) -> Result<f64> {
    let v = traj.values_at_floor(s)?;
    Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
}

/// `(1/d²) Σᵢⱼ A(i/d, j/d) Δθᵢ Δθⱼ` at `t = ⌊sT⌋`.
pub fn pe_discrete(traj: &Trajectory, model: &CovarianceModel, s: f64) -> Result<f64> {
    Ok(pe_grid(model, traj.values_at_floor(s)?))
}

/// Exact grid quadratic form through the harmonic expansion
/// `Σᵢⱼ cos(2πk(i−j)/d) vᵢvⱼ = |Σᵢ vᵢ e^{2πiki/d}|²`, in `O(d·K)`.
pub fn pe_grid(model: &CovarianceModel, v: &[f64]) -> f64 {
    let d = v.len() as f64;
    let total: f64 = v.iter().sum();
    let mut acc = model.a0() * total * total;
    for &(k, b) in model.harmonics() {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, x) in v.iter().enumerate() {
            let arg = 2.0 * std::f64::consts::PI * k as f64 * (i + 1) as f64 / d;
            re += x * arg.cos();
            im += x * arg.sin();
        }
        acc += b * (re * re + im * im);
    }
    acc / (d * d)
}

/// `∫ Θ(s,x)² dx` by grid quadrature.
pub fn mse_limit(solution: &LimitSolution, s: f64) -> Result<f64> {
    Ok(solution.values_at(s)?.l2_norm_sq())
}

/// `∫∫ Θ A Θ = Σ_k λ_k c_k(s)²`.
pub fn pe_limit(solution: &LimitSolution, s: f64) -> Result<f64> {
    let c = solution.coeffs_at(s)?;
    Ok(solution
        .spectral()
        .eigenvalues
        .iter()
        .zip(&c)
        .map(|(l, c)| l * c * c)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, 0 when both vanish.
    pub ratio: f64,
    pub passed: bool,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            lhs,
            rhs,
            ratio,
            passed: lhs <= rhs,
        }
    }
}

/// `PE(τ) ≤ MSE(0) / (ατ)`.
pub fn pe_time_average_bound(solution: &LimitSolution, alpha: f64, tau: f64) -> Result<BoundReport> {
    if !(alpha > 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument("alpha and tau must be > 0".into()));
    }
    Ok(BoundReport::new(pe_limit(solution, tau)?, mse_limit(solution, 0.0)? / (alpha * tau)))
}

/// `MSE(τ) ≤ MSE(0) e^{−2αλτ}`.
pub fn mse_decay_bound(solution: &LimitSolution, alpha: f64, lambda: f64, tau: f64) -> Result<BoundReport> {
    Ok(BoundReport::new(
        mse_limit(solution, tau)?,
        mse_limit(solution, 0.0)? * (-2.0 * alpha * lambda * tau).exp(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationPair {
    pub empirical: f64,
    pub limit: f64,
}

fn require_low_noise(report: &RegimeReport) -> Result<()> {
    if report.regime != NoiseRegime::Low {
        return Err(Error::Regime(format!(
            "MSE/PE fluctuations need the low-noise regime (η = α/(dT)); got {:?} with σ²/(d²T) = {:e}",
            report.regime, report.ratio_noise
        )));
    }
    Ok(())
}

/// `γ(MSE^{d,T}(s) − MSE(s))` and its limit `2∫Θ(s,x)U(s,x)dx`.
pub fn mse_fluctuation(
    traj: &Trajectory,
    ode: &LimitSolution,
    u: &LimitSolution,
    gamma: f64,
    s: f64,
    regime: &RegimeReport,
) -> Result<FluctuationPair> {
    require_low_noise(regime)?;
    let empirical = gamma * (mse_discrete(traj, s)? - mse_limit(ode, s)?);
    let theta = ode.values_at(s)?;
    let uu = u.values_at(s)?;
    if theta.len() != uu.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            actual: uu.len(),
        });
    }
    let inner = theta.values().iter().zip(uu.values()).map(|(a, b)| a * b).sum::<f64>() / theta.len() as f64;
    Ok(FluctuationPair {
        empirical,
        limit: 2.0 * inner,
    })
}

/// `γ(PE^{d,T}(s) − PE(s))` and its limit `2∫∫Θ A U`.
pub fn pe_fluctuation(
    traj: &Trajectory,
    model: &CovarianceModel,
    ode: &LimitSolution,
    u: &LimitSolution,
    gamma: f64,
    s: f64,
    regime: &RegimeReport,
) -> Result<FluctuationPair> {
    require_low_noise(regime)?;
    let empirical = gamma * (pe_discrete(traj, model, s)? - pe_limit(ode, s)?);
    let ct = ode.coeffs_at(s)?;
    let cu = u.coeffs_at(s)?;
    let limit = 2.0
        * ode
            .spectral()
            .eigenvalues
            .iter()
            .zip(ct.iter().zip(&cu))
            .map(|(l, (a, b))| l * a * b)
            .sum::<f64>();
    Ok(FluctuationPair { empirical, limit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl SampleSummary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sd) = ks::mean_sd(values);
        Self {
            mean,
            sd,
            n: values.len(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }

    pub fn standard_error(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceMetrics {
    /// Per replication, `max` over the probe set of `|Θ̄ − Θ|`.
    pub sup: Vec<f64>,
    /// Per replication, root mean square of `Θ̄ − Θ` over the probe set.
    pub l2: Vec<f64>,
    pub sup_summary: SampleSummary,
    pub l2_summary: SampleSummary,
}

/// Distances between SGD interpolations and a limit solution at probe points `(s, x)`.
pub fn convergence_metrics(
    trajs: &[Trajectory],
    limit: &LimitSolution,
    eval_grid: &[(f64, f64)],
) -> Result<ConvergenceMetrics> {
    if eval_grid.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation grid".into()));
    }
    let targets = eval_grid
        .iter()
        .map(|&(s, x)| limit.eval(s, x))
        .collect::<Result<Vec<_>>>()?;
    let mut sup = Vec::with_capacity(trajs.len());
    let mut l2 = Vec::with_capacity(trajs.len());
    for tr in trajs {
        let mut worst = 0.0_f64;
        let mut sq = 0.0;
        for (&(s, x), &target) in eval_grid.iter().zip(&targets) {
            let diff = tr.interpolate(s, x)? - target;
            worst = worst.max(diff.abs());
            sq += diff * diff;
        }
        sup.push(worst);
        l2.push((sq / eval_grid.len() as f64).sqrt());
    }
    Ok(ConvergenceMetrics {
        sup_summary: SampleSummary::of(&sup),
        l2_summary: SampleSummary::of(&l2),
        sup,
        l2,
    })
}

/// Normality diagnostics for fluctuation samples at one probe point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub summary: SampleSummary,
    pub ks: KsResult,
    pub qq: Vec<(f64, f64)>,
}

pub fn normality(samples: &[f64]) -> NormalityReport {
    NormalityReport {
        summary: SampleSummary::of(samples),
        ks: ks_studentized(samples),
        qq: qq_normal(samples),
    }
}
