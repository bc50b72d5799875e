//! Empirical check of the L² stability bound for fluctuation paths:
//!
//! ```text
//! E[sup_s ‖U(s)‖²] ≤ 4(E‖U(0)‖² + C₂α²β²τ + (C₅+C₂²)α²ζ² ∫₀^τ ‖Θ(s)‖² ds) · exp(4C₂²α²τ²)
//! ```

use serde::Serialize;

use super::{FluctuationSpec, LimitSolution};
use crate::covariance::CovarianceModel;
use crate::{Error, Result};

/// Minimum number of replications for a meaningful expectation.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Monte Carlo estimate of `E[sup_s ‖U(s)‖²]` over stored times.
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, defined as 0 when both vanish.
    pub ratio: f64,
    pub passed: bool,
    pub replications: usize,
}

pub fn stability_check(
    paths: &[LimitSolution],
    spec: &FluctuationSpec,
    model: &CovarianceModel,
) -> Result<StabilityReport> {
    if paths.len() < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "stability check needs at least {MIN_REPLICATIONS} replications, got {}",
            paths.len()
        )));
    }
    let tau = paths[0].tau();
    let reps = paths.len() as f64;
    let lhs = paths
        .iter()
        .map(|p| p.values().iter().map(|v| v.l2_norm_sq()).fold(0.0, f64::max))
        .sum::<f64>()
        / reps;
    let u0 = paths.iter().map(|p| p.values()[0].l2_norm_sq()).sum::<f64>() / reps;

    let theta = &spec.theta_path;
    let mut theta_int = 0.0;
    for (w, v) in theta.times().windows(2).zip(theta.values().windows(2)) {
        if w[0] >= tau {
            break;
        }
        let hi = w[1].min(tau);
        theta_int += 0.5 * (hi - w[0]) * (v[0].l2_norm_sq() + v[1].l2_norm_sq());
    }

    let c2 = model.sup_c2();
    let c5 = model.sup_b();
    let a2 = spec.alpha * spec.alpha;
    let beta = spec.effective_beta();
    let zeta = spec.effective_zeta();
    let rhs = 4.0
        * (u0 + c2 * a2 * beta * beta * tau + (c5 + c2 * c2) * a2 * zeta * zeta * theta_int)
        * (4.0 * c2 * c2 * a2 * tau * tau).exp();
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(StabilityReport {
        lhs,
        rhs,
        ratio,
        passed: ratio <= 1.0,
        replications: paths.len(),
    })
}
