//! Classification of a finite `(d, T, η, σ, γ)` into noise regimes.

use serde::{Deserialize, Serialize};

use crate::limit::FluctuationRegime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseRegime {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { low: 1e-2, high: 1e2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub d: usize,
    #[serde(rename = "T")]
    pub t_param: f64,
    pub eta: f64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `σ² / (d²T)`.
    pub ratio_noise: f64,
    #[serde(rename = "eta_dT")]
    pub eta_dt: f64,
    #[serde(rename = "eta_sigma_sqrtT")]
    pub eta_sigma_sqrt_t: f64,
    pub regime: NoiseRegime,
    pub fluct_subregime: Option<FluctuationRegime>,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta_hat: Option<f64>,
    /// `γ / d`, the interpolation-error scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_over_d: Option<f64>,
    pub thresholds: Thresholds,
}

/// Computes the scaling ratios and the finite-size limit constants.
///
/// `α̂ = ηdT` in the low and moderate regimes and `ησ√T` in the high regime.
/// `β̂ = γσ/(d√T)` when `γ` is given, else `σ/(d√T)`; `ζ̂ = γ/√T`. The
/// fluctuation sub-regime (low noise only) is the first of particle
/// interaction (`ζ̂ ≥ low`), noise (`β̂ ≥ low`) and interpolation error.
pub fn classify_regime(
    d: usize,
    t_param: f64,
    eta: f64,
    sigma: f64,
    gamma: Option<f64>,
    thresholds: Thresholds,
) -> RegimeReport {
    let df = d as f64;
    let sqrt_t = t_param.sqrt();
    let ratio_noise = sigma * sigma / (df * df * t_param);
    let eta_dt = eta * df * t_param;
    let eta_sigma_sqrt_t = eta * sigma * sqrt_t;
    let regime = if ratio_noise < thresholds.low {
        NoiseRegime::Low
    } else if ratio_noise <= thresholds.high {
        NoiseRegime::Moderate
    } else {
        NoiseRegime::High
    };
    let alpha_hat = match regime {
        NoiseRegime::High => eta_sigma_sqrt_t,
        _ => eta_dt,
    };
    let beta_hat = gamma.unwrap_or(1.0) * sigma / (df * sqrt_t);
    let zeta_hat = gamma.map(|g| g / sqrt_t);
    let fluct_subregime = match (regime, zeta_hat) {
        (NoiseRegime::Low, Some(z)) => Some(if z >= thresholds.low {
            FluctuationRegime::ParticleInteraction
        } else if beta_hat >= thresholds.low {
            FluctuationRegime::NoiseDominates
        } else {
            FluctuationRegime::InterpolationError
        }),
        _ => None,
    };
    RegimeReport {
        d,
        t_param,
        eta,
        sigma,
        gamma,
        ratio_noise,
        eta_dt,
        eta_sigma_sqrt_t,
        regime,
        fluct_subregime,
        alpha_hat,
        beta_hat,
        zeta_hat,
        gamma_over_d: gamma.map(|g| g / df),
        thresholds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_noise_particle_interaction() {
        let (d, t) = (100usize, 1e4);
        let r = classify_regime(d, t, 2.0 / (d as f64 * t), 1.0, Some(t.sqrt()), Thresholds::default());
        assert!((r.ratio_noise - 1e-8).abs() < 1e-20);
        assert_eq!(r.regime, NoiseRegime::Low);
        assert!((r.zeta_hat.unwrap() - 1.0).abs() < 1e-12);
        // γσ/(d√T) = 100/(100·100)
        assert!((r.beta_hat - 1e-2).abs() < 1e-15);
        assert!((r.alpha_hat - 2.0).abs() < 1e-12);
        assert_eq!(r.fluct_subregime, Some(FluctuationRegime::ParticleInteraction));
    }

    #[test]
    fn moderate_and_high() {
        let (d, t) = (50usize, 400.0f64);
        let m = classify_regime(d, t, 1e-3, d as f64 * t.sqrt(), None, Thresholds::default());
        assert!((m.ratio_noise - 1.0).abs() < 1e-12);
        assert_eq!(m.regime, NoiseRegime::Moderate);
        assert_eq!(m.fluct_subregime, None);
        let h = classify_regime(d, t, 1e-3, d as f64 * t, None, Thresholds::default());
        assert!((h.ratio_noise - t).abs() < 1e-9);
        assert_eq!(h.regime, NoiseRegime::High);
        assert!((h.alpha_hat - 1e-3 * d as f64 * t * t.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn subregime_fallbacks() {
        let (d, t) = (100usize, 1e4);
        let eta = 1.0 / (d as f64 * t);
        // ζ̂ = 0.005, β̂ = 0.025
        let noise = classify_regime(d, t, eta, 500.0, Some(0.5), Thresholds::default());
        assert_eq!(noise.fluct_subregime, Some(FluctuationRegime::NoiseDominates));
        let interp = classify_regime(d, t, eta, 0.0, Some(0.5), Thresholds::default());
        assert_eq!(interp.fluct_subregime, Some(FluctuationRegime::InterpolationError));
    }

    #[test]
    fn sigma_scaling_is_quadratic() {
        let a = classify_regime(30, 900.0, 1e-4, 1.7, None, Thresholds::default());
        let b = classify_regime(30, 900.0, 1e-4, 3.4, None, Thresholds::default());
        assert!((b.ratio_noise / a.ratio_noise - 4.0).abs() < 1e-12);
    }
}
