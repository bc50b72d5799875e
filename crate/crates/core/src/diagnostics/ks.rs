//! One-sample Kolmogorov–Smirnov test.
//!
//! The null distribution of `D_n` is evaluated with the Marsaglia–Tsang–Wang
//! matrix-power algorithm, exact for `n ≤ 3000` outside the far upper tail.
//! Larger samples use the limiting Kolmogorov distribution.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest sample size evaluated with the exact algorithm.
pub const EXACT_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// `sup_x |F_n(x) − F(x)|` for the empirical CDF of `samples`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let n = samples.len();
    let statistic = ks_statistic(samples, cdf);
    let p_value = if n == 0 {
        1.0
    } else {
        (1.0 - kolmogorov_cdf(n, statistic)).clamp(0.0, 1.0)
    };
    KsResult { n, statistic, p_value }
}

/// KS test against `N(mean, sd²)`.
pub fn ks_normal(samples: &[f64], mean: f64, sd: f64) -> KsResult {
    let normal = Normal::new(mean, sd).expect("sd must be positive");
    ks_test(samples, |x| normal.cdf(x))
}

/// KS test of the studentized samples against `N(0,1)`.
///
/// Estimating the mean and variance makes the exact null distribution
/// conservative, so passing at level `p` is a weaker requirement than a
/// Lilliefors test at the same level.
pub fn ks_studentized(samples: &[f64]) -> KsResult {
    let (mean, sd) = mean_sd(samples);
    if !(sd > 0.0) {
        return KsResult {
            n: samples.len(),
            statistic: 1.0,
            p_value: 0.0,
        };
    }
    ks_normal(samples, mean, sd)
}

pub(crate) fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// `P(D_n < d)`.
pub fn kolmogorov_cdf(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    if n > EXACT_LIMIT {
        return kolmogorov_limit(d * nf.sqrt());
    }
    let s = d * d * nf;
    if s > 7.24 || (s > 3.76 && n > 99) {
        return 1.0 - 2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp();
    }
    let k = (nf * d) as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = DMatrix::from_fn(m, m, |i, j| if i + 1 >= j { 1.0 } else { 0.0 });
    for i in 0..m {
        hm[(i, 0)] -= h.powi(i as i32 + 1);
        hm[(m - 1, i)] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1, 0)] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[(i, j)] /= g as f64;
                }
            }
        }
    }
    let (q, mut exp10) = matrix_power(&hm, 0, n);
    let mut s = q[(k - 1, k - 1)];
    for i in 1..=n {
        s = s * i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            exp10 -= 140;
        }
    }
    s * 10f64.powi(exp10)
}

/// `A^n` with a decimal exponent carried separately to avoid overflow.
fn matrix_power(a: &DMatrix<f64>, ea: i32, n: usize) -> (DMatrix<f64>, i32) {
    if n == 1 {
        return (a.clone(), ea);
    }
    let (v, ev) = matrix_power(a, ea, n / 2);
    let b = &v * &v;
    let eb = 2 * ev;
    let (mut out, mut e) = if n % 2 == 0 { (b, eb) } else { (a * &b, ea + eb) };
    let c = out.nrows() / 2;
    if out[(c, c)] > 1e140 {
        out *= 1e-140;
        e += 140;
    }
    (out, e)
}

/// Limiting Kolmogorov distribution `P(K ≤ x) = 1 − 2 Σ (−1)^{j−1} e^{−2j²x²}`.
pub fn kolmogorov_limit(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.3 {
        // alternating series converges slowly here; use the theta-function form
        let t = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let sum: f64 = (1..50)
            .step_by(2)
            .map(|j| (-(j as f64).powi(2) * t).exp())
            .sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * sum;
    }
    let mut sum = 0.0;
    for j in 1..100 {
        let term = (-2.0 * (j as f64).powi(2) * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    1.0 - 2.0 * sum
}

/// Normal QQ pairs `(Φ⁻¹((i−½)/n), x_(i))` of the studentized samples.
pub fn qq_normal(samples: &[f64]) -> Vec<(f64, f64)> {
    let (mean, sd) = mean_sd(samples);
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let n = z.len() as f64;
    z.into_iter()
        .enumerate()
        .map(|(i, v)| (std.inverse_cdf((i as f64 + 0.5) / n), v))
        .collect()
}
