use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use sgdlab_core::covariance::CovarianceModel;
use sgdlab_core::field::{FieldSampler, NoiseSpec};
use sgdlab_core::grid::{GridFunction, InitProfile};
use sgdlab_core::sgdsim::{self, SgdConfig};
use sgdlab_core::streams::{substream, Role};

/// `E Δθ^t = (I − ηΣ_d)^t Δθ^0` because `x^t` is independent of `Δθ^t`.
#[test]
fn sgd_mean_follows_matrix_power() {
    let (d, t_param, eta) = (8usize, 40.0, 0.05);
    let model = CovarianceModel::example2(20);
    let init = GridFunction::from_fn(d, |x| 1.0 + x - 2.0 * x * x);
    let config = SgdConfig::new(d, t_param, 1.0, eta, InitProfile::Custom { values: init.clone() }).unwrap();
    let noise = NoiseSpec::gaussian(0.5).unwrap();
    let sampler = FieldSampler::new(&model, d, true).unwrap();
    let reps = 20_000u32;
    let finals: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            sgdsim::run(
                &config,
                &sampler,
                &noise,
                &mut substream(3, 0, r, Role::Field),
                &mut substream(3, 0, r, Role::Noise),
            )
            .unwrap()
            .final_values()
            .to_vec()
        })
        .collect();

    let sigma = model.sigma_matrix(d).unwrap();
    let step = DMatrix::identity(d, d) - sigma * eta;
    let mut want = DVector::from_column_slice(init.values());
    for _ in 0..config.n_steps() {
        want = &step * want;
    }
    for i in 0..d {
        let xs: Vec<f64> = finals.iter().map(|v| v[i]).collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - want[i]).abs() < 4.0 * se, "coordinate {i}: {mean} vs {}", want[i]);
    }
}

/// Both sampler modes reproduce `Σ_d` entrywise within 4 standard errors.
#[test]
fn sampler_modes_have_the_kernel_covariance() {
    let d = 12;
    let model = CovarianceModel::example2(10);
    let sigma = model.sigma_matrix(d).unwrap();
    let draws = 100_000;
    for prefer_fft in [false, true] {
        let sampler = FieldSampler::new(&model, d, prefer_fft).unwrap();
        let mut rng = substream(4, 0, prefer_fft as u32, Role::Field);
        let samples: Vec<Vec<f64>> = (0..draws).map(|_| sampler.draw_field(&mut rng).into_inner()).collect();
        for i in 0..d {
            for j in i..d {
                let prods: Vec<f64> = samples.iter().map(|v| v[i] * v[j]).collect();
                let mean = prods.iter().sum::<f64>() / draws as f64;
                let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
                let se = (var / draws as f64).sqrt();
                assert!(
                    (mean - sigma[(i, j)]).abs() < 4.0 * se,
                    "{:?} ({i},{j}): {mean} vs {}",
                    sampler.mode(),
                    sigma[(i, j)]
                );
            }
        }
    }
}

/// Rademacher and Student-t noise are scaled to variance σ².
#[test]
fn noise_variance_is_sigma_squared() {
    use sgdlab_core::field::NoiseDistribution;
    for dist in [
        NoiseDistribution::Gaussian,
        NoiseDistribution::Rademacher,
        NoiseDistribution::StudentT { nu: 8.0 },
    ] {
        let noise = NoiseSpec::new(2.0, dist).unwrap();
        let mut rng = substream(5, 0, 0, Role::Noise);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| noise.draw(&mut rng)).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 4.0).abs() < 0.1, "{dist:?}: {var}");
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64 / 16.0;
        assert!((m4 - noise.fourth_moment_constant()).abs() < 0.35, "{dist:?}: {m4}");
    }
}
