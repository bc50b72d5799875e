use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use sgdlab_core::covariance::CovarianceModel;
use sgdlab_core::field::{FieldSampler, NoiseSpec};
use sgdlab_core::grid::InitProfile;
use sgdlab_core::sgdsim::{self, sgd_step_in_place, SgdConfig};
use sgdlab_core::streams::{substream, Role};

fn field_draws(c: &mut Criterion) {
    let model = CovarianceModel::example2(50);
    let mut group = c.benchmark_group("field_draw");
    for d in [128usize, 512] {
        for prefer_fft in [false, true] {
            let sampler = FieldSampler::new(&model, d, prefer_fft).unwrap();
            let mut rng = substream(0, 0, 0, Role::Field);
            let mut scratch = sampler.scratch();
            let mut out = vec![0.0; d];
            let label = format!("{:?}", sampler.mode());
            group.throughput(Throughput::Elements(d as u64));
            group.bench_with_input(BenchmarkId::new(label, d), &d, |b, _| {
                b.iter(|| sampler.draw_into(&mut rng, black_box(&mut out), &mut scratch))
            });
        }
    }
    group.finish();
}

fn sgd_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sgd");
    for d in [100usize, 1000] {
        let mut state = vec![1.0; d];
        let x: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        group.throughput(Throughput::Elements(d as u64));
        group.bench_with_input(BenchmarkId::new("step", d), &d, |b, _| {
            b.iter(|| sgd_step_in_place(black_box(&mut state), black_box(&x), 0.1, 1e-6))
        });
    }
    let model = CovarianceModel::example1();
    let d = 200;
    let t = 1e4;
    let sampler = FieldSampler::new(&model, d, true).unwrap();
    let config = SgdConfig::new(d, t, 1.0, 2.0 / (d as f64 * t), InitProfile::constant(1.0)).unwrap();
    let noise = NoiseSpec::gaussian(1.0).unwrap();
    group.sample_size(10);
    group.throughput(Throughput::Elements(config.n_steps() as u64));
    group.bench_function("run_d200_T1e4", |b| {
        b.iter(|| {
            sgdsim::run(
                &config,
                &sampler,
                &noise,
                &mut substream(1, 0, 0, Role::Field),
                &mut substream(1, 0, 0, Role::Noise),
            )
            .unwrap()
        })
    });
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let model = CovarianceModel::example2(50);
    let mut group = c.benchmark_group("spectral_decompose");
    group.sample_size(10);
    for n in [64usize, 256] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| model.spectral_decompose(n, 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, field_draws, sgd_steps, spectral);
criterion_main!(benches);
