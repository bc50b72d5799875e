//! Replication sweeps over `(d, T)` pairs.
//!
//! For each pair the runner simulates `replications` independent SGD runs in
//! parallel, compares them with the shared mean limit path and writes, under
//! `<out>/d{d}_T{T}/`:
//!
//! | file | columns |
//! |------|---------|
//! | `mse_curves.csv` | `rep, s, mse_dt, mse_limit` |
//! | `pe_curves.csv` | `rep, s, pe_dt, pe_limit` |
//! | `fluctuation_samples.csv` | `rep, s, x, u_empirical` |
//! | `replications.csv` | `rep, status, diverged_at` |
//! | `trajectory.csv` (optional) | `rep, t_index, s, i, x, value` |
//! | `regime.json` | the regime report |
//!
//! plus `<out>/manifest.json`. Rows are ordered by replication index, so
//! every CSV is byte-identical across thread counts.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    ExperimentConfig, GammaName, GammaRule, NoiseConfig, NoiseKind, OutputConfig, ResolvedPair, SamplerConfig,
    ScalingConfig, ScalingPreset, SolverConfig, TRule,
};
pub use output::{
    solution_rows, trajectory_rows, write_csv, write_csv_with_header, write_json, FluctuationRow, MseRow, PeRow,
    ReplicationRow, SolutionRow, TrajectoryRow,
};

use crate::covariance::{CovarianceModel, SpectralData};
use crate::diagnostics::{mse_discrete, mse_limit, pe_discrete, pe_limit, NoiseRegime};
use crate::field::{FieldSampler, NoiseSpec};
use crate::limit::{solve_ode, FluctuationRegime, LimitSolution, TimeGrid};
use crate::sgdsim::{self, fluctuation_field, SgdConfig, Trajectory};
use crate::streams::{substream, Role};
use crate::{Error, Result};

/// Largest tolerated fraction of diverged replications per pair.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

/// Stored times of the mean limit path.
const LIMIT_TIME_POINTS: usize = 2000;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Output directory; `None` keeps results in memory only.
    pub out: Option<PathBuf>,
    /// Overrides `outputs.trajectories`.
    pub trajectories: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PairTimings {
    pub limit_s: f64,
    pub simulate_s: f64,
    pub write_s: f64,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pair: ResolvedPair,
    pub mse: Vec<MseRow>,
    pub pe: Vec<PeRow>,
    pub fluctuations: Vec<FluctuationRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub replications: Vec<ReplicationRow>,
    pub timings: PairTimings,
}

impl PairOutcome {
    pub fn diverged(&self) -> usize {
        self.replications.iter().filter(|r| r.status == "diverged").count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestPair {
    pub d: usize,
    #[serde(rename = "T")]
    pub t_param: f64,
    pub eta: f64,
    pub sigma: f64,
    pub gamma: Option<f64>,
    pub regime: NoiseRegime,
    pub fluct_subregime: Option<FluctuationRegime>,
    /// `α̂` of the limit equation.
    pub alpha: f64,
    pub tau: f64,
    /// Smallest positive kernel eigenvalue, the decay rate in `MSE(0)e^{−2αλτ}`.
    pub lambda_min: Option<f64>,
    pub replications: u32,
    pub diverged: usize,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestTimings {
    pub total_s: f64,
    pub threads: usize,
    pub pairs: Vec<PairTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub pairs: Vec<ManifestPair>,
    pub timings: ManifestTimings,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub pairs: Vec<PairOutcome>,
}

/// Runs every `(d, T)` pair of `config`.
///
/// A replication whose iterate exceeds the divergence threshold is recorded
/// with status `diverged`; the run fails with [`Error::TooManyDiverged`] if
/// more than 10% of a pair's replications diverge.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let out = opts.out.clone().or_else(|| config.out.clone());
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| output::io_error(dir, e))?;
    }

    let model = config.model.build()?;
    let spectral = Arc::new(model.spectral_decompose(config.solver.n, 0.0)?);
    let trajectories = opts.trajectories.unwrap_or(config.outputs.trajectories);
    let lambda_min = spectral.min_positive(crate::covariance::PSD_CLIP_TOL * model.sup_c2());

    let mut outcomes = Vec::new();
    for pair in config.resolve_pairs()? {
        let mut outcome = pool.install(|| run_pair(config, &model, &spectral, &pair, trajectories))?;
        if let Some(dir) = &out {
            let t = Instant::now();
            write_pair(&dir.join(pair.dir_name()), &outcome)?;
            outcome.timings.write_s = t.elapsed().as_secs_f64();
        }
        outcomes.push(outcome);
    }

    let manifest = Manifest {
        config_hash: config.hash(),
        seed: config.seed,
        pairs: outcomes
            .iter()
            .map(|o| ManifestPair {
                d: o.pair.d,
                t_param: o.pair.t_param,
                eta: o.pair.eta,
                sigma: o.pair.sigma,
                gamma: o.pair.gamma,
                regime: o.pair.regime.regime,
                fluct_subregime: o.pair.regime.fluct_subregime,
                alpha: o.pair.regime.alpha_hat,
                tau: config.scaling.tau,
                lambda_min,
                replications: config.replications,
                diverged: o.diverged(),
                dir: o.pair.dir_name(),
            })
            .collect(),
        timings: ManifestTimings {
            total_s: start.elapsed().as_secs_f64(),
            threads,
            pairs: outcomes.iter().map(|o| o.timings).collect(),
        },
    };
    if let Some(dir) = &out {
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(ExperimentOutcome {
        manifest,
        pairs: outcomes,
    })
}

/// Mean limit path for the pair's regime: the ODE at `α̂` in the low and
/// moderate regimes and the constant initial profile in the high regime,
/// where the limit has no drift.
pub fn mean_limit_path(
    spectral: &Arc<SpectralData>,
    config: &ExperimentConfig,
    pair: &ResolvedPair,
) -> Result<LimitSolution> {
    let tau = config.scaling.tau;
    let dt = config.solver.dt.unwrap_or(tau / LIMIT_TIME_POINTS as f64);
    let grid = TimeGrid::new(tau, dt)?;
    let alpha = match pair.regime.regime {
        NoiseRegime::High => 0.0,
        _ => pair.regime.alpha_hat,
    };
    solve_ode(spectral, &config.init.resampled(spectral.grid_size), alpha, &grid)
}

/// One SGD replication of `pair` on its own substreams.
pub fn simulate_replication(
    config: &ExperimentConfig,
    sampler: &FieldSampler,
    noise: &NoiseSpec,
    pair: &ResolvedPair,
    rep: u32,
) -> Result<Trajectory> {
    let mut record: Vec<f64> = config.curve_times();
    record.extend(config.probes.iter().map(|p| p[0]));
    let init = match &config.init {
        crate::grid::InitProfile::Custom { .. } => crate::grid::InitProfile::Custom {
            values: config.init.resampled(pair.d),
        },
        other => other.clone(),
    };
    let sgd = SgdConfig::new(pair.d, pair.t_param, config.scaling.tau, pair.eta, init)?.recording_times(&record);
    sgdsim::run(
        &sgd,
        sampler,
        noise,
        &mut substream(config.seed, pair.index, rep, Role::Field),
        &mut substream(config.seed, pair.index, rep, Role::Noise),
    )
}

struct RepRows {
    mse: Vec<MseRow>,
    pe: Vec<PeRow>,
    fluct: Vec<FluctuationRow>,
    traj: Vec<TrajectoryRow>,
    status: ReplicationRow,
}

fn run_pair(
    config: &ExperimentConfig,
    model: &CovarianceModel,
    spectral: &Arc<SpectralData>,
    pair: &ResolvedPair,
    keep_trajectories: bool,
) -> Result<PairOutcome> {
    let t = Instant::now();
    let limit = mean_limit_path(spectral, config, pair)?;
    let curve_times = config.curve_times();
    let limit_mse: Vec<f64> = curve_times.iter().map(|&s| mse_limit(&limit, s)).collect::<Result<_>>()?;
    let limit_pe: Vec<f64> = curve_times.iter().map(|&s| pe_limit(&limit, s)).collect::<Result<_>>()?;
    let limit_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sampler = FieldSampler::new(model, pair.d, config.sampler.prefer_fft)?;
    let noise = config.noise.spec(pair.sigma)?;
    let gamma = pair.gamma.unwrap_or(1.0);
    let rows: Vec<Result<RepRows>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let traj = match simulate_replication(config, &sampler, &noise, pair, rep) {
                Ok(traj) => traj,
                Err(Error::Diverged { step, .. }) => {
                    return Ok(RepRows {
                        mse: Vec::new(),
                        pe: Vec::new(),
                        fluct: Vec::new(),
                        traj: Vec::new(),
                        status: ReplicationRow {
                            rep,
                            status: "diverged",
                            diverged_at: Some(step),
                        },
                    })
                }
                Err(e) => return Err(e),
            };
            let mut r = RepRows {
                mse: Vec::with_capacity(curve_times.len()),
                pe: Vec::with_capacity(curve_times.len()),
                fluct: Vec::with_capacity(config.probes.len()),
                traj: Vec::new(),
                status: ReplicationRow {
                    rep,
                    status: "ok",
                    diverged_at: None,
                },
            };
            for (k, &s) in curve_times.iter().enumerate() {
                r.mse.push(MseRow {
                    rep,
                    s,
                    mse_dt: mse_discrete(&traj, s)?,
                    mse_limit: limit_mse[k],
                });
                r.pe.push(PeRow {
                    rep,
                    s,
                    pe_dt: pe_discrete(&traj, model, s)?,
                    pe_limit: limit_pe[k],
                });
            }
            for p in &config.probes {
                r.fluct.push(FluctuationRow {
                    rep,
                    s: p[0],
                    x: p[1],
                    u_empirical: fluctuation_field(&traj, &limit, gamma, p[0], p[1])?,
                });
            }
            if keep_trajectories {
                r.traj = trajectory_rows(rep, &traj);
            }
            Ok(r)
        })
        .collect();
    let simulate_s = t.elapsed().as_secs_f64();

    let mut outcome = PairOutcome {
        pair: pair.clone(),
        mse: Vec::new(),
        pe: Vec::new(),
        fluctuations: Vec::new(),
        trajectories: Vec::new(),
        replications: Vec::new(),
        timings: PairTimings {
            limit_s,
            simulate_s,
            write_s: 0.0,
        },
    };
    for r in rows {
        let r = r?;
        outcome.mse.extend(r.mse);
        outcome.pe.extend(r.pe);
        outcome.fluctuations.extend(r.fluct);
        outcome.trajectories.extend(r.traj);
        outcome.replications.push(r.status);
    }
    let diverged = outcome.diverged();
    if diverged as f64 > MAX_DIVERGED_FRACTION * config.replications as f64 {
        return Err(Error::TooManyDiverged {
            diverged,
            total: config.replications as usize,
        });
    }
    Ok(outcome)
}

fn write_pair(dir: &Path, o: &PairOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| output::io_error(dir, e))?;
    write_csv_with_header(&dir.join("mse_curves.csv"), &["rep", "s", "mse_dt", "mse_limit"], &o.mse)?;
    write_csv_with_header(&dir.join("pe_curves.csv"), &["rep", "s", "pe_dt", "pe_limit"], &o.pe)?;
    write_csv_with_header(
        &dir.join("fluctuation_samples.csv"),
        &["rep", "s", "x", "u_empirical"],
        &o.fluctuations,
    )?;
    write_csv(&dir.join("replications.csv"), &o.replications)?;
    if !o.trajectories.is_empty() {
        write_csv(&dir.join("trajectory.csv"), &o.trajectories)?;
    }
    write_json(&dir.join("regime.json"), &o.pair.regime)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
seed = 5
replications = 4
probes = [[0.5, 0.5]]
curve_times = [0.0, 0.5, 1.0]
[model]
preset = "example1"
[scaling]
d_list = [8, 12]
t_rule = { quadratic = 4.0 }
tau = 1.0
alpha = 1.0
gamma = "sqrt_t"
[solver]
n = 32
"#,
        )
        .unwrap()
    }

    #[test]
    fn sweep_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let outcome = run_experiment(
            &cfg,
            &RunOptions {
                threads: Some(2),
                out: Some(dir.path().to_path_buf()),
                trajectories: Some(true),
            },
        )
        .unwrap();
        assert_eq!(outcome.pairs.len(), 2);
        let sub = dir.path().join("d8_T256");
        for f in [
            "mse_curves.csv",
            "pe_curves.csv",
            "fluctuation_samples.csv",
            "replications.csv",
            "trajectory.csv",
            "regime.json",
        ] {
            assert!(sub.join(f).exists(), "{f} missing");
        }
        let traj = std::fs::read_to_string(sub.join("trajectory.csv")).unwrap();
        assert!(traj.starts_with("rep,t_index,s,i,x,value\n"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["pairs"][1]["d"], 12);
        assert_eq!(manifest["pairs"][0]["regime"], "Low");
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
        let mse = &outcome.pairs[0].mse;
        assert_eq!(mse.len(), 12);
        // at s = 0 both sides equal the initial profile
        assert!((mse[0].mse_dt - 1.0).abs() < 1e-12 && (mse[0].mse_limit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let cfg = small_config();
        let run = |t| {
            run_experiment(
                &cfg,
                &RunOptions {
                    threads: Some(t),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let (a, b) = (run(1), run(3));
        for (p, q) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(p.mse, q.mse);
            assert_eq!(p.pe, q.pe);
            assert_eq!(p.fluctuations, q.fluctuations);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = small_config();
        cfg.scaling.preset = ScalingPreset::Custom;
        cfg.scaling.eta = Some(5.0);
        let err = run_experiment(&cfg, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyDiverged { diverged: 4, total: 4 }), "{err:?}");
    }
}
