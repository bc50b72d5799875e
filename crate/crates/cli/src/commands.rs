use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use sgdlab_core::covariance::CovarianceModel;
use sgdlab_core::diagnostics::{classify_regime, mse_limit, pe_limit, Thresholds};
use sgdlab_core::experiments::{run_experiment, solution_rows, write_csv, write_json, ExperimentConfig, RunOptions};
use sgdlab_core::grid::{GridFunction, InitProfile, SmoothProfile};
use sgdlab_core::limit::{
    default_dt, picard_solve, solve_fluctuation_frozen, solve_fluctuation_sde, solve_ode, solve_theta_sde,
    FluctuationRegime, FluctuationSpec, LimitSolution, NoiseIncrements, SdeScheme, ThetaSde, TimeGrid, DEFAULT_GRID,
};
use sgdlab_core::streams::{substream, Role};
use sgdlab_core::SpectralData;

use crate::args::{
    Cli, Command, FluctuationArgs, FluctuationParams, LimitArgs, PicardArgs, RegimeArg, RegimeArgs, SchemeArg,
    SdeArgs, SweepArgs, ValidateArgs,
};
use crate::CliError;

const DEFAULT_OUT: &str = "out";

/// Stored times per solution when `--stride` is not given.
const DEFAULT_STORED_TIMES: usize = 100;

struct Globals {
    config: Option<ExperimentConfig>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

impl Globals {
    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().map(|c| c.seed)).unwrap_or(0)
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(validation("--threads must be at least 1"));
    }
    let config = cli.config.as_deref().map(ExperimentConfig::from_path).transpose()?;
    let globals = Globals {
        config,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
    };
    match cli.command {
        Command::Simulate(args) => sweep(&globals, &args, true),
        Command::Sweep(args) => sweep(&globals, &args, false),
        Command::SolveOde(args) => solve_ode_cmd(&globals, &args),
        Command::SolveSde(args) => solve_sde_cmd(&globals, &args),
        Command::SolveFluctuation(args) => solve_fluctuation_cmd(&globals, &args),
        Command::Picard(args) => picard_cmd(&globals, &args),
        Command::ValidateCovariance(args) => validate_covariance(&args),
        Command::Regime(args) => regime(&globals, &args),
    }
}

/// Prints pretty JSON; a closed stdout (e.g. `| head`) is not an error.
fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn sweep(g: &Globals, args: &SweepArgs, trajectories: bool) -> Result<(), CliError> {
    let mut config = g
        .config
        .clone()
        .ok_or_else(|| validation("this subcommand needs --config <path>"))?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    let out = g.out_dir()?;
    let outcome = run_experiment(
        &config,
        &RunOptions {
            threads: g.threads,
            out: Some(out.clone()),
            trajectories: trajectories.then_some(true),
        },
    )?;
    for p in &outcome.manifest.pairs {
        println!(
            "d={} T={} eta={:e} sigma={} regime={:?} diverged={}/{} -> {}",
            p.d,
            p.t_param,
            p.eta,
            p.sigma,
            p.regime,
            p.diverged,
            p.replications,
            out.join(&p.dir).display()
        );
    }
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}

fn parse_init(spec: &str) -> Result<InitProfile, CliError> {
    let bad = || validation(format!("bad --init `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
    match parts.as_slice() {
        ["constant", v] => Ok(InitProfile::constant(num(v)?)),
        ["cosine", a, k] => Ok(InitProfile::smooth(SmoothProfile::Cosine {
            amplitude: num(a)?,
            k: u32::try_from(int(k)?).map_err(|_| bad())?,
        })),
        ["mixed"] => Ok(InitProfile::smooth(SmoothProfile::Mixed)),
        ["random", seed, modes] => Ok(InitProfile::smooth(SmoothProfile::RandomFourier {
            seed: int(seed)?,
            modes: u32::try_from(int(modes)?).map_err(|_| bad())?,
        })),
        _ => Err(bad()),
    }
}

/// Solver inputs from flags, falling back to the config and then to defaults.
struct LimitSetup {
    spectral: Arc<SpectralData>,
    init: GridFunction,
    alpha: f64,
    grid: TimeGrid,
    scheme: SdeScheme,
}

impl LimitSetup {
    fn new(g: &Globals, args: &LimitArgs) -> Result<Self, CliError> {
        let cfg = g.config.as_ref();
        let model = match (&args.model, cfg) {
            (Some(name), _) => CovarianceModel::from_preset(name, args.truncation)?,
            (None, Some(c)) => c.model.build()?,
            (None, None) => CovarianceModel::example1(),
        };
        let n = args.n.or(cfg.map(|c| c.solver.n)).unwrap_or(DEFAULT_GRID);
        if n < 2 {
            return Err(validation("--n must be at least 2"));
        }
        let alpha = args.alpha.or(cfg.map(|c| c.scaling.alpha)).unwrap_or(1.0);
        let tau = args.tau.or(cfg.map(|c| c.scaling.tau)).unwrap_or(1.0);
        let init = match (&args.init, cfg) {
            (Some(s), _) => parse_init(s)?,
            (None, Some(c)) => c.init.clone(),
            (None, None) => InitProfile::constant(1.0),
        };
        let spectral = Arc::new(model.spectral_decompose(n, 0.0)?);
        let dt = args
            .dt
            .or(cfg.and_then(|c| c.solver.dt))
            .unwrap_or_else(|| default_dt(alpha, spectral.lambda_max()));
        let grid = TimeGrid::new(tau, dt)?;
        let stride = args
            .stride
            .unwrap_or_else(|| (grid.n_steps / DEFAULT_STORED_TIMES).max(1));
        Ok(Self {
            init: init.resampled(n),
            spectral,
            alpha,
            grid: grid.with_stride(stride),
            scheme: cfg.map(|c| c.solver.scheme).unwrap_or(SdeScheme::ExactOu),
        })
    }
}

fn write_solutions(dir: &Path, solutions: &[LimitSolution]) -> Result<PathBuf, CliError> {
    let rows: Vec<_> = solutions
        .iter()
        .enumerate()
        .flat_map(|(i, s)| solution_rows(i as u32, s, None))
        .collect();
    let path = dir.join("solution.csv");
    write_csv(&path, &rows)?;
    Ok(path)
}

fn solve_ode_cmd(g: &Globals, args: &LimitArgs) -> Result<(), CliError> {
    let setup = LimitSetup::new(g, args)?;
    let sol = solve_ode(&setup.spectral, &setup.init, setup.alpha, &setup.grid)?;
    let path = write_solutions(&g.out_dir()?, std::slice::from_ref(&sol))?;
    let tau = setup.grid.tau;
    print_json(&json!({
        "file": path,
        "n": setup.spectral.grid_size,
        "alpha": setup.alpha,
        "tau": tau,
        "dt": setup.grid.dt,
        "mse_initial": mse_limit(&sol, 0.0)?,
        "mse_final": mse_limit(&sol, tau)?,
        "pe_final": pe_limit(&sol, tau)?,
    }))
}

fn solve_sde_cmd(g: &Globals, args: &SdeArgs) -> Result<(), CliError> {
    let setup = LimitSetup::new(g, &args.limit)?;
    let beta = args.beta.unwrap_or(1.0);
    let scheme = match args.scheme {
        Some(SchemeArg::EulerMaruyama) => SdeScheme::EulerMaruyama,
        Some(SchemeArg::ExactOu) => SdeScheme::ExactOu,
        None => setup.scheme,
    };
    let params = if args.no_drift {
        ThetaSde {
            beta,
            ..ThetaSde::diffusion_only(setup.alpha)
        }
    } else {
        ThetaSde::new(setup.alpha, beta, scheme)
    };
    let seed = g.seed();
    let paths = (0..args.paths)
        .map(|p| {
            solve_theta_sde(
                &setup.spectral,
                &setup.init,
                &params,
                &setup.grid,
                &mut substream(seed, 0, p, Role::LimitNoise),
            )
        })
        .collect::<sgdlab_core::Result<Vec<_>>>()?;
    let path = write_solutions(&g.out_dir()?, &paths)?;
    print_json(&json!({
        "file": path,
        "paths": args.paths,
        "alpha": setup.alpha,
        "beta": beta,
        "drift": params.drift,
        "scheme": scheme,
        "dt": setup.grid.dt,
        "seed": seed,
    }))
}

/// The fluctuation spec with `Θ` solved on the full time grid.
fn fluctuation_spec(setup: &LimitSetup, params: &FluctuationParams) -> Result<FluctuationSpec, CliError> {
    let fine = TimeGrid { stride: 1, ..setup.grid };
    let theta = solve_ode(&setup.spectral, &setup.init, setup.alpha, &fine)?;
    let regime = match params.regime {
        RegimeArg::ParticleInteraction => FluctuationRegime::ParticleInteraction,
        RegimeArg::NoiseDominates => FluctuationRegime::NoiseDominates,
        RegimeArg::InterpolationError => FluctuationRegime::InterpolationError,
    };
    Ok(FluctuationSpec::new(
        setup.alpha,
        params.beta,
        params.zeta,
        regime,
        Arc::new(theta),
    )?)
}

fn solve_fluctuation_cmd(g: &Globals, args: &FluctuationArgs) -> Result<(), CliError> {
    let setup = LimitSetup::new(g, &args.params.limit)?;
    let spec = fluctuation_spec(&setup, &args.params)?;
    let zero = GridFunction::zeros(setup.spectral.grid_size);
    let seed = g.seed();
    let paths = (0..args.paths)
        .map(|p| {
            solve_fluctuation_sde(
                &spec,
                &setup.spectral,
                &zero,
                &setup.grid,
                &mut substream(seed, 0, p, Role::LimitNoise),
                &mut substream(seed, 0, p, Role::LimitInteraction),
            )
        })
        .collect::<sgdlab_core::Result<Vec<_>>>()?;
    let path = write_solutions(&g.out_dir()?, &paths)?;
    print_json(&json!({
        "file": path,
        "paths": args.paths,
        "alpha": spec.alpha,
        "beta": spec.effective_beta(),
        "zeta": spec.effective_zeta(),
        "regime": spec.regime,
        "dt": setup.grid.dt,
        "seed": seed,
    }))
}

fn picard_cmd(g: &Globals, args: &PicardArgs) -> Result<(), CliError> {
    let setup = LimitSetup::new(g, &args.params.limit)?;
    let spec = fluctuation_spec(&setup, &args.params)?;
    let zero = GridFunction::zeros(setup.spectral.grid_size);
    let seed = g.seed();
    let inc = NoiseIncrements::generate(
        &spec,
        &setup.spectral,
        &setup.grid,
        &mut substream(seed, 0, 0, Role::LimitNoise),
        &mut substream(seed, 0, 0, Role::LimitInteraction),
    )?;
    let picard = picard_solve(&spec, &setup.spectral, &zero, &setup.grid, &inc, args.max_iters, args.tol)?;
    let modal = solve_fluctuation_frozen(&spec, &setup.spectral, &zero, &setup.grid, &inc)?;
    let sup_error = picard
        .solution
        .values()
        .iter()
        .zip(modal.values())
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    let dir = g.out_dir()?;
    let path = write_solutions(&dir, &[picard.solution.clone(), modal])?;
    let report = json!({
        "file": path,
        "path_ids": {"picard": 0, "eigenbasis": 1},
        "iterations": picard.iterations,
        "differences": picard.differences,
        "ratios": picard.ratios(),
        "sup_error_vs_eigenbasis": sup_error,
        "dt": setup.grid.dt,
        "seed": seed,
    });
    write_json(&dir.join("picard.json"), &report)?;
    print_json(&report)
}

fn validate_covariance(args: &ValidateArgs) -> Result<(), CliError> {
    if args.d == 0 {
        return Err(validation("--d must be at least 1"));
    }
    let model = CovarianceModel::from_preset(&args.model, args.truncation)?;
    let sup_error = model.embedding_sup_error(args.d);
    let bound = 2.0 * model.lipschitz_c3() / args.d as f64;
    let min_eigenvalue = model.circulant_spectrum(args.d).into_iter().fold(f64::INFINITY, f64::min);
    let pass = sup_error <= bound;
    println!("model: {}", args.model);
    println!("d: {}", args.d);
    println!("sup_error: {sup_error:.6e}");
    println!("bound_2C3_over_d: {bound:.6e}");
    println!("min_sigma_eigenvalue: {min_eigenvalue:.6e}");
    println!("status: {}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("embedding error {sup_error:e} exceeds {bound:e}")))
    }
}

fn regime(g: &Globals, args: &RegimeArgs) -> Result<(), CliError> {
    if args.d == 0 || !(args.t > 0.0) {
        return Err(validation("--d and --T must be positive"));
    }
    let eta = match (args.eta, args.eta_alpha) {
        (Some(eta), _) => eta,
        (None, Some(alpha)) => alpha / (args.d as f64 * args.t),
        (None, None) => return Err(validation("give --eta or --eta-alpha")),
    };
    let gamma = match args.gamma.as_deref() {
        None => None,
        Some("sqrtT" | "sqrt_t" | "sqrt-t") => Some(args.t.sqrt()),
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|_| validation(format!("bad --gamma `{v}` (expected sqrtT or a number)")))?,
        ),
    };
    let thresholds = Thresholds {
        low: args.threshold_low,
        high: args.threshold_high,
    };
    if !(thresholds.low > 0.0 && thresholds.low < thresholds.high) {
        return Err(validation("thresholds must satisfy 0 < low < high"));
    }
    let report = classify_regime(args.d, args.t, eta, args.sigma, gamma, thresholds);
    if g.out.is_some() {
        write_json(&g.out_dir()?.join("regime.json"), &report)?;
    }
    print_json(&report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_specs() {
        assert_eq!(parse_init("constant:2.5").unwrap(), InitProfile::constant(2.5));
        assert_eq!(
            parse_init("cosine:0.5:3").unwrap(),
            InitProfile::smooth(SmoothProfile::Cosine { amplitude: 0.5, k: 3 })
        );
        assert_eq!(parse_init("mixed").unwrap(), InitProfile::smooth(SmoothProfile::Mixed));
        assert!(matches!(
            parse_init("random:7:4").unwrap(),
            InitProfile::Smooth {
                profile: SmoothProfile::RandomFourier { seed: 7, modes: 4 }
            }
        ));
        for bad in ["", "constant", "constant:x", "cosine:1", "random:1:-2", "spline:1"] {
            assert!(matches!(parse_init(bad), Err(CliError::Validation(_))), "{bad}");
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let v: CliError = sgdlab_core::Error::Config("x".into()).into();
        assert!(matches!(v, CliError::Validation(_)));
        let r: CliError = sgdlab_core::Error::TooManyDiverged { diverged: 2, total: 3 }.into();
        assert!(matches!(r, CliError::Runtime(_)));
    }
}
