//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specpow::diagnostics;
use specpow::harness::{self, Experiment, RfConfig, SvCompareConfig, SweepConfig};
use specpow::iterations::{self, IterationPlan, Scheme};
use specpow::kaon::{self, MapConfig};
use specpow::linalg::io::{load_matrix, save_matrix};
use specpow::optimizers::{self, DirectionKind, SgdNorm, TruncationNorm};
use specpow::remez;
use specpow::rfmodel::{self, RfMethod};
use specpow::{Precision, SpecError};

#[derive(Parser)]
#[command(name = "specpow", version, about = "Fractional Gram powers and spectral optimizer kernels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Arithmetic of the iteration kernels.
    #[arg(long, global = true, default_value = "f64", value_parser = parse_precision)]
    precision: Precision,
    /// Overrides the seed of configs read from files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Gram regularisation in normalised units; `auto` uses 8 unit roundoffs.
    #[arg(long, global = true)]
    epsilon: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Muon,
    Kaon,
    Freon,
    FreonC1,
    Tsgd,
    Sgd,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a rational coefficient schedule and write it as JSON.
    Fit {
        #[arg(long)]
        b: u32,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Lower end of the fitting interval; defaults to the bound for `b`.
        #[arg(long)]
        l0: Option<f64>,
        /// Fixed cushion; by default the smallest admissible one is searched.
        #[arg(long)]
        cushion: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an iteration to a matrix file.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        a: u32,
        #[arg(long)]
        b: u32,
        #[arg(long, default_value = "coupled-chol")]
        scheme: Scheme,
        /// Defaults to the schedule length, or 10 without a schedule.
        #[arg(long)]
        steps: Option<usize>,
        /// Schedule JSON from `fit`.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute an update direction.
    Direction {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        a: u32,
        #[arg(long, default_value_t = 2)]
        b: u32,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        pfrac: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability sweep from a JSON grid; writes sweep.csv and manifest.json.
    BenchStability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Output spectra against the exact and regularised targets.
    SvCompare {
        #[arg(long, default_value_t = 256)]
        m: usize,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 1e2)]
        kappa: f64,
        #[arg(long, default_value_t = 2)]
        a: u32,
        #[arg(long, default_value_t = 3)]
        b: u32,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "coupled-chol,direct,coupled")]
        methods: Vec<Scheme>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the random-feature model and write a trace CSV.
    RfTrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "specgd-optstep")]
        method: RfMethod,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = rfmodel::DEFAULT_LR)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stationary histogram of the scalar Kaon map.
    KaonPdf {
        #[arg(long, default_value_t = kaon::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Descent record of one step on a random-feature problem.
    Diagnose {
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment file (`kind`: sweep, svcomp, rf or kaon).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse::<Precision>().map_err(|e| e.to_string())
}

fn config_err(path: &str, msg: impl Into<String>) -> SpecError {
    SpecError::Config { path: path.into(), msg: msg.into() }
}

fn epsilon_of(g: &Global) -> Result<f64, SpecError> {
    match g.epsilon.as_deref() {
        None => Ok(0.0),
        Some("auto") => Ok(IterationPlan::auto_epsilon(g.precision)),
        Some(s) => s
            .parse::<f64>()
            .ok()
            .filter(|e| *e >= 0.0)
            .ok_or_else(|| config_err("--epsilon", format!("{s:?} is not a non-negative number or auto"))),
    }
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SpecError> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| config_err(&format!("{}:{}", path.display(), e.path()), e.inner().to_string()))
}

fn write_out(path: &Path) -> Result<fs::File, SpecError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(fs::File::create(path)?)
}

fn run(cli: Cli) -> Result<(), SpecError> {
    let g = &cli.global;
    let out_dir = &g.out_dir;
    match cli.command {
        Command::Fit { b, steps, l0, cushion, out } => {
            let l0 = l0.unwrap_or_else(|| remez::lower_bound_for(b));
            let sched = match cushion {
                Some(c) => remez::fit_rational_schedule(l0, steps, b, c)?,
                None => remez::fit_with_default_cushion(l0, steps, b)?,
            };
            serde_json::to_writer_pretty(write_out(&resolve(out_dir, &out))?, &sched)?;
            println!("max gamma {:.4e}, final l {:.6}", sched.max_gamma(), sched.final_l());
        }
        Command::Apply { input, a, b, scheme, steps, schedule, out } => {
            let m = load_matrix(&input)?;
            let sched: Option<remez::FitSchedule> = schedule.as_deref().map(read_json).transpose()?;
            let steps = steps.or(sched.as_ref().map(|s| s.steps.len())).unwrap_or(10);
            let mut plan = IterationPlan::new(a, b, scheme, steps)?.with_epsilon(epsilon_of(g)?);
            if let Some(sched) = sched {
                plan = plan.with_schedule(iterations::Schedule::Rational(sched));
            }
            let res = iterations::run(&m, &plan, g.precision)?;
            if res.diverged {
                return Err(SpecError::NonFinite);
            }
            save_matrix(&resolve(out_dir, &out), &res.output, g.precision)?;
            println!("{}", serde_json::to_string(&res.ledger)?);
        }
        Command::Direction { kind, input, a, b, steps, pfrac, out } => {
            let m = load_matrix(&input)?;
            let kind = match kind {
                Kind::Muon => DirectionKind::Muon { steps },
                Kind::Kaon => DirectionKind::Kaon { steps },
                Kind::Freon => DirectionKind::Freon { a, b, steps, scheme: Scheme::CoupledChol },
                Kind::FreonC1 => DirectionKind::FreonC1 { steps },
                Kind::Tsgd => DirectionKind::Tsgd { p_frac: pfrac, norm: TruncationNorm::Frobenius },
                Kind::Sgd => DirectionKind::Sgd { norm: SgdNorm::Spectral },
            };
            let dir = optimizers::direction(&m, &kind)?;
            save_matrix(&resolve(out_dir, &out), &dir.d, g.precision)?;
            println!("dual_scale {:.12e}", dir.dual_scale);
        }
        Command::BenchStability { config } => {
            let mut cfg: SweepConfig = read_json(&config)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            let raw = serde_json::to_vec(&Experiment::Sweep(cfg.clone()))?;
            let manifest = harness::run_parsed(&Experiment::Sweep(cfg), &raw, out_dir)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::SvCompare { m, n, kappa, a, b, steps, methods, out } => {
            let eps = match epsilon_of(g)? {
                e if e > 0.0 => Some(e),
                _ => None,
            };
            let cfg = SvCompareConfig {
                m,
                n,
                kappa,
                a,
                b,
                methods,
                steps,
                precision: g.precision,
                epsilon: eps,
                seed: g.seed.unwrap_or(0),
            };
            let table = harness::sv_comparison(&cfg)?;
            harness::write_sv_csv(write_out(&resolve(out_dir, &out))?, &table)?;
        }
        Command::RfTrain { config, method, steps, lr, out } => {
            let mut pc: RfConfig = match config {
                Some(path) => read_json(&path)?,
                None => RfConfig::default(),
            };
            if let Some(seed) = g.seed {
                pc.seed = seed;
            }
            let trace = rfmodel::rf_train(&pc.build()?, method, steps, lr)?;
            harness::write_trace_csv(write_out(&resolve(out_dir, &out))?, &trace)?;
            if trace.diverged {
                eprintln!("{method}: diverged after {} steps", trace.rows.len());
            }
            println!("final loss {:.6e}", trace.final_loss);
        }
        Command::KaonPdf { lambda, out } => {
            let cfg = MapConfig { lambda, seed: g.seed.unwrap_or(0), ..MapConfig::default() };
            let h = kaon::stationary_histogram(&cfg)?;
            harness::write_histogram_csv(write_out(&resolve(out_dir, &out))?, &h)?;
        }
        Command::Diagnose { problem, direction, alpha, out } => {
            let mut pc: RfConfig = match problem {
                Some(path) => read_json(&path)?,
                None => RfConfig::default(),
            };
            if let Some(seed) = g.seed {
                pc.seed = seed;
            }
            let p = pc.build()?;
            let d = load_matrix(&direction)?;
            let g_batch = rfmodel::rf_grad(&p);
            let rec = diagnostics::exact_descent_check(&p, &p.w, &g_batch, &d, alpha)?;
            serde_json::to_writer_pretty(write_out(&resolve(out_dir, &out))?, &rec)?;
        }
        Command::Run { config } => {
            let manifest = harness::run_experiment(&config, out_dir)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
    }
    Ok(())
}

fn exit_code(e: &SpecError) -> u8 {
    match e {
        SpecError::Config { .. } | SpecError::Json(_) | SpecError::Io(_) | SpecError::Format(_) | SpecError::Csv(_) => {
            2
        }
        SpecError::InvalidPlan(_) | SpecError::InvalidSchedule(_) | SpecError::Shape(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
