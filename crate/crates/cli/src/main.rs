//! `sameday`: generate instances, tune thresholds, train dispatch
//! learners, evaluate policy matrices, and emit analytic figure data.
//!
//! Exit codes: 0 success, 1 usage error, 2 infeasible configuration,
//! 3 I/O failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sameday_core::analytics::{
    b_star, emit_curves, mc_accept_one_more, mc_reject_two, AnalyticParams, BStar,
};
use sameday_core::dqn::{
    checkpoint_bytes, curve_csv, training_run, TrainerKind, TrainingSchedule,
};
use sameday_core::experiments::{
    parse_episodes_csv, report_from_rows, run_matrix, DefaultProvider, ExperimentError, GeoKind,
    RunMatrixSpec,
};
use sameday_core::features::FeatureKind;
use sameday_core::instance::{gen_sample_paths, save_paths_file, Geography, InstanceConfig};
use sameday_core::policies::{
    default_delta_grid, default_tau_grid, tune_threshold_by_enumeration, ThresholdFamily,
};

type Cfg = InstanceConfig<f64>;

#[derive(Parser)]
#[command(
    name = "sameday",
    version,
    about = "Same-day delivery dispatching with vehicles and drones"
)]
struct Cli {
    /// TOML config file supplying defaults (instance, schedule, matrix).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for all randomized stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output artifacts (created if missing).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate seeded sample paths into a text file.
    Gen(GenArgs),
    /// Grid-tune a threshold policy by exhaustive enumeration.
    Tune(TuneArgs),
    /// Train a dispatch learner; writes checkpoint and learning curve.
    Train(TrainArgs),
    /// Evaluate policies over a fleet x geography matrix on shared days.
    Eval(EvalArgs),
    /// Regenerate the aggregated report from a persisted episode log.
    Analyze(AnalyzeArgs),
    /// Emit analytic accept/reject probability curves and b* thresholds.
    Curves(CurvesArgs),
}

/// Instance overrides shared by the simulation subcommands.
#[derive(Args, Clone)]
struct InstanceArgs {
    /// Fleet as "m,n" (vehicles,drones).
    #[arg(long, value_parser = parse_fleet)]
    fleet: Option<(usize, usize)>,
    /// Geography: homogeneous | heterogeneous.
    #[arg(long)]
    geography: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Number of days (sample paths) to generate.
    #[arg(long, default_value_t = 10)]
    days: usize,
    /// Output file; defaults to <out-dir>/paths.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Threshold family: pfa | pfa_rej | delta.
    #[arg(long, default_value = "pfa")]
    family: String,
    /// Number of tuning days.
    #[arg(long, default_value_t = 20)]
    days: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Learner: q | q_no_rej | post_decision.
    #[arg(long)]
    trainer: Option<String>,
    /// Feature set: full | local | action_only | distance_only | post_decision.
    #[arg(long)]
    features: Option<String>,
    /// Training steps (episodes).
    #[arg(long)]
    steps: Option<u64>,
    /// Size of the training-day pool.
    #[arg(long)]
    days: Option<usize>,
    /// Number of held-out evaluation days.
    #[arg(long)]
    eval_days: Option<usize>,
    /// Disable experience replay (clear buffers every episode).
    #[arg(long)]
    no_replay: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Fleet "m,n"; repeat for several cells.
    #[arg(long, value_parser = parse_fleet)]
    fleet: Vec<(usize, usize)>,
    /// Geography (homogeneous | heterogeneous); repeatable.
    #[arg(long)]
    geography: Vec<String>,
    /// Policy spec (e.g. pfa:tau=14, delta:delta=35, greedy, random,
    /// q:checkpoint=model.ckpt); repeatable, first is the baseline.
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// Shortcut: evaluate this checkpoint as the policy "q:checkpoint=..".
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluation days per cell.
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Episode log CSV written by `eval`.
    #[arg(long)]
    episodes: PathBuf,
    /// Where to write the regenerated report (defaults to stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    /// Dispatch times t' to tabulate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![300.0, 410.0, 416.0])]
    t_prime: Vec<f64>,
    /// Largest drone travel time b' in the sweep (minutes).
    #[arg(long, default_value_t = 40.0)]
    b_max: f64,
    /// Also run the Monte-Carlo oracle with this many trials per point.
    #[arg(long)]
    mc_trials: Option<u64>,
}

/// Error with a process exit code: 2 infeasible config, 3 I/O.
#[derive(Debug)]
enum AppError {
    Config(String),
    Io(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "infeasible configuration: {m}"),
            AppError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<ExperimentError> for AppError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(io) => AppError::Io(io.to_string()),
            ExperimentError::Checkpoint(c) => AppError::Io(c.to_string()),
            other => AppError::Config(other.to_string()),
        }
    }
}

fn parse_fleet(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(',')
        .ok_or_else(|| "expected \"m,n\"".to_string())?;
    let m = m.trim().parse().map_err(|_| "bad vehicle count".to_string())?;
    let n = n.trim().parse().map_err(|_| "bad drone count".to_string())?;
    Ok((m, n))
}

/// TOML config file: every field optional, commands read what they need.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    instance: InstanceSection,
    #[serde(default)]
    schedule: ScheduleSection,
    #[serde(default)]
    matrix: MatrixSection,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceSection {
    order_window_end: Option<f64>,
    t_v_max: Option<f64>,
    t_d_max: Option<f64>,
    deadline_len: Option<f64>,
    load_vehicle: Option<f64>,
    load_drone: Option<f64>,
    service_vehicle: Option<f64>,
    service_drone: Option<f64>,
    charge_drone: Option<f64>,
    fleet_m: Option<usize>,
    fleet_n: Option<usize>,
    expected_requests: Option<f64>,
    /// homogeneous | heterogeneous
    geography: Option<String>,
    /// Sigma for the homogeneous geography (km).
    sigma_km: Option<f64>,
    vehicle_speed_kmh: Option<f64>,
    drone_speed_kmh: Option<f64>,
    street_factor: Option<f64>,
    drone_round_up: Option<bool>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    total_steps: Option<u64>,
    minibatch: Option<usize>,
    buffer_capacity: Option<usize>,
    eps_start: Option<f64>,
    eps_end: Option<f64>,
    eps_end_frac: Option<f64>,
    eval_interval: Option<u64>,
    replay: Option<bool>,
    train_days: Option<usize>,
    eval_days: Option<usize>,
    trainer: Option<String>,
    features: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixSection {
    /// List of [m, n] pairs.
    fleets: Option<Vec<[usize; 2]>>,
    geographies: Option<Vec<String>>,
    eval_days: Option<usize>,
    policies: Option<Vec<String>>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, AppError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_geography(name: &str, window_end: f64, sigma_km: f64) -> Result<Geography<f64>, AppError> {
    match name {
        "homogeneous" => Ok(Geography::Homogeneous { sigma_km }),
        "heterogeneous" => Ok(Geography::study_heterogeneous(window_end)),
        other => Err(AppError::Config(format!(
            "unknown geography {other:?} (expected homogeneous or heterogeneous)"
        ))),
    }
}

/// Builds the effective instance: study defaults, then [instance] file
/// overrides, then command-line flags.
fn resolve_instance(file: &FileConfig, args: &InstanceArgs) -> Result<Cfg, AppError> {
    let sec = &file.instance;
    let m = args.fleet.map(|f| f.0).or(sec.fleet_m).unwrap_or(2);
    let n = args.fleet.map(|f| f.1).or(sec.fleet_n).unwrap_or(5);
    let window = sec.order_window_end.unwrap_or(420.0);
    let sigma = sec.sigma_km.unwrap_or(3.0);
    let geo_name = args
        .geography
        .clone()
        .or_else(|| sec.geography.clone())
        .unwrap_or_else(|| "homogeneous".to_string());
    let geography = parse_geography(&geo_name, window, sigma)?;
    let mut cfg = Cfg::study(m, n, geography);
    cfg.order_window_end = window;
    let set = |target: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *target = v;
        }
    };
    set(&mut cfg.t_v_max, sec.t_v_max);
    set(&mut cfg.t_d_max, sec.t_d_max);
    set(&mut cfg.deadline_len, sec.deadline_len);
    set(&mut cfg.load_vehicle, sec.load_vehicle);
    set(&mut cfg.load_drone, sec.load_drone);
    set(&mut cfg.service_vehicle, sec.service_vehicle);
    set(&mut cfg.service_drone, sec.service_drone);
    set(&mut cfg.charge_drone, sec.charge_drone);
    set(&mut cfg.expected_requests, sec.expected_requests);
    set(&mut cfg.travel.vehicle_speed_kmh, sec.vehicle_speed_kmh);
    set(&mut cfg.travel.drone_speed_kmh, sec.drone_speed_kmh);
    set(&mut cfg.travel.street_factor, sec.street_factor);
    if let Some(r) = sec.drone_round_up {
        cfg.travel.drone_round_up = r;
    }
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

fn resolve_schedule(file: &FileConfig, args: &TrainArgs) -> TrainingSchedule {
    let sec = &file.schedule;
    let mut s = TrainingSchedule::default();
    if let Some(v) = args.steps.or(sec.total_steps) {
        s.total_steps = v;
    }
    if let Some(v) = sec.minibatch {
        s.minibatch = v;
    }
    if let Some(v) = sec.buffer_capacity {
        s.buffer_capacity = v;
    }
    if let Some(v) = sec.eps_start {
        s.eps_start = v;
    }
    if let Some(v) = sec.eps_end {
        s.eps_end = v;
    }
    if let Some(v) = sec.eps_end_frac {
        s.eps_end_frac = v;
    }
    if let Some(v) = sec.eval_interval {
        s.eval_interval = v;
    }
    if let Some(v) = sec.replay {
        s.replay = v;
    }
    if args.no_replay {
        s.replay = false;
    }
    s
}

fn ensure_out_dir(dir: &Path) -> Result<(), AppError> {
    fs::create_dir_all(dir).map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, AppError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Deterministic offset separating evaluation-path seeds from training
/// seeds derived from the same master seed.
const EVAL_SEED_OFFSET: u64 = 0x517c_c1b7_2722_0a95;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let file = load_file_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(&file, args, seed, &out_dir),
        Cmd::Tune(args) => cmd_tune(&file, args, seed),
        Cmd::Train(args) => cmd_train(&file, args, seed, &out_dir),
        Cmd::Eval(args) => cmd_eval(&file, args, seed, &out_dir),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Curves(args) => cmd_curves(args, seed, &out_dir),
    }
}

fn cmd_gen(file: &FileConfig, args: &GenArgs, seed: u64, out_dir: &Path) -> Result<(), AppError> {
    let cfg = resolve_instance(file, &args.instance)?;
    let paths = gen_sample_paths(&cfg, seed, args.days);
    let out = match &args.out {
        Some(p) => p.clone(),
        None => {
            ensure_out_dir(out_dir)?;
            out_dir.join("paths.txt")
        }
    };
    save_paths_file(&paths, &out).map_err(|e| AppError::Io(e.to_string()))?;
    let requests: usize = paths.iter().map(|p| p.requests.len()).sum();
    println!(
        "wrote {} days ({} requests) for {} to {}",
        args.days,
        requests,
        cfg.name,
        out.display()
    );
    Ok(())
}

fn cmd_tune(file: &FileConfig, args: &TuneArgs, seed: u64) -> Result<(), AppError> {
    let cfg = resolve_instance(file, &args.instance)?;
    let (family, grid) = match args.family.as_str() {
        "pfa" => (ThresholdFamily::Pfa, default_tau_grid::<f64>()),
        "pfa_rej" => (ThresholdFamily::PfaRej, default_tau_grid::<f64>()),
        "delta" => (ThresholdFamily::Delta, default_delta_grid::<f64>()),
        other => {
            return Err(AppError::Config(format!(
                "unknown family {other:?} (expected pfa, pfa_rej, or delta)"
            )))
        }
    };
    let paths = gen_sample_paths(&cfg, seed, args.days);
    let (best, mean) = tune_threshold_by_enumeration(family, &grid, &paths, &cfg)
        .map_err(|e| AppError::Config(e.to_string()))?;
    println!(
        "family={} threshold={} mean_served={} days={}",
        args.family, best, mean, args.days
    );
    Ok(())
}

fn cmd_train(
    file: &FileConfig,
    args: &TrainArgs,
    seed: u64,
    out_dir: &Path,
) -> Result<(), AppError> {
    let cfg = resolve_instance(file, &args.instance)?;
    let schedule = resolve_schedule(file, args);
    let kind_name = args
        .trainer
        .clone()
        .or_else(|| file.schedule.trainer.clone())
        .unwrap_or_else(|| "q".to_string());
    let kind = TrainerKind::from_str(&kind_name).map_err(|e| AppError::Config(e.to_string()))?;
    let feature_name = args
        .features
        .clone()
        .or_else(|| file.schedule.features.clone());
    let features = match feature_name {
        Some(name) => FeatureKind::from_str(&name).map_err(|e| AppError::Config(e.to_string()))?,
        None => match kind {
            TrainerKind::PostDecisionVfa => FeatureKind::PostDecision,
            _ => FeatureKind::Full,
        },
    };
    let train_days = args.days.or(file.schedule.train_days).unwrap_or(500);
    let eval_days = args.eval_days.or(file.schedule.eval_days).unwrap_or(20);
    let train_paths = gen_sample_paths(&cfg, seed, train_days);
    let eval_paths = gen_sample_paths(&cfg, seed.wrapping_add(EVAL_SEED_OFFSET), eval_days);
    let out = training_run(&cfg, &train_paths, &eval_paths, kind, features, &schedule, seed)
        .map_err(|e| AppError::Config(e.to_string()))?;
    ensure_out_dir(out_dir)?;
    let best = out.best_trainer();
    let ckpt = write_artifact_bytes(out_dir, "checkpoint.ckpt", &checkpoint_bytes(&best))?;
    let curve = write_artifact(out_dir, "curve.csv", &curve_csv(&out.curve))?;
    println!(
        "trained {} ({} features) for {} steps; best eval {} served/day at step {}",
        kind, features, schedule.total_steps, out.best_eval, out.best_step
    );
    println!("checkpoint: {}", ckpt.display());
    println!("curve: {}", curve.display());
    Ok(())
}

fn write_artifact_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, AppError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_eval(file: &FileConfig, args: &EvalArgs, seed: u64, out_dir: &Path) -> Result<(), AppError> {
    let sec = &file.matrix;
    let fleets: Vec<(usize, usize)> = if !args.fleet.is_empty() {
        args.fleet.clone()
    } else if let Some(f) = &sec.fleets {
        f.iter().map(|p| (p[0], p[1])).collect()
    } else {
        vec![(2, 5)]
    };
    let geo_names: Vec<String> = if !args.geography.is_empty() {
        args.geography.clone()
    } else if let Some(g) = &sec.geographies {
        g.clone()
    } else {
        vec!["homogeneous".to_string()]
    };
    let mut geographies = Vec::new();
    for g in &geo_names {
        geographies.push(GeoKind::parse(g).ok_or_else(|| {
            AppError::Config(format!(
                "unknown geography {g:?} (expected homogeneous or heterogeneous)"
            ))
        })?);
    }
    let mut policies: Vec<String> = if !args.policies.is_empty() {
        args.policies.clone()
    } else {
        sec.policies.clone().unwrap_or_default()
    };
    if let Some(ckpt) = &args.checkpoint {
        policies.push(format!("q:checkpoint={}", ckpt.display()));
    }
    if policies.is_empty() {
        return Err(AppError::Config(
            "no policies given (use --policy or [matrix].policies)".to_string(),
        ));
    }
    let eval_days = args.days.or(sec.eval_days).unwrap_or(500);
    let base = resolve_instance(
        file,
        &InstanceArgs {
            fleet: None,
            geography: None,
        },
    )?;
    let spec = RunMatrixSpec {
        fleets,
        geographies,
        eval_days,
        policies,
        seed,
    };
    let mut provider = DefaultProvider;
    let out = run_matrix::<f64>(&spec, &base, &mut provider)?;
    ensure_out_dir(out_dir)?;
    write_artifact(out_dir, "episodes.csv", &out.episodes_csv)?;
    let report = write_artifact(out_dir, "report.csv", &out.report_csv)?;
    for (name, contents) in out.scatter.iter().chain(out.feasmap.iter()) {
        write_artifact(out_dir, name, contents)?;
    }
    print!("{}", out.report_csv);
    println!("report: {}", report.display());
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), AppError> {
    let text = fs::read_to_string(&args.episodes)
        .map_err(|e| AppError::Io(format!("{}: {e}", args.episodes.display())))?;
    let rows = parse_episodes_csv(&text)?;
    let report = report_from_rows(&rows)?;
    if let Some(out) = &args.out {
        fs::write(out, &report).map_err(|e| AppError::Io(format!("{}: {e}", out.display())))?;
    }
    print!("{report}");
    Ok(())
}

fn cmd_curves(args: &CurvesArgs, seed: u64, out_dir: &Path) -> Result<(), AppError> {
    if args.b_max <= 0.0 {
        return Err(AppError::Config("b-max must be positive".to_string()));
    }
    let params = AnalyticParams::illustrative();
    params
        .validate()
        .map_err(|e| AppError::Config(e.to_string()))?;
    let b_primes: Vec<f64> = (1..=args.b_max.floor() as usize).map(|b| b as f64).collect();
    ensure_out_dir(out_dir)?;
    let curves = write_artifact(out_dir, "curves.csv", &emit_curves(&params, &args.t_prime, &b_primes))?;
    let mut bstar_csv = String::from("t_prime,b_star\n");
    for &tp in &args.t_prime {
        let b = b_star(&params, tp);
        let label = match b {
            BStar::AlwaysAccept => "always_accept".to_string(),
            BStar::Threshold(v) => format!("{v}"),
        };
        bstar_csv.push_str(&format!("{tp},{label}\n"));
        println!("t'={tp}: b*={label}");
    }
    let bstar = write_artifact(out_dir, "bstar.csv", &bstar_csv)?;
    if let Some(trials) = args.mc_trials {
        let mut mc_csv = String::from("t_prime,b_prime,mc_accept,mc_accept_se,mc_reject,mc_reject_se\n");
        for &tp in &args.t_prime {
            let reject = mc_reject_two(&params, tp, trials, seed);
            for &bp in &b_primes {
                let accept = mc_accept_one_more(&params, tp, bp, trials, seed);
                mc_csv.push_str(&format!(
                    "{tp},{bp},{},{},{},{}\n",
                    accept.p_hat, accept.se, reject.p_hat, reject.se
                ));
            }
        }
        let mc = write_artifact(out_dir, "curves_mc.csv", &mc_csv)?;
        println!("mc oracle: {}", mc.display());
    }
    println!("curves: {}", curves.display());
    println!("b*: {}", bstar.display());
    Ok(())
}
