//! The `hybrid-ode` command-line driver.
//!
//! Every artifact starts with a provenance comment
//! `# seed=…, dt=…, method=…, version=…, problem=…` and contains nothing
//! run-dependent beyond the flags, so reruns are byte-identical. Numbers are
//! printed with Rust's shortest round-trip formatting.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::hybrid::{make_residual_dataset, HybridStepper};
use crate::neuralnet::{FeedForwardNet, DEFAULT_HIDDEN_WIDTH};
use crate::problems::{heat_mol, linear_decay_forced, HeatConfig, IvpProblem, SdeProblem};
use crate::solvers::{integrate, step_count, Method, StepConfig, Trajectory};
use crate::training::{
    make_dataset, train_es, train_sgd, validate, DataSource, Dataset, EsConfig, SgdConfig, StepReport, Trainer,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hybrid-ode", version, about = "Classical and learned time stepping for small ODE/PDE problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a problem with a classical scheme.
    Solve(SolveArgs),
    /// Train a network on a trajectory and write the model.
    Train(TrainArgs),
    /// Free-running rollout of a trained network.
    Rollout(ModelArgs),
    /// Exponential splitting with the network in the nonlinear slot.
    Hybrid(ModelArgs),
    /// Compare a network or hybrid rollout with a reference.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemName {
    Decay,
    Heat,
}

impl ProblemName {
    fn as_str(self) -> &'static str {
        match self {
            ProblemName::Decay => "decay",
            ProblemName::Heat => "heat",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "decay")]
    pub problem: ProblemName,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Final time (defaults to the problem's own horizon).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub diffusivity: Option<f64>,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub x_lo: Option<f64>,
    #[arg(long)]
    pub x_hi: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ProblemArgs {
    pub fn build(&self) -> crate::Result<IvpProblem> {
        match self.problem {
            ProblemName::Decay => {
                if self.diffusivity.is_some() || self.dx.is_some() || self.x_lo.is_some() || self.x_hi.is_some() {
                    return Err(Error::Config("heat flags given for the decay problem".into()));
                }
                let p = linear_decay_forced();
                match self.horizon {
                    Some(t) => with_horizon(p, t),
                    None => Ok(p),
                }
            }
            ProblemName::Heat => {
                let d = HeatConfig::default();
                heat_mol(&HeatConfig {
                    diffusivity: self.diffusivity.unwrap_or(d.diffusivity),
                    x_lo: self.x_lo.unwrap_or(d.x_lo),
                    x_hi: self.x_hi.unwrap_or(d.x_hi),
                    dx: self.dx.unwrap_or(d.dx),
                    horizon: self.horizon.unwrap_or(d.horizon),
                })
            }
        }
    }
}

fn with_horizon(p: IvpProblem, horizon: f64) -> crate::Result<IvpProblem> {
    let mut q = IvpProblem::new(p.name(), p.linear().clone(), p.y0().clone(), horizon)?;
    let u = p.input_fn();
    q = q.with_input(p.input_dim(), move |t| u(t));
    if let Some(b) = p.max_stable_dt() {
        q = q.with_stability_bound(b);
    }
    let inner = p.clone();
    q = q.with_nonlinear(move |y, u, t| inner.nonlinear(y, u, t).expect("nonlinear slot"));
    if p.has_exact() {
        let inner = p;
        q = q.with_exact(move |t| inner.exact(t).expect("exact solution present"));
    }
    Ok(q)
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "euler")]
    pub method: Method,
    #[arg(long)]
    pub no_cfl_check: bool,
    /// Number of Euler–Maruyama paths; above 1 the ensemble mean and std are written.
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Additive noise amplitude for `--method em`.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainSource {
    Euler,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainTarget {
    /// Next state from current state and input.
    State,
    /// Nonlinear-slot residual for the hybrid stepper.
    Residual,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "es")]
    pub trainer: Trainer,
    #[arg(long, default_value_t = 250)]
    pub population: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value = "euler")]
    pub train_source: TrainSource,
    #[arg(long, value_enum, default_value = "state")]
    pub target: TrainTarget,
    #[arg(long, default_value_t = DEFAULT_HIDDEN_WIDTH)]
    pub hidden: usize,
    #[arg(long)]
    pub no_cfl_check: bool,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceKind {
    Euler,
    Analytic,
    /// The candidate itself; every error is zero.
    #[value(name = "self")]
    SelfCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompareMode {
    Net,
    Hybrid,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "analytic")]
    pub reference: ReferenceKind,
    #[arg(long, value_enum, default_value = "net")]
    pub mode: CompareMode,
    #[arg(long)]
    pub no_cfl_check: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Error surfaced to the shell.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Cfl { .. } | Error::Divergence { .. } | Error::Singular { .. } => EXIT_NUMERICAL,
            Error::Parse(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Train(a) => cmd_train(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Hybrid(a) => cmd_hybrid(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn provenance(p: &ProblemArgs, method: &str) -> String {
    format!(
        "# seed={}, dt={}, method={}, version={}, problem={}\n",
        p.seed,
        p.dt,
        method,
        env!("CARGO_PKG_VERSION"),
        p.problem.as_str()
    )
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn columns(prefix: &str, m: usize) -> String {
    (1..=m).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(",")
}

/// Header `t,y_1,…,y_m` and one row per grid point.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = format!("t,{}\n", columns("y", traj.dim()));
    for (t, y) in traj.iter() {
        let _ = writeln!(s, "{t},{}", join(y.iter().copied()));
    }
    s
}

/// Report rows followed by a `# summary` comment with MSE and max error.
pub fn report_csv(report: &StepReport, m: usize) -> String {
    let mut s = format!("t,{},{},abs_error\n", columns("ref", m), columns("method", m));
    for row in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            row.t,
            join(row.reference.iter().copied()),
            join(row.method.iter().copied()),
            row.abs_error
        );
    }
    let _ = writeln!(s, "# summary mse={}, max_error={}", report.mse, report.max_error);
    s
}

fn analytic_trajectory(p: &IvpProblem, dt: f64) -> crate::Result<Trajectory> {
    if !p.has_exact() {
        return Err(Error::Config(format!("problem '{}' has no analytic solution", p.name())));
    }
    let steps = step_count(p.horizon(), dt)?;
    let states = (0..=steps)
        .map(|k| p.exact(k as f64 * dt).expect("checked above"))
        .collect::<crate::Result<Vec<_>>>()?;
    Trajectory::uniform(dt, states)
}

fn euler_trajectory(p: &IvpProblem, dt: f64, cfl_check: bool) -> crate::Result<Trajectory> {
    let mut cfg = StepConfig::new(Method::Euler, dt);
    if !cfl_check {
        cfg = cfg.without_cfl_check();
    }
    integrate(p, &cfg)
}

pub fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let p = a.problem.build()?;
    let mut cfg = StepConfig::new(a.method, a.problem.dt).with_seed(a.problem.seed);
    if a.no_cfl_check {
        cfg = cfg.without_cfl_check();
    }
    if a.paths == 0 {
        return Err(Error::Config("--paths must be at least 1".into()).into());
    }
    let mut text = provenance(&a.problem, a.method.as_str());
    if a.method == Method::EulerMaruyama {
        let sde = SdeProblem::additive(p, a.sigma);
        if a.paths == 1 {
            text.push_str(&trajectory_csv(&integrate(&sde, &cfg)?));
        } else {
            text.push_str(&ensemble_csv(&sde, &cfg, a.paths)?);
        }
    } else {
        text.push_str(&trajectory_csv(&integrate(&p, &cfg)?));
    }
    emit(a.out.as_deref(), &text)
}

fn ensemble_csv(sde: &SdeProblem, cfg: &StepConfig, paths: usize) -> crate::Result<String> {
    use rayon::prelude::*;
    let runs = (0..paths)
        .into_par_iter()
        .map(|i| integrate(sde, &cfg.clone().with_seed(crate::derive_seed(cfg.seed, &[i as u64]))))
        .collect::<crate::Result<Vec<_>>>()?;
    let first = &runs[0];
    let m = first.dim();
    let n = paths as f64;
    let mut s = format!("t,{},{}\n", columns("mean", m), columns("std", m));
    for (k, t) in first.times().iter().enumerate() {
        let mut mean = vec![0.0; m];
        for r in &runs {
            for (acc, v) in mean.iter_mut().zip(r.states()[k].iter()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n);
        let mut var = vec![0.0; m];
        for r in &runs {
            for ((acc, v), mu) in var.iter_mut().zip(r.states()[k].iter()).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var.into_iter().map(|x| (x / (n - 1.0)).sqrt());
        let _ = writeln!(s, "{t},{},{}", join(mean.iter().copied()), join(std));
    }
    Ok(s)
}

fn training_dataset(a: &TrainArgs, p: &IvpProblem) -> crate::Result<Dataset> {
    let dt = a.problem.dt;
    let (traj, source) = match a.train_source {
        TrainSource::Euler => (euler_trajectory(p, dt, !a.no_cfl_check)?, DataSource::Numerical),
        TrainSource::Analytic => (analytic_trajectory(p, dt)?, DataSource::Analytic),
    };
    match a.target {
        TrainTarget::State => {
            let u = p.input_fn();
            make_dataset(&traj, &*u, source)
        }
        TrainTarget::Residual => make_residual_dataset(p, &traj, source),
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let p = a.problem.build()?;
    let ds = training_dataset(a, &p)?;
    let dims = [p.dim() + p.input_dim(), a.hidden, p.dim()];
    let seed = a.problem.seed;
    let (net, history, name) = match a.trainer {
        Trainer::Es => {
            let cfg = EsConfig {
                population: a.population,
                iterations: a.iters,
                noise_scale: a.noise,
                seed,
            };
            let r = train_es(&ds, &dims, &cfg)?;
            (r.best, r.history, "es")
        }
        Trainer::Sgd => {
            let cfg = SgdConfig {
                learning_rate: a.lr,
                epochs: a.epochs,
                seed,
            };
            let r = train_sgd(&ds, FeedForwardNet::init_weights(&dims, seed)?, &cfg)?;
            (r.net, r.history, "sgd")
        }
    };
    let prov = provenance(&a.problem, name);
    let model = format!("{prov}{}", net.to_text());
    fs::write(&a.out, model).map_err(|e| io_error(&a.out, e))?;

    let mut hist = format!("{prov}iteration,best_mse\n");
    for (i, h) in history.iter().enumerate() {
        let _ = writeln!(hist, "{},{h}", i + 1);
    }
    let path = a.history.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    fs::write(&path, hist).map_err(|e| io_error(&path, e))
}

pub fn load_model(path: &Path) -> CliResult<FeedForwardNet> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    FeedForwardNet::from_text(&text).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn check_model_shape(net: &FeedForwardNet, p: &IvpProblem) -> CliResult<()> {
    let want = (p.dim() + p.input_dim(), p.dim());
    let got = (net.input_dim(), net.output_dim());
    if want != got {
        return Err(CliError {
            code: EXIT_USAGE,
            message: format!(
                "model maps {} -> {} but problem '{}' needs {} -> {}",
                got.0,
                got.1,
                p.name(),
                want.0,
                want.1
            ),
        });
    }
    Ok(())
}

fn net_rollout(net: &FeedForwardNet, p: &IvpProblem, dt: f64) -> crate::Result<Trajectory> {
    let u = p.input_fn();
    crate::training::rollout(net, p.y0(), &*u, dt, p.horizon())
}

fn hybrid_rollout(net: FeedForwardNet, p: &IvpProblem, dt: f64) -> crate::Result<Trajectory> {
    let u = p.input_fn();
    HybridStepper::for_problem(p, net, dt)?.rollout(p.y0(), &*u, p.horizon())
}

pub fn cmd_rollout(a: &ModelArgs) -> CliResult<()> {
    let p = a.problem.build()?;
    let net = load_model(&a.model)?;
    check_model_shape(&net, &p)?;
    let traj = net_rollout(&net, &p, a.problem.dt)?;
    emit(a.out.as_deref(), &(provenance(&a.problem, "rollout") + &trajectory_csv(&traj)))
}

pub fn cmd_hybrid(a: &ModelArgs) -> CliResult<()> {
    let p = a.problem.build()?;
    let net = load_model(&a.model)?;
    check_model_shape(&net, &p)?;
    let traj = hybrid_rollout(net, &p, a.problem.dt)?;
    emit(a.out.as_deref(), &(provenance(&a.problem, "hybrid") + &trajectory_csv(&traj)))
}

pub fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let p = a.problem.build()?;
    let net = load_model(&a.model)?;
    check_model_shape(&net, &p)?;
    let dt = a.problem.dt;
    let start = std::time::Instant::now();
    let candidate = match a.mode {
        CompareMode::Net => net_rollout(&net, &p, dt)?,
        CompareMode::Hybrid => hybrid_rollout(net.clone(), &p, dt)?,
    };
    let reference = match a.reference {
        ReferenceKind::Euler => euler_trajectory(&p, dt, !a.no_cfl_check)?,
        ReferenceKind::Analytic => analytic_trajectory(&p, dt)?,
        ReferenceKind::SelfCompare => candidate.clone(),
    };
    let report = match a.mode {
        CompareMode::Net => {
            let u = p.input_fn();
            validate(&net, &reference, &*u)?
        }
        CompareMode::Hybrid => StepReport::compare(&reference, &candidate)?,
    };
    eprintln!(
        "mse={} max_error={} runtime_ms={:.3}",
        report.mse,
        report.max_error,
        start.elapsed().as_secs_f64() * 1e3
    );
    let method = match a.mode {
        CompareMode::Net => "net",
        CompareMode::Hybrid => "hybrid",
    };
    let text = provenance(&a.problem, method) + &report_csv(&report, p.dim());
    emit(a.out.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseVector;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("hybrid-ode").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn parses_shared_and_trainer_flags() {
        let cli = parse(&[
            "train", "--problem", "decay", "--dt", "0.2", "--trainer", "sgd", "--lr", "0.05", "--epochs", "3",
            "--seed", "9", "--train-source", "analytic", "--out", "m.txt",
        ]);
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.trainer, Trainer::Sgd);
        assert_eq!(a.problem.seed, 9);
        assert_eq!(a.train_source, TrainSource::Analytic);
        assert_eq!(a.epochs, 3);
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["hybrid-ode", "solve", "--method", "rk4"]), EXIT_USAGE);
        assert_eq!(run(["hybrid-ode", "frobnicate"]), EXIT_USAGE);
        assert!(Cli::try_parse_from(["hybrid-ode", "solve", "--problem", "wave"]).is_err());
    }

    #[test]
    fn horizon_override_keeps_forcing_and_exact() {
        let cli = parse(&["solve", "--horizon", "2"]);
        let Command::Solve(a) = cli.command else { panic!() };
        let p = a.problem.build().unwrap();
        let q = linear_decay_forced();
        assert_eq!(p.horizon(), 2.0);
        assert_eq!(p.input(0.3), q.input(0.3));
        assert_eq!(p.exact(1.7).unwrap().unwrap(), q.exact(1.7).unwrap().unwrap());
        assert_eq!(p.max_stable_dt(), q.max_stable_dt());
    }

    #[test]
    fn decay_rejects_heat_flags() {
        let cli = parse(&["solve", "--dx", "0.2"]);
        let Command::Solve(a) = cli.command else { panic!() };
        assert!(a.problem.build().is_err());
    }

    #[test]
    fn csv_formats() {
        let traj = Trajectory::uniform(0.5, vec![DenseVector::new(vec![1.0, 0.1]).unwrap(); 2]).unwrap();
        assert_eq!(trajectory_csv(&traj), "t,y_1,y_2\n0,1,0.1\n0.5,1,0.1\n");
        let report = StepReport::compare(&traj, &traj).unwrap();
        let csv = report_csv(&report, 2);
        assert!(csv.starts_with("t,ref_1,ref_2,method_1,method_2,abs_error\n0,1,0.1,1,0.1,0\n"));
        assert!(csv.ends_with("# summary mse=0, max_error=0\n"));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Cfl { dt: 1.0, bound: 0.5 }).code, EXIT_NUMERICAL);
        assert_eq!(
            CliError::from(Error::Divergence {
                learning_rate: 1.0,
                mse: 1e7
            })
            .code,
            EXIT_NUMERICAL
        );
        assert_eq!(CliError::from(Error::Config("x".into())).code, EXIT_USAGE);
        assert_eq!(CliError::from(Error::Parse("x".into())).code, EXIT_IO);
    }
}
