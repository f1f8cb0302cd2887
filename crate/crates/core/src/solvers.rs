//! Fixed-step integrators: explicit Euler, exponential linear/nonlinear
//! (Lie) splitting, Strang splitting and Euler–Maruyama.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{expm, matvec, DenseMatrix, DenseVector};
use crate::problems::{IvpProblem, SdeProblem};
use crate::random::{derive_seed, stream_rng};

/// Tolerance for the propagators `expm(A·dt)` built by [`integrate`].
pub const PROPAGATOR_TOL: f64 = 1e-14;

/// Time grid plus one state per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DenseVector>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DenseVector>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Config(format!(
                "trajectory needs equally many (>= 1) times and states, got {} and {}",
                times.len(),
                states.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::Config(format!("trajectory must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("trajectory times must be strictly increasing".into()));
        }
        let m = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != m) {
            return Err(Error::Dimension {
                op: "Trajectory::new",
                left: (m, 1),
                right: (bad.len(), 1),
            });
        }
        Ok(Self { times, states })
    }

    /// Uniform grid `t_k = k·dt`, `k = 0..states.len()`.
    pub fn uniform(dt: f64, states: Vec<DenseVector>) -> Result<Self> {
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        Self::new(times, states)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DenseVector] {
        &self.states
    }

    pub fn last(&self) -> &DenseVector {
        self.states.last().expect("non-empty")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Spacing of the first interval; `None` for single-point trajectories.
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() > 1).then(|| self.times[1] - self.times[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DenseVector)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    ExpSplit,
    Strang,
    EulerMaruyama,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::ExpSplit => "exp-split",
            Method::Strang => "strang",
            Method::EulerMaruyama => "em",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "exp-split" | "exp_split" => Ok(Method::ExpSplit),
            "strang" => Ok(Method::Strang),
            "em" | "euler-maruyama" | "euler_maruyama" => Ok(Method::EulerMaruyama),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub method: Method,
    pub cfl_check: bool,
    /// Only read by Euler–Maruyama.
    pub seed: u64,
}

impl StepConfig {
    pub fn new(method: Method, dt: f64) -> Self {
        Self {
            dt,
            method,
            cfl_check: true,
            seed: 0,
        }
    }

    pub fn without_cfl_check(mut self) -> Self {
        self.cfl_check = false;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn axpy_in_place(y: &mut DenseVector, a: f64, x: &DenseVector) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::Dimension {
            op: "axpy",
            left: (y.len(), 1),
            right: (x.len(), 1),
        });
    }
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
    Ok(())
}

/// `y + dt·(A y + F(y, u(t), t))`.
pub fn euler_step(p: &IvpProblem, y: &DenseVector, t: f64, dt: f64) -> Result<DenseVector> {
    let mut next = y.clone();
    axpy_in_place(&mut next, dt, &p.rhs(y, t)?)?;
    Ok(next)
}

/// `e^{A dt}·y + dt·e^{A dt}·F(y, u(t), t)` with `e^{A dt}` supplied.
pub fn exp_split_step(
    p: &IvpProblem,
    y: &DenseVector,
    t: f64,
    dt: f64,
    propagator: &DenseMatrix,
) -> Result<DenseVector> {
    let mut z = y.clone();
    if p.has_nonlinear() {
        let f = p.nonlinear(y, &p.input(t), t)?;
        axpy_in_place(&mut z, dt, &f)?;
    }
    matvec(propagator, &z)
}

/// Half linear step, explicit nonlinear step at the midpoint, half linear step.
///
/// `half_propagator` must be `e^{A dt/2}`.
pub fn strang_step(
    p: &IvpProblem,
    y: &DenseVector,
    t: f64,
    dt: f64,
    half_propagator: &DenseMatrix,
) -> Result<DenseVector> {
    let mut z = matvec(half_propagator, y)?;
    if p.has_nonlinear() {
        let mid = t + 0.5 * dt;
        let f = p.nonlinear(&z, &p.input(mid), mid)?;
        axpy_in_place(&mut z, dt, &f)?;
    }
    matvec(half_propagator, &z)
}

/// `y + dt·A y + G(y, u(t), t) ⊙ (√dt·ξ)`.
pub fn euler_maruyama_step(
    p: &SdeProblem,
    y: &DenseVector,
    t: f64,
    dt: f64,
    xi: &DenseVector,
) -> Result<DenseVector> {
    let base = p.base();
    if xi.len() != base.dim() {
        return Err(Error::Dimension {
            op: "euler_maruyama_step",
            left: (base.dim(), 1),
            right: (xi.len(), 1),
        });
    }
    let mut next = y.clone();
    axpy_in_place(&mut next, dt, &matvec(base.linear(), y)?)?;
    let g = p.diffusion(y, &base.input(t), t)?;
    axpy_in_place(&mut next, dt.sqrt(), &g.hadamard(xi)?)?;
    Ok(next)
}

/// A deterministic or stochastic problem handed to [`integrate`].
#[derive(Debug, Clone, Copy)]
pub enum ProblemRef<'a> {
    Ode(&'a IvpProblem),
    Sde(&'a SdeProblem),
}

impl<'a> ProblemRef<'a> {
    fn base(&self) -> &'a IvpProblem {
        match self {
            ProblemRef::Ode(p) => p,
            ProblemRef::Sde(p) => p.base(),
        }
    }
}

impl<'a> From<&'a IvpProblem> for ProblemRef<'a> {
    fn from(p: &'a IvpProblem) -> Self {
        ProblemRef::Ode(p)
    }
}

impl<'a> From<&'a SdeProblem> for ProblemRef<'a> {
    fn from(p: &'a SdeProblem) -> Self {
        ProblemRef::Sde(p)
    }
}

/// Number of steps `K = round(T/dt)`; `dt` must divide `T` to 1e-9 relative.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let k = (horizon / dt).round();
    if k < 1.0 || (k * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Config(format!(
            "dt = {dt} does not divide the horizon T = {horizon}"
        )));
    }
    Ok(k as usize)
}

/// Fails when `dt` exceeds the problem's explicit stability bound.
pub fn check_cfl(p: &IvpProblem, dt: f64) -> Result<()> {
    if let Some(bound) = p.max_stable_dt() {
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
    }
    Ok(())
}

/// Runs `round(T/dt)` steps of `cfg.method` from `y0`.
pub fn integrate<'a>(problem: impl Into<ProblemRef<'a>>, cfg: &StepConfig) -> Result<Trajectory> {
    let problem = problem.into();
    let base = problem.base();
    if cfg.cfl_check {
        check_cfl(base, cfg.dt)?;
    }
    let steps = step_count(base.horizon(), cfg.dt)?;
    let dt = cfg.dt;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(base.y0().clone());
    let mut y = base.y0().clone();

    match cfg.method {
        Method::Euler => {
            for k in 0..steps {
                y = euler_step(base, &y, k as f64 * dt, dt)?;
                states.push(y.clone());
            }
        }
        Method::ExpSplit => {
            let prop = expm(&base.linear().scaled(dt), PROPAGATOR_TOL)?;
            for k in 0..steps {
                y = exp_split_step(base, &y, k as f64 * dt, dt, &prop)?;
                states.push(y.clone());
            }
        }
        Method::Strang => {
            let half = expm(&base.linear().scaled(0.5 * dt), PROPAGATOR_TOL)?;
            for k in 0..steps {
                y = strang_step(base, &y, k as f64 * dt, dt, &half)?;
                states.push(y.clone());
            }
        }
        Method::EulerMaruyama => {
            let ProblemRef::Sde(sde) = problem else {
                return Err(Error::Config(
                    "euler-maruyama needs a stochastic problem (diffusion term)".into(),
                ));
            };
            let mut rng = stream_rng(cfg.seed, &[]);
            let m = base.dim();
            for k in 0..steps {
                let xi: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                y = euler_maruyama_step(sde, &y, k as f64 * dt, dt, &DenseVector::new(xi)?)?;
                states.push(y.clone());
            }
        }
    }
    Trajectory::uniform(dt, states)
}

/// End states of `paths` independent Euler–Maruyama runs.
///
/// Path `i` is seeded from `(cfg.seed, i)`, so the result is independent of
/// how rayon schedules the paths.
pub fn ensemble_endpoints(p: &SdeProblem, cfg: &StepConfig, paths: usize) -> Result<Vec<DenseVector>> {
    let cfg = StepConfig {
        method: Method::EulerMaruyama,
        ..cfg.clone()
    };
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let path_cfg = cfg.clone().with_seed(derive_seed(cfg.seed, &[i as u64]));
            integrate(p, &path_cfg).map(|traj| traj.last().clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{analytic_decay_forced, analytic_linear_system, heat_mol, linear_decay_forced, HeatConfig};

    fn zero_problem(m: usize, horizon: f64) -> IvpProblem {
        IvpProblem::new("zero", DenseMatrix::zeros(m, m), DenseVector::filled(m, 2.5), horizon).unwrap()
    }

    #[test]
    fn euler_step_examples() {
        let p = linear_decay_forced();
        let y = euler_step(&p, &1.0.into(), 0.0, 0.01).unwrap();
        assert!((y[0] - 0.999).abs() < 1e-15);

        let z = zero_problem(3, 1.0);
        let y0 = DenseVector::new(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(euler_step(&z, &y0, 0.3, 0.1).unwrap(), y0);
    }

    #[test]
    fn euler_step_on_uniform_heat_state_only_moves_boundary_rows() {
        let p = heat_mol(&HeatConfig::default()).unwrap();
        let c = DenseVector::filled(p.dim(), 0.7);
        let y = euler_step(&p, &c, 0.0, 0.01).unwrap();
        let m = p.dim();
        assert!((y[0] - (0.7 + 0.01 * -10.0 * 0.7)).abs() < 1e-14);
        assert!((y[m - 1] - y[0]).abs() < 1e-15);
        for i in 1..m - 1 {
            assert!((y[i] - 0.7).abs() < 1e-14, "row {i}");
        }
    }

    #[test]
    fn exp_split_step_examples() {
        let p = linear_decay_forced();
        let dt = 0.1;
        let prop = expm(&p.linear().scaled(dt), PROPAGATOR_TOL).unwrap();
        let y = exp_split_step(&p, &1.0.into(), 0.0, dt, &prop).unwrap();
        assert!((y[0] - (-0.01f64).exp()).abs() < 1e-14);
        assert!((y[0] - 0.990_049_834).abs() < 1e-9);

        let a = DenseMatrix::from_rows(&[&[-1.0, 0.5], &[0.2, -0.3]]);
        let lin = IvpProblem::new("lin", a.clone(), DenseVector::new(vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let prop = expm(&a.scaled(dt), PROPAGATOR_TOL).unwrap();
        let y = exp_split_step(&lin, lin.y0(), 0.0, dt, &prop).unwrap();
        assert_eq!(y, matvec(&prop, lin.y0()).unwrap());

        let c = zero_problem(2, 1.0).with_nonlinear(|_, _, _| DenseVector::new(vec![1.0, -3.0]).unwrap());
        let prop = DenseMatrix::identity(2);
        let y = exp_split_step(&c, c.y0(), 0.0, 0.2, &prop).unwrap();
        assert!(y.max_abs_diff(&DenseVector::new(vec![2.7, 1.9]).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn strang_step_examples() {
        let p = linear_decay_forced();
        let dt = 0.1;
        let half = expm(&p.linear().scaled(dt / 2.0), PROPAGATOR_TOL).unwrap();
        let y = strang_step(&p, &1.0.into(), 0.0, dt, &half).unwrap();
        let e = (-0.005f64).exp();
        let expected = e * (e + 0.1 * (0.1 * std::f64::consts::PI).sin());
        assert!((y[0] - expected).abs() < 1e-14);
        assert!((y[0] - 1.020_797_410).abs() < 1e-9);

        let a = DenseMatrix::from_rows(&[&[-1.0, 0.5], &[0.2, -0.3]]);
        let lin = IvpProblem::new("lin", a.clone(), DenseVector::new(vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let half = expm(&a.scaled(dt / 2.0), PROPAGATOR_TOL).unwrap();
        let full = expm(&a.scaled(dt), PROPAGATOR_TOL).unwrap();
        let y = strang_step(&lin, lin.y0(), 0.0, dt, &half).unwrap();
        assert!(y.max_abs_diff(&matvec(&full, lin.y0()).unwrap()).unwrap() < 1e-14);

        let c = zero_problem(1, 1.0).with_nonlinear(|y, _, t| (y[0] * t).into());
        let y = strang_step(&c, c.y0(), 0.2, 0.1, &DenseMatrix::identity(1)).unwrap();
        assert!((y[0] - (2.5 + 0.1 * 2.5 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn euler_maruyama_step_examples() {
        let sde = SdeProblem::scalar_linear(-0.1, 1.0, 1.0, 1.0).unwrap();
        let y = euler_maruyama_step(&sde, &1.0.into(), 0.0, 0.01, &1.0.into()).unwrap();
        assert!((y[0] - 1.099).abs() < 1e-14);

        let drift_only = euler_maruyama_step(&sde, &1.0.into(), 0.0, 0.01, &0.0.into()).unwrap();
        assert!((drift_only[0] - 0.999).abs() < 1e-15);

        let quiet = SdeProblem::scalar_linear(-0.1, 0.0, 1.0, 1.0).unwrap();
        let a = euler_maruyama_step(&quiet, &1.0.into(), 0.0, 0.01, &3.0.into()).unwrap();
        let b = euler_step(quiet.base(), &1.0.into(), 0.0, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn integrate_decay_euler_grid_and_endpoint() {
        let p = linear_decay_forced();
        let traj = integrate(&p, &StepConfig::new(Method::Euler, 0.05)).unwrap();
        assert_eq!(traj.len(), 21);
        assert_eq!(traj.states()[0][0], 1.0);
        assert!((traj.times()[20] - 1.0).abs() < 1e-15);
        // first-order global error; the constant is below 1 for this problem
        let err = (traj.last()[0] - analytic_decay_forced(1.0)).abs();
        assert!(err < 0.05 && err > 1e-4, "err={err}");
    }

    #[test]
    fn integrate_rejects_heat_beyond_cfl() {
        let p = heat_mol(&HeatConfig::default()).unwrap();
        let err = integrate(&p, &StepConfig::new(Method::Euler, 0.06)).unwrap_err();
        assert!(matches!(err, Error::Cfl { bound, dt } if (bound - 0.05).abs() < 1e-12 && dt == 0.06));
        assert!(err.to_string().contains("CFL"));
        assert!(integrate(&p, &StepConfig::new(Method::Euler, 0.05)).is_ok());
    }

    #[test]
    fn integrate_zero_field_single_step() {
        let p = zero_problem(2, 0.5);
        let traj = integrate(&p, &StepConfig::new(Method::Euler, 0.5)).unwrap();
        assert_eq!(traj.states(), &[p.y0().clone(), p.y0().clone()]);
    }

    #[test]
    fn integrate_rejects_non_dividing_dt() {
        let p = linear_decay_forced();
        assert!(matches!(
            integrate(&p, &StepConfig::new(Method::Euler, 0.3)),
            Err(Error::Config(_))
        ));
        assert!(integrate(&p, &StepConfig::new(Method::Euler, 0.0)).is_err());
    }

    #[test]
    fn em_requires_a_stochastic_problem() {
        let p = linear_decay_forced();
        assert!(integrate(&p, &StepConfig::new(Method::EulerMaruyama, 0.1)).is_err());
    }

    #[test]
    fn em_is_seed_deterministic() {
        let sde = SdeProblem::scalar_linear(-0.1, 0.1, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(Method::EulerMaruyama, 0.01).with_seed(3);
        let a = integrate(&sde, &cfg).unwrap();
        let b = integrate(&sde, &cfg).unwrap();
        assert_eq!(a, b);
        let c = integrate(&sde, &cfg.clone().with_seed(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exp_split_without_nonlinearity_is_exact_flow() {
        let p = heat_mol(&HeatConfig::default()).unwrap();
        let traj = integrate(&p, &StepConfig::new(Method::ExpSplit, 0.05)).unwrap();
        for (k, (t, y)) in traj.iter().enumerate().skip(1) {
            let prev = &traj.states()[k - 1];
            let one_step = analytic_linear_system(p.linear(), prev, 0.05).unwrap();
            assert!(y.max_abs_diff(&one_step).unwrap() < 1e-10, "t={t}");
        }
    }

    fn endpoint_ratios(p: &IvpProblem, method: Method, exact: f64) -> Vec<f64> {
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| (integrate(p, &StepConfig::new(method, dt)).unwrap().last()[0] - exact).abs())
            .collect();
        errs.windows(2).map(|w| w[0] / w[1]).collect()
    }

    #[test]
    fn convergence_orders_with_cosine_forcing() {
        // y' = λy + cos(ωt): closed form (1 + λ/D)e^{λt} + (ω sin ωt − λ cos ωt)/D, D = λ² + ω²
        let (lambda, omega) = (-0.1, 2.0 * std::f64::consts::PI);
        let d = lambda * lambda + omega * omega;
        let exact = (1.0 + lambda / d) * lambda.exp() + (omega * omega.sin() - lambda * omega.cos()) / d;
        let p = IvpProblem::new("cos", DenseMatrix::diag(&[lambda]), 1.0.into(), 1.0)
            .unwrap()
            .with_input(1, move |t| vec![(omega * t).cos()])
            .with_nonlinear(|_, u, _| u[0].into());
        for m in [Method::Euler, Method::ExpSplit] {
            for r in endpoint_ratios(&p, m, exact) {
                assert!((1.8..=2.2).contains(&r), "{m}: {r}");
            }
        }
        for r in endpoint_ratios(&p, Method::Strang, exact) {
            assert!((3.5..=4.5).contains(&r), "strang: {r}");
        }
    }

    #[test]
    fn exp_split_is_superconvergent_on_sine_forcing() {
        let p = linear_decay_forced();
        for r in endpoint_ratios(&p, Method::ExpSplit, analytic_decay_forced(1.0)) {
            assert!((3.5..=4.5).contains(&r), "{r}");
        }
    }

    #[test]
    fn trajectory_invariants() {
        let s = DenseVector::from(1.0);
        assert!(Trajectory::new(vec![], vec![]).is_err());
        assert!(Trajectory::new(vec![0.1], vec![s.clone()]).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![s.clone(), s.clone()]).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![s.clone(), DenseVector::zeros(2)]).is_err());
        assert_eq!(Trajectory::new(vec![0.0], vec![s]).unwrap().dt(), None);
    }

    #[test]
    fn method_parsing() {
        for m in [Method::Euler, Method::ExpSplit, Method::Strang, Method::EulerMaruyama] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("rk4".parse::<Method>().is_err());
    }
}
