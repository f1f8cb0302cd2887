//! Initial value problems: `y' = A y + F(y, u(t), t)`, `y(0) = y0` on `[0, T]`.
//!
//! Ships the forced scalar decay and the method-of-lines heat equation, plus
//! their closed-form or matrix-exponential references.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{expm, matvec, DenseMatrix, DenseVector};

/// `F(y, u, t)`.
pub type NonlinearFn = Arc<dyn Fn(&DenseVector, &[f64], f64) -> DenseVector + Send + Sync>;
/// `u(t)`; may return an empty vector when the problem has no external input.
pub type InputFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
/// Exact (or reference-quality) solution `y(t)`.
pub type ExactFn = Arc<dyn Fn(f64) -> Result<DenseVector> + Send + Sync>;

/// Decay rate of the forced scalar example.
pub const DECAY_LAMBDA: f64 = -0.1;
pub const DECAY_Y0: f64 = 1.0;
pub const DECAY_HORIZON: f64 = 1.0;

/// Tolerance used for every `expm` call that produces a reference solution.
pub const REFERENCE_EXPM_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct IvpProblem {
    name: String,
    linear: DenseMatrix,
    nonlinear: Option<NonlinearFn>,
    input: Option<InputFn>,
    input_dim: usize,
    y0: DenseVector,
    horizon: f64,
    max_stable_dt: Option<f64>,
    exact: Option<ExactFn>,
}

impl fmt::Debug for IvpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("input_dim", &self.input_dim)
            .field("horizon", &self.horizon)
            .field("max_stable_dt", &self.max_stable_dt)
            .finish_non_exhaustive()
    }
}

impl IvpProblem {
    /// A purely linear problem `y' = A y`; add the other parts with the `with_*` builders.
    pub fn new(name: impl Into<String>, linear: DenseMatrix, y0: DenseVector, horizon: f64) -> Result<Self> {
        if !linear.is_square() {
            return Err(Error::NotSquare {
                rows: linear.rows(),
                cols: linear.cols(),
            });
        }
        if linear.rows() != y0.len() {
            return Err(Error::Dimension {
                op: "IvpProblem::new",
                left: linear.shape(),
                right: (y0.len(), 1),
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            linear,
            nonlinear: None,
            input: None,
            input_dim: 0,
            y0,
            horizon,
            max_stable_dt: None,
            exact: None,
        })
    }

    pub fn with_nonlinear(
        mut self,
        f: impl Fn(&DenseVector, &[f64], f64) -> DenseVector + Send + Sync + 'static,
    ) -> Self {
        self.nonlinear = Some(Arc::new(f));
        self
    }

    pub fn with_input(mut self, dim: usize, u: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.input_dim = dim;
        self.input = Some(Arc::new(u));
        self
    }

    pub fn with_stability_bound(mut self, max_dt: f64) -> Self {
        self.max_stable_dt = Some(max_dt);
        self
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> Result<DenseVector> + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.linear.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn linear(&self) -> &DenseMatrix {
        &self.linear
    }

    pub fn y0(&self) -> &DenseVector {
        &self.y0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Largest explicit-Euler step considered stable, when known.
    pub fn max_stable_dt(&self) -> Option<f64> {
        self.max_stable_dt
    }

    pub fn has_nonlinear(&self) -> bool {
        self.nonlinear.is_some()
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn input(&self, t: f64) -> Vec<f64> {
        match &self.input {
            Some(u) => u(t),
            None => Vec::new(),
        }
    }

    /// Cloneable handle on `u(t)`.
    pub fn input_fn(&self) -> InputFn {
        match &self.input {
            Some(u) => Arc::clone(u),
            None => Arc::new(|_| Vec::new()),
        }
    }

    /// `F(y, u, t)`; zero when the problem has no nonlinear part.
    pub fn nonlinear(&self, y: &DenseVector, u: &[f64], t: f64) -> Result<DenseVector> {
        match &self.nonlinear {
            None => Ok(DenseVector::zeros(self.dim())),
            Some(f) => {
                let out = f(y, u, t);
                if out.len() != self.dim() {
                    return Err(Error::Dimension {
                        op: "nonlinear",
                        left: (out.len(), 1),
                        right: (self.dim(), 1),
                    });
                }
                Ok(out)
            }
        }
    }

    /// `A y + F(y, u(t), t)`.
    pub fn rhs(&self, y: &DenseVector, t: f64) -> Result<DenseVector> {
        let u = self.input(t);
        let mut out = matvec(&self.linear, y)?;
        if self.nonlinear.is_some() {
            let f = self.nonlinear(y, &u, t)?;
            for (o, fi) in out.as_mut_slice().iter_mut().zip(f.iter()) {
                *o += fi;
            }
        }
        Ok(out)
    }

    /// Reference solution at `t`, if the problem carries one.
    pub fn exact(&self, t: f64) -> Option<Result<DenseVector>> {
        self.exact.as_ref().map(|e| e(t))
    }
}

/// Additive-noise form: `dy = A y dt + G(y, u, t) ⊙ dW`.
#[derive(Clone)]
pub struct SdeProblem {
    base: IvpProblem,
    diffusion: NonlinearFn,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem").field("base", &self.base).finish_non_exhaustive()
    }
}

impl SdeProblem {
    pub fn new(
        base: IvpProblem,
        diffusion: impl Fn(&DenseVector, &[f64], f64) -> DenseVector + Send + Sync + 'static,
    ) -> Self {
        Self {
            base,
            diffusion: Arc::new(diffusion),
        }
    }

    /// Constant diffusion coefficient `sigma` on every component.
    pub fn additive(base: IvpProblem, sigma: f64) -> Self {
        let m = base.dim();
        Self::new(base, move |_, _, _| DenseVector::filled(m, sigma))
    }

    /// Scalar `dy = λ y dt + σ dW`, `y(0) = y0`.
    pub fn scalar_linear(lambda: f64, sigma: f64, y0: f64, horizon: f64) -> Result<Self> {
        let base = IvpProblem::new("scalar-sde", DenseMatrix::diag(&[lambda]), y0.into(), horizon)?
            .with_stability_bound(1.0 / lambda.abs());
        Ok(Self::additive(base, sigma))
    }

    pub fn base(&self) -> &IvpProblem {
        &self.base
    }

    pub fn diffusion(&self, y: &DenseVector, u: &[f64], t: f64) -> Result<DenseVector> {
        let g = (self.diffusion)(y, u, t);
        if g.len() != self.base.dim() {
            return Err(Error::Dimension {
                op: "diffusion",
                left: (g.len(), 1),
                right: (self.base.dim(), 1),
            });
        }
        Ok(g)
    }
}

/// `y' = λ y + sin(2πt)`, `y(0) = 1`, `T = 1`, with λ = −0.1.
///
/// The forcing is carried in the nonlinear slot: `F(y, u, t) = u`.
pub fn linear_decay_forced() -> IvpProblem {
    IvpProblem::new(
        "decay",
        DenseMatrix::diag(&[DECAY_LAMBDA]),
        DECAY_Y0.into(),
        DECAY_HORIZON,
    )
    .expect("static problem is well formed")
    .with_input(1, |t| vec![(2.0 * PI * t).sin()])
    .with_nonlinear(|_, u, _| u[0].into())
    .with_stability_bound(1.0 / DECAY_LAMBDA.abs())
    .with_exact(|t| Ok(analytic_decay_forced(t).into()))
}

/// `exp(λt)·y0`.
pub fn analytic_decay(lambda: f64, y0: f64, t: f64) -> f64 {
    (lambda * t).exp() * y0
}

/// Closed-form solution of the forced decay problem (variation of constants).
pub fn analytic_decay_forced(t: f64) -> f64 {
    let lambda = DECAY_LAMBDA;
    let omega = 2.0 * PI;
    let decay = (lambda * t).exp();
    let forced = (omega * decay - omega * (omega * t).cos() - lambda * (omega * t).sin())
        / (lambda * lambda + omega * omega);
    decay * DECAY_Y0 + forced
}

/// `expm(A t) · y0`.
pub fn analytic_linear_system(a: &DenseMatrix, y0: &DenseVector, t: f64) -> Result<DenseVector> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if a.cols() != y0.len() {
        return Err(Error::Dimension {
            op: "analytic_linear_system",
            left: a.shape(),
            right: (y0.len(), 1),
        });
    }
    matvec(&expm(&a.scaled(t), REFERENCE_EXPM_TOL)?, y0)
}

/// 1-D heat equation `y_t = D y_xx` with homogeneous Dirichlet ends.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatConfig {
    pub diffusivity: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub dx: f64,
    pub horizon: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            diffusivity: 0.1,
            x_lo: 0.0,
            x_hi: 10.0,
            dx: 0.1,
            horizon: 1.0,
        }
    }
}

/// Support of the indicator initial condition.
pub const HEAT_PULSE: (f64, f64) = (4.5, 5.5);

impl HeatConfig {
    fn validate(&self) -> Result<usize> {
        if !(self.dx > 0.0) || !(self.x_hi > self.x_lo) || !(self.diffusivity > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "heat config needs dx > 0, x_hi > x_lo, D > 0, T > 0; got dx={}, domain=[{}, {}], D={}, T={}",
                self.dx, self.x_lo, self.x_hi, self.diffusivity, self.horizon
            )));
        }
        let cells = (self.x_hi - self.x_lo) / self.dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 3.0 {
            return Err(Error::Config(format!(
                "dx={} does not split the domain [{}, {}] into an integer number (>= 3) of cells",
                self.dx, self.x_lo, self.x_hi
            )));
        }
        Ok(rounded as usize)
    }

    /// Number of interior unknowns.
    pub fn interior_points(&self) -> Result<usize> {
        Ok(self.validate()? - 1)
    }

    /// Interior node coordinates `x_lo + i·dx`, `i = 1..cells-1`.
    pub fn nodes(&self) -> Result<Vec<f64>> {
        let cells = self.validate()?;
        Ok((1..cells).map(|i| self.x_lo + i as f64 * self.dx).collect())
    }

    /// `dx² / (2D)`.
    pub fn cfl_bound(&self) -> f64 {
        self.dx * self.dx / (2.0 * self.diffusivity)
    }
}

/// Method-of-lines semi-discretization: `A = D/dx²·tridiag(1, −2, 1)`, `F ≡ 0`.
pub fn heat_mol(cfg: &HeatConfig) -> Result<IvpProblem> {
    let nodes = cfg.nodes()?;
    let m = nodes.len();
    let coef = cfg.diffusivity / (cfg.dx * cfg.dx);
    let mut a = DenseMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = -2.0 * coef;
        if i > 0 {
            a[(i, i - 1)] = coef;
        }
        if i + 1 < m {
            a[(i, i + 1)] = coef;
        }
    }
    let eps = 1e-9 * cfg.dx;
    let y0: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            if x >= HEAT_PULSE.0 - eps && x <= HEAT_PULSE.1 + eps {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let y0 = DenseVector::new(y0)?;
    let (a_ref, y0_ref) = (a.clone(), y0.clone());
    Ok(IvpProblem::new("heat", a, y0, cfg.horizon)?
        .with_stability_bound(cfg.cfl_bound())
        .with_exact(move |t| analytic_linear_system(&a_ref, &y0_ref, t)))
}
