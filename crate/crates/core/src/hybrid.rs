//! Exponential splitting with a learned nonlinear slot.
//!
//! The linear part is advanced exactly with `e^{A dt}`; a network supplies the
//! increment that the classical scheme would take from `F(y, u)`.

use crate::error::{Error, Result};
use crate::linalg::{expm, matvec, solve, DenseMatrix, DenseVector};
use crate::neuralnet::FeedForwardNet;
use crate::problems::IvpProblem;
use crate::solvers::{step_count, Trajectory, PROPAGATOR_TOL};
use crate::training::{DataSource, Dataset, Sample};

#[derive(Debug, Clone)]
pub struct HybridStepper {
    propagator: DenseMatrix,
    net: FeedForwardNet,
    dt: f64,
}

impl HybridStepper {
    pub fn new(propagator: DenseMatrix, net: FeedForwardNet, dt: f64) -> Result<Self> {
        if !propagator.is_square() {
            return Err(Error::NotSquare {
                rows: propagator.rows(),
                cols: propagator.cols(),
            });
        }
        if net.output_dim() != propagator.rows() || net.input_dim() < propagator.rows() {
            return Err(Error::Dimension {
                op: "HybridStepper::new",
                left: propagator.shape(),
                right: (net.input_dim(), net.output_dim()),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { propagator, net, dt })
    }

    /// Builds `e^{A dt}` from the problem's linear part.
    pub fn for_problem(p: &IvpProblem, net: FeedForwardNet, dt: f64) -> Result<Self> {
        if net.input_dim() != p.dim() + p.input_dim() {
            return Err(Error::Dimension {
                op: "HybridStepper::for_problem",
                left: (p.dim() + p.input_dim(), p.dim()),
                right: (net.input_dim(), net.output_dim()),
            });
        }
        Self::new(expm(&p.linear().scaled(dt), PROPAGATOR_TOL)?, net, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn propagator(&self) -> &DenseMatrix {
        &self.propagator
    }

    pub fn net(&self) -> &FeedForwardNet {
        &self.net
    }

    /// `e^{A dt}·(y + dt·net(y ∥ u))`.
    pub fn step(&self, y: &DenseVector, u: &[f64]) -> Result<DenseVector> {
        let increment = self.net.forward(&y.concat(u))?;
        let mut z = y.clone();
        for (zi, fi) in z.as_mut_slice().iter_mut().zip(increment.iter()) {
            *zi += self.dt * fi;
        }
        matvec(&self.propagator, &z)
    }

    /// Iterates [`step`](Self::step) `round(T/dt)` times from `y0`.
    pub fn rollout(&self, y0: &DenseVector, inputs: &dyn Fn(f64) -> Vec<f64>, horizon: f64) -> Result<Trajectory> {
        let steps = step_count(horizon, self.dt)?;
        let mut states = Vec::with_capacity(steps + 1);
        let mut y = y0.clone();
        states.push(y.clone());
        for k in 0..steps {
            y = self.step(&y, &inputs(k as f64 * self.dt))?;
            states.push(y.clone());
        }
        Trajectory::uniform(self.dt, states)
    }
}

pub fn hybrid_step(h: &HybridStepper, y: &DenseVector, _t: f64, u: &[f64]) -> Result<DenseVector> {
    h.step(y, u)
}

pub fn hybrid_rollout(
    h: &HybridStepper,
    y0: &DenseVector,
    inputs: &dyn Fn(f64) -> Vec<f64>,
    horizon: f64,
) -> Result<Trajectory> {
    h.rollout(y0, inputs, horizon)
}

/// Targets for the network in the nonlinear slot.
///
/// For each pair `(y_{k-1}, y_k)` the target is `(e^{-A dt} y_k − y_{k-1}) / dt`,
/// obtained by solving `e^{A dt} z = y_k`.
pub fn make_residual_dataset(p: &IvpProblem, reference: &Trajectory, source: DataSource) -> Result<Dataset> {
    let dt = reference.dt().ok_or_else(|| {
        Error::Config("residual dataset needs a trajectory with at least 2 points".into())
    })?;
    if reference.dim() != p.dim() {
        return Err(Error::Dimension {
            op: "make_residual_dataset",
            left: (p.dim(), 1),
            right: (reference.dim(), 1),
        });
    }
    let propagator = expm(&p.linear().scaled(dt), PROPAGATOR_TOL)?;
    let mut samples = Vec::with_capacity(reference.len() - 1);
    for (k, pair) in reference.states().windows(2).enumerate() {
        let t = reference.times()[k];
        let z = solve(&propagator, &pair[1])?;
        let target: Vec<f64> = z
            .iter()
            .zip(pair[0].iter())
            .map(|(zi, yi)| (zi - yi) / dt)
            .collect();
        samples.push(Sample {
            input: pair[0].concat(&p.input(t)),
            target: DenseVector::new(target)?,
        });
    }
    Dataset::new(samples, source)
}
