//! One-step training data, the elite-copy evolution strategy, single-sample
//! SGD, and free-running evaluation of trained networks.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::neuralnet::FeedForwardNet;
use crate::random::{derive_seed, stream_rng};
use crate::solvers::{step_count, Trajectory};

/// Per-sample SGD aborts once the dataset MSE passes this value.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Numerical,
    Analytic,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Numerical => "numerical",
            DataSource::Analytic => "analytic",
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `y(t_{k-1}) ∥ u(t_{k-1})`; the network appends the constant 1 itself.
    pub input: DenseVector,
    pub target: DenseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    source: DataSource,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, source: DataSource) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (ni, nt) = (first.input.len(), first.target.len());
            if let Some(bad) = samples
                .iter()
                .find(|s| s.input.len() != ni || s.target.len() != nt)
            {
                return Err(Error::Dimension {
                    op: "Dataset::new",
                    left: (ni, nt),
                    right: (bad.input.len(), bad.target.len()),
                });
            }
        }
        Ok(Self { samples, source })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.input.len())
    }

    pub fn target_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.target.len())
    }
}

/// One sample per consecutive pair: `(y_{k-1} ∥ u(t_{k-1})) → y_k`.
pub fn make_dataset(traj: &Trajectory, inputs: &dyn Fn(f64) -> Vec<f64>, source: DataSource) -> Result<Dataset> {
    if traj.len() < 2 {
        return Err(Error::Config(format!(
            "dataset needs a trajectory with at least 2 points, got {}",
            traj.len()
        )));
    }
    let samples = traj
        .states()
        .windows(2)
        .zip(traj.times())
        .map(|(pair, &t)| Sample {
            input: pair[0].concat(&inputs(t)),
            target: pair[1].clone(),
        })
        .collect();
    Dataset::new(samples, source)
}

/// `(1/|ds|) Σ ‖net(x) − y‖²`.
pub fn mse(net: &FeedForwardNet, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for s in ds.samples() {
        total += net.forward(&s.input)?.dist_sq(&s.target)?;
    }
    Ok(total / ds.len() as f64)
}

fn check_shape(ds: &Dataset, layer_dims: &[usize]) -> Result<()> {
    let (ni, nt) = match (ds.input_dim(), ds.target_dim()) {
        (Some(i), Some(t)) => (i, t),
        _ => return Err(Error::EmptyDataset),
    };
    let (li, lo) = (layer_dims[0], *layer_dims.last().unwrap_or(&0));
    if ni != li || nt != lo {
        return Err(Error::Dimension {
            op: "network vs dataset",
            left: (li, lo),
            right: (ni, nt),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsConfig {
    pub population: usize,
    pub iterations: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: 250,
            iterations: 100,
            noise_scale: 0.05,
            seed: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 5 || self.iterations < 1 || !(self.noise_scale >= 0.0) {
            return Err(Error::Config(format!(
                "ES needs population >= 5, iterations >= 1, noise >= 0; got N={}, M={}, noise={}",
                self.population, self.iterations, self.noise_scale
            )));
        }
        Ok(())
    }

    /// Size of the fittest fifth, rounded up.
    pub fn elite_count(&self) -> usize {
        self.population.div_ceil(5)
    }
}

/// Population state of the elite-copy evolution strategy.
///
/// Each [`step`](Self::step) evaluates every individual, sorts by fitness
/// (ties by current position), keeps the first `E = ⌈N/5⌉` untouched and
/// overwrites individual `i ≥ E` with elite `i mod E` plus scaled Gaussian
/// noise on every weight.
#[derive(Debug, Clone)]
pub struct EvolutionStrategy<'a> {
    dataset: &'a Dataset,
    cfg: EsConfig,
    population: Vec<FeedForwardNet>,
    fitness: Vec<f64>,
    iteration: u64,
}

impl<'a> EvolutionStrategy<'a> {
    pub fn new(dataset: &'a Dataset, layer_dims: &[usize], cfg: EsConfig) -> Result<Self> {
        cfg.validate()?;
        check_shape(dataset, layer_dims)?;
        let population = (0..cfg.population)
            .map(|i| FeedForwardNet::init_weights(layer_dims, derive_seed(cfg.seed, &[0, i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dataset,
            fitness: vec![f64::INFINITY; cfg.population],
            cfg,
            population,
            iteration: 0,
        })
    }

    pub fn population(&self) -> &[FeedForwardNet] {
        &self.population
    }

    /// Returns the best fitness of this generation (after sorting).
    pub fn step(&mut self) -> Result<f64> {
        let ds = self.dataset;
        let fitness: Vec<f64> = self
            .population
            .par_iter()
            .map(|net| mse(net, ds))
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..fitness.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
        let mut sorted: Vec<FeedForwardNet> = order.iter().map(|&i| self.population[i].clone()).collect();
        self.fitness = order.iter().map(|&i| fitness[i]).collect();

        let elites = self.cfg.elite_count();
        let (head, tail) = sorted.split_at_mut(elites);
        let (seed, it, scale) = (self.cfg.seed, self.iteration, self.cfg.noise_scale);
        tail.par_iter_mut().enumerate().for_each(|(k, slot)| {
            let i = elites + k;
            let mut child = head[i % elites].clone();
            let mut rng = stream_rng(seed, &[1, it, i as u64]);
            for p in child.params_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p += scale * z;
            }
            *slot = child;
        });

        self.population = sorted;
        self.iteration += 1;
        Ok(self.fitness[0])
    }

    pub fn best(&self) -> (&FeedForwardNet, f64) {
        (&self.population[0], self.fitness[0])
    }
}

#[derive(Debug, Clone)]
pub struct EsResult {
    pub best: FeedForwardNet,
    pub best_mse: f64,
    /// Best fitness of every generation.
    pub history: Vec<f64>,
}

pub fn train_es(ds: &Dataset, layer_dims: &[usize], cfg: &EsConfig) -> Result<EsResult> {
    let mut es = EvolutionStrategy::new(ds, layer_dims, cfg.clone())?;
    let history = (0..cfg.iterations)
        .map(|_| es.step())
        .collect::<Result<Vec<_>>>()?;
    let (best, best_mse) = es.best();
    Ok(EsResult {
        best: best.clone(),
        best_mse,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdResult {
    pub net: FeedForwardNet,
    /// Full-dataset MSE after each epoch.
    pub history: Vec<f64>,
}

/// Plain per-sample gradient descent on the squared error, shuffled each epoch.
pub fn train_sgd(ds: &Dataset, net: FeedForwardNet, cfg: &SgdConfig) -> Result<SgdResult> {
    if !(cfg.learning_rate >= 0.0) || cfg.epochs < 1 {
        return Err(Error::Config(format!(
            "SGD needs learning rate >= 0 and epochs >= 1; got lr={}, epochs={}",
            cfg.learning_rate, cfg.epochs
        )));
    }
    check_shape(ds, net.layer_dims())?;
    let mut net = net;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, &[epoch as u64]);
        order.shuffle(&mut rng);
        for &i in &order {
            let s = &ds.samples()[i];
            let (_, grad) = net.backprop(&s.input, &s.target)?;
            net.apply_gradient(&grad, cfg.learning_rate)?;
        }
        let err = mse(&net, ds)?;
        if !(err <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                learning_rate: cfg.learning_rate,
                mse: err,
            });
        }
        history.push(err);
    }
    Ok(SgdResult { net, history })
}

/// Free-running prediction: `ŷ_k = net(ŷ_{k-1} ∥ u(t_{k-1}))`, `ŷ_0 = y0`.
pub fn rollout(
    net: &FeedForwardNet,
    y0: &DenseVector,
    inputs: &dyn Fn(f64) -> Vec<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if net.output_dim() != y0.len() {
        return Err(Error::Dimension {
            op: "rollout",
            left: (net.input_dim(), net.output_dim()),
            right: (y0.len(), y0.len()),
        });
    }
    let steps = step_count(horizon, dt)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = y0.clone();
    states.push(y.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        y = net.forward(&y.concat(&inputs(t)))?;
        states.push(y.clone());
    }
    Trajectory::uniform(dt, states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: f64,
    pub reference: DenseVector,
    pub method: DenseVector,
    /// Max-norm of `method − reference` at this time.
    pub abs_error: f64,
}

/// Pointwise comparison of a candidate trajectory with a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub rows: Vec<ReportRow>,
    /// `(1/K) Σ_{k=1..K} ‖ŷ_k − y_k‖²`.
    pub mse: f64,
    pub max_error: f64,
    /// Wall-clock time of the run; never written to output files.
    pub runtime_ms: f64,
}

impl StepReport {
    pub fn compare(reference: &Trajectory, candidate: &Trajectory) -> Result<Self> {
        if reference.len() != candidate.len() || reference.dim() != candidate.dim() {
            return Err(Error::Dimension {
                op: "StepReport::compare",
                left: (reference.len(), reference.dim()),
                right: (candidate.len(), candidate.dim()),
            });
        }
        let mut rows = Vec::with_capacity(reference.len());
        let mut sq_sum = 0.0;
        let mut max_error: f64 = 0.0;
        for (k, ((t, r), (tc, c))) in reference.iter().zip(candidate.iter()).enumerate() {
            if (t - tc).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::Config(format!(
                    "time grids differ at index {k}: {t} vs {tc}"
                )));
            }
            let abs_error = r.max_abs_diff(c)?;
            if k > 0 {
                sq_sum += r.dist_sq(c)?;
            }
            max_error = max_error.max(abs_error);
            rows.push(ReportRow {
                t,
                reference: r.clone(),
                method: c.clone(),
                abs_error,
            });
        }
        let steps = reference.len() - 1;
        let mse = if steps == 0 { 0.0 } else { sq_sum / steps as f64 };
        Ok(Self {
            rows,
            mse,
            max_error,
            runtime_ms: 0.0,
        })
    }
}

/// Rolls `net` out over the reference's grid from its first state and
/// compares the two.
pub fn validate(net: &FeedForwardNet, reference: &Trajectory, inputs: &dyn Fn(f64) -> Vec<f64>) -> Result<StepReport> {
    let start = std::time::Instant::now();
    let dt = reference.dt().unwrap_or(reference.horizon());
    let candidate = if reference.len() == 1 {
        Trajectory::new(vec![0.0], vec![reference.states()[0].clone()])?
    } else {
        rollout(net, &reference.states()[0], inputs, dt, reference.horizon())?
    };
    let mut report = StepReport::compare(reference, &candidate)?;
    report.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainer {
    Es,
    Sgd,
}

impl FromStr for Trainer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "es" => Ok(Trainer::Es),
            "sgd" => Ok(Trainer::Sgd),
            other => Err(Error::Config(format!("unknown trainer '{other}'"))),
        }
    }
}
