//! Fully connected feedforward network with bias-augmented layer inputs.
//!
//! Layer `l` maps `h_l ∈ ℝ^{d_l}` to `h_{l+1} = act_l(W_l · (h_l, 1))`, where
//! `W_l` is `d_{l+1} × (d_l + 1)` and its last column is the bias. Hidden
//! layers use the logistic sigmoid, the output layer is linear.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::random::stream_rng;

/// Width used by the reference experiments.
pub const DEFAULT_HIDDEN_WIDTH: usize = 10;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation value `a = act(x)`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layer_dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Per-layer pre-activations and activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: DenseVector,
    pub pre: Vec<DenseVector>,
    pub post: Vec<DenseVector>,
}

impl ForwardCache {
    pub fn layers(&self) -> usize {
        self.post.len()
    }

    pub fn output(&self) -> &DenseVector {
        self.post.last().expect("at least one layer")
    }
}

/// `∂loss/∂W_l` for every layer, shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<DenseMatrix>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|m| m.entries().iter())
            .fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer_dims needs >= 2 positive entries, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl FeedForwardNet {
    pub fn new(layer_dims: Vec<usize>, weights: Vec<DenseMatrix>) -> Result<Self> {
        validate_dims(&layer_dims)?;
        if weights.len() != layer_dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} layer dims need {} weight matrices, got {}",
                layer_dims.len(),
                layer_dims.len() - 1,
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            let expected = (layer_dims[l + 1], layer_dims[l] + 1);
            if w.shape() != expected {
                return Err(Error::Dimension {
                    op: "FeedForwardNet::new",
                    left: expected,
                    right: w.shape(),
                });
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Identity,
        })
    }

    /// All weights zero; the output is then identically zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| DenseMatrix::zeros(w[1], w[0] + 1))
            .collect();
        Self::new(layer_dims.to_vec(), weights)
    }

    /// Bias columns zero, every other weight i.i.d. standard normal.
    pub fn init_weights(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_dims)?;
        let mut rng = stream_rng(seed, &[]);
        for w in &mut net.weights {
            let bias_col = w.cols() - 1;
            for i in 0..w.rows() {
                for (j, x) in w.row_mut(i).iter_mut().enumerate() {
                    if j != bias_col {
                        *x = StandardNormal.sample(&mut rng);
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.entries().len()).sum()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.entries().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().flat_map(|w| w.entries_mut().iter_mut())
    }

    /// `W ← W − rate·grad`.
    pub fn apply_gradient(&mut self, grad: &Gradient, rate: f64) -> Result<()> {
        if grad.layers.len() != self.weights.len() {
            return Err(Error::Config("gradient depth does not match the network".into()));
        }
        for (w, g) in self.weights.iter_mut().zip(&grad.layers) {
            if w.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "apply_gradient",
                    left: w.shape(),
                    right: g.shape(),
                });
            }
            for (x, dx) in w.entries_mut().iter_mut().zip(g.entries()) {
                *x -= rate * dx;
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &DenseVector) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                op: "forward",
                left: (self.input_dim(), 1),
                right: (input.len(), 1),
            });
        }
        Ok(())
    }

    /// `W_l · (h, 1)`: weighted sum first, bias added last.
    fn affine(w: &DenseMatrix, h: &[f64]) -> Vec<f64> {
        let bias = w.cols() - 1;
        (0..w.rows())
            .map(|i| {
                let row = w.row(i);
                let s: f64 = row[..bias].iter().zip(h).map(|(a, b)| a * b).sum();
                s + row[bias]
            })
            .collect()
    }

    pub fn forward(&self, input: &DenseVector) -> Result<DenseVector> {
        self.check_input(input)?;
        let mut h = input.as_slice().to_vec();
        for (l, w) in self.weights.iter().enumerate() {
            let act = self.activation(l);
            h = Self::affine(w, &h).into_iter().map(|z| act.apply(z)).collect();
        }
        DenseVector::new(h)
    }

    pub fn forward_cached(&self, input: &DenseVector) -> Result<(DenseVector, ForwardCache)> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post: Vec<DenseVector> = Vec::with_capacity(self.depth());
        for (l, w) in self.weights.iter().enumerate() {
            let h = post.last().unwrap_or(input);
            let z = Self::affine(w, h.as_slice());
            let act = self.activation(l);
            let a: Vec<f64> = z.iter().map(|x| act.apply(*x)).collect();
            pre.push(DenseVector::new(z)?);
            post.push(DenseVector::new(a)?);
        }
        let out = post.last().expect("depth >= 1").clone();
        Ok((
            out,
            ForwardCache {
                input: input.clone(),
                pre,
                post,
            },
        ))
    }

    /// Squared-error loss `‖f(x) − target‖²` and its exact weight gradient.
    pub fn backprop(&self, input: &DenseVector, target: &DenseVector) -> Result<(f64, Gradient)> {
        if target.len() != self.output_dim() {
            return Err(Error::Dimension {
                op: "backprop",
                left: (self.output_dim(), 1),
                right: (target.len(), 1),
            });
        }
        let (out, cache) = self.forward_cached(input)?;
        let mut loss = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target.iter())
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                2.0 * r
            })
            .collect();

        let depth = self.depth();
        let mut layers: Vec<DenseMatrix> = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let act = self.activation(l);
            for (d, a) in delta.iter_mut().zip(cache.post[l].iter()) {
                *d *= act.derivative_from_output(*a);
            }
            let h = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            let w = &self.weights[l];
            let mut g = DenseMatrix::zeros(w.rows(), w.cols());
            for (i, d) in delta.iter().enumerate() {
                let row = g.row_mut(i);
                for (gij, hj) in row.iter_mut().zip(h.iter()) {
                    *gij = d * hj;
                }
                row[w.cols() - 1] = *d;
            }
            layers.push(g);
            if l > 0 {
                delta = (0..self.layer_dims[l])
                    .map(|j| (0..w.rows()).map(|i| w[(i, j)] * delta[i]).sum())
                    .collect();
            }
        }
        layers.reverse();
        Ok((loss, Gradient { layers }))
    }

    /// Reorders the neurons produced by `weights[layer]`.
    ///
    /// Row `i` of the new `weights[layer]` is old row `perm[i]`; the matching
    /// input columns of `weights[layer + 1]` follow, the bias column stays put.
    pub fn permute_hidden(&self, layer: usize, perm: &[usize]) -> Result<FeedForwardNet> {
        if layer + 1 >= self.depth() {
            return Err(Error::Config(format!(
                "layer {layer} is not a hidden layer of a depth-{} network",
                self.depth()
            )));
        }
        let width = self.layer_dims[layer + 1];
        let mut seen = vec![false; width];
        let valid = perm.len() == width
            && perm.iter().all(|&p| p < width && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(Error::InvalidPermutation {
                width,
                perm: perm.to_vec(),
            });
        }
        let mut net = self.clone();
        let (src_in, src_out) = (&self.weights[layer], &self.weights[layer + 1]);
        for (i, &p) in perm.iter().enumerate() {
            net.weights[layer].row_mut(i).copy_from_slice(src_in.row(p));
        }
        for r in 0..src_out.rows() {
            for (i, &p) in perm.iter().enumerate() {
                net.weights[layer + 1][(r, i)] = src_out[(r, p)];
            }
        }
        Ok(net)
    }

    /// Plain-text model: a header with the layer sizes, then one block per
    /// weight matrix, rows written with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            s,
            "ffn layer_dims {} hidden {} output {}",
            dims.join(" "),
            self.hidden_activation.as_str(),
            self.output_activation.as_str()
        );
        for (l, w) in self.weights.iter().enumerate() {
            let _ = writeln!(s, "layer {l} {} {}", w.rows(), w.cols());
            for i in 0..w.rows() {
                let row: Vec<String> = w.row(i).iter().map(|x| format!("{x:.16e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    /// Inverse of [`FeedForwardNet::to_text`]; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<FeedForwardNet> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty model file".into()))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("ffn") || tokens.next() != Some("layer_dims") {
            return Err(Error::Parse(format!("bad model header '{header}'")));
        }
        let mut layer_dims = Vec::new();
        let mut rest = Vec::new();
        for tok in tokens.by_ref() {
            match tok.parse::<usize>() {
                Ok(d) if rest.is_empty() => layer_dims.push(d),
                _ => rest.push(tok),
            }
        }
        if rest != ["hidden", "sigmoid", "output", "identity"] {
            return Err(Error::Parse(format!("unsupported activations in '{header}'")));
        }
        validate_dims(&layer_dims).map_err(|e| Error::Parse(e.to_string()))?;

        let mut weights = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let block = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing block for layer {l}")))?;
            let head: Vec<&str> = block.split_whitespace().collect();
            let shape = match head.as_slice() {
                ["layer", idx, r, c] if idx.parse::<usize>().ok() == Some(l) => {
                    (parse_usize(r)?, parse_usize(c)?)
                }
                _ => return Err(Error::Parse(format!("bad layer header '{block}'"))),
            };
            let mut entries = Vec::with_capacity(shape.0 * shape.1);
            for _ in 0..shape.0 {
                let row = lines
                    .next()
                    .ok_or_else(|| Error::Parse(format!("layer {l}: missing rows")))?;
                let before = entries.len();
                for tok in row.split_whitespace() {
                    entries.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad number '{tok}'")))?,
                    );
                }
                if entries.len() - before != shape.1 {
                    return Err(Error::Parse(format!("layer {l}: row has wrong length")));
                }
            }
            weights.push(
                DenseMatrix::new(shape.0, shape.1, entries).map_err(|e| Error::Parse(e.to_string()))?,
            );
        }
        if let Some(extra) = lines.next() {
            return Err(Error::Parse(format!("trailing content '{extra}'")));
        }
        FeedForwardNet::new(layer_dims, weights)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse(format!("bad integer '{s}'")))
}
