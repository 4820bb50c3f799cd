//! Minimal dense network: ReLU hidden layers, linear output, exact
//! reverse-mode gradients, Adam, and Huber loss. Small enough to verify every
//! gradient against central finite differences.

use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length {got}, expected {expected}")]
    InputLength { got: usize, expected: usize },
    #[error("gradient shape does not match network shape")]
    ShapeMismatch,
    #[error("need at least two layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error("unsupported checkpoint header {0:?}")]
    Version(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One dense layer, row-major weights (`rows x cols`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// Feedforward net with ReLU on all but the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl DenseNet {
    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self, NnError> {
        Self::build(
            layer_sizes,
            |rows, cols, rng| {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                (0..rows * cols)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect()
            },
            rng,
        )
    }

    /// All-zero parameters; forward output is identically zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        let mut rng = rand::rng();
        Self::build(
            layer_sizes,
            |rows, cols, _| vec![0.0; rows * cols],
            &mut rng,
        )
    }

    /// Assembles a net from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::TooFewLayers(1));
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(NnError::ShapeMismatch);
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows {
                return Err(NnError::ShapeMismatch);
            }
        }
        Ok(DenseNet {
            input_dim: layers[0].cols,
            output_dim: layers.last().expect("non-empty").rows,
            layers,
        })
    }

    fn build<R: Rng>(
        layer_sizes: &[usize],
        mut weights: impl FnMut(usize, usize, &mut R) -> Vec<f64>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers(layer_sizes.len()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                weights: weights(w[1], w[0], rng),
                bias: vec![0.0; w[1]],
                rows: w[1],
                cols: w[0],
            })
            .collect();
        Ok(DenseNet {
            layers,
            input_dim: layer_sizes[0],
            output_dim: *layer_sizes.last().expect("checked above"),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(self.layers.iter().map(|l| l.rows));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(input)?.output().to_vec())
    }

    /// Forward pass keeping every post-activation, for the backward pass.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardTrace, NnError> {
        if input.len() != self.input_dim {
            return Err(NnError::InputLength {
                got: input.len(),
                expected: self.input_dim,
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().expect("seeded with the input");
            let mut out = layer.bias.clone();
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(prev) {
                    acc += w * x;
                }
                out[r] += acc;
            }
            if i + 1 < self.layers.len() {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Exact reverse-mode gradients of the forward map, contracted with
    /// `output_gradient`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_gradient: &[f64],
    ) -> Result<Gradients, NnError> {
        if output_gradient.len() != self.output_dim
            || trace.activations.len() != self.layers.len() + 1
        {
            return Err(NnError::ShapeMismatch);
        }
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
                rows: l.rows,
                cols: l.cols,
            })
            .collect();

        let mut delta = output_gradient.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // ReLU derivative, except on the linear output layer
            if i + 1 < self.layers.len() {
                for (d, &a) in delta.iter_mut().zip(&trace.activations[i + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.activations[i];
            let g = &mut grads[i];
            for r in 0..layer.rows {
                g.bias[r] += delta[r];
                let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (slot, x) in row.iter_mut().zip(input) {
                    *slot += delta[r] * x;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += delta[r] * w;
                    }
                }
                delta = prev;
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// Accumulates `other * scale` into `self`'s parameters (used by tests
    /// and the optimizer only through [`AdamState::step`]).
    fn apply_update(&mut self, update: impl Fn(usize, f64) -> f64) {
        let mut k = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = update(k, *w);
                k += 1;
            }
        }
    }

    #[cfg(test)]
    fn param_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    /// Writes the versioned text checkpoint: header, then one block per
    /// layer (weight rows, then the bias line), values in round-trip decimal.
    pub fn save(&self, sink: &mut impl Write) -> Result<(), NnError> {
        let sizes: Vec<String> = self.layer_sizes().iter().map(|s| s.to_string()).collect();
        writeln!(sink, "lexnav-net v1 {}", sizes.join(" "))?;
        for layer in &self.layers {
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(sink, "{}", line.join(" "))?;
            }
            let bias: Vec<String> = layer.bias.iter().map(|v| format!("{v}")).collect();
            writeln!(sink, "{}", bias.join(" "))?;
        }
        Ok(())
    }

    pub fn load(source: &mut impl BufRead) -> Result<Self, NnError> {
        let mut lines = source.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| NnError::Version("<empty>".into()))?;
        let mut toks = header.split_whitespace();
        match (toks.next(), toks.next()) {
            (Some("lexnav-net"), Some("v1")) => {}
            _ => return Err(NnError::Version(header.clone())),
        }
        let sizes: Vec<usize> = toks
            .map(|t| {
                t.parse().map_err(|_| NnError::Checkpoint {
                    line: 1,
                    reason: format!("bad layer size {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 {
            return Err(NnError::TooFewLayers(sizes.len()));
        }

        let mut net = DenseNet::zeros(&sizes)?;
        let mut line_no = 1usize;
        let mut parse_row = |expected: usize| -> Result<Vec<f64>, NnError> {
            line_no += 1;
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| NnError::Checkpoint {
                    line: line_no,
                    reason: "unexpected end of checkpoint".into(),
                })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| NnError::Checkpoint {
                        line: line_no,
                        reason: format!("bad number {t:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != expected {
                return Err(NnError::Checkpoint {
                    line: line_no,
                    reason: format!("expected {expected} values, got {}", vals.len()),
                });
            }
            Ok(vals)
        };
        for layer in &mut net.layers {
            for r in 0..layer.rows {
                let row = parse_row(layer.cols)?;
                layer.weights[r * layer.cols..(r + 1) * layer.cols].copy_from_slice(&row);
            }
            layer.bias = parse_row(layer.rows)?;
        }
        Ok(net)
    }
}

/// Activations recorded by [`DenseNet::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

/// Adam accumulators; shapes mirror the network's parameters flattened.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update of `net` along `grads`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NnError> {
        let flat: Vec<f64> = grads
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect();
        if flat.len() != self.m.len() {
            return Err(NnError::ShapeMismatch);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, g) in flat.iter().enumerate() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
        }
        let (m, v) = (&self.m, &self.v);
        let (lr, eps) = (self.learning_rate, self.epsilon);
        net.apply_update(|k, w| {
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            w - lr * m_hat / (v_hat.sqrt() + eps)
        });
        Ok(())
    }
}

/// Huber loss and its derivative w.r.t. the prediction (delta = 1 by default
/// in callers).
pub fn huber(prediction: f64, target: f64, delta: f64) -> (f64, f64) {
    let err = prediction - target;
    if err.abs() <= delta {
        (0.5 * err * err, err)
    } else {
        (delta * (err.abs() - 0.5 * delta), delta * err.signum())
    }
}
