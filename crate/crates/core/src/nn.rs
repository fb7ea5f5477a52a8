//! Small fully connected network with ReLU hidden layers and a linear
//! output, trained by plain SGD. Enough for a DQN with a 95-dimensional
//! state and 15 actions.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

const MAGIC: &str = "oracle-select-mlp v1";

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {found} features, network expects {expected}")]
    InputSize { expected: usize, found: usize },
    #[error("checkpoint truncated in layer {layer}")]
    Truncated { layer: usize },
    #[error("checkpoint layer {layer}: expected {expected_in}x{expected_out}, found {found_in}x{found_out}")]
    ShapeMismatch {
        layer: usize,
        expected_in: usize,
        expected_out: usize,
        found_in: usize,
        found_out: usize,
    },
    #[error("checkpoint has {found} layers, expected {expected}")]
    LayerCount { expected: usize, found: usize },
    #[error("expected {expected} parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: (0..outputs).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Activations recorded by [`Mlp::forward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`
    /// (after ReLU for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

/// Parameter gradients with the network's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).flatten().for_each(|x| *x *= k);
    }

    /// Flattened like [`Mlp::parameters`].
    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Weights and biases start
    /// uniform in +-1/sqrt(fan_in).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Self { layers: sizes.windows(2).map(|w| Layer::new(w[0], w[1], rng)).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_trace(x)?.acts.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NnError> {
        if x.len() != self.input_len() {
            return Err(NnError::InputSize { expected: self.input_len(), found: x.len() });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts.last().expect("non-empty"));
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(Trace { acts })
    }

    /// Backpropagate `grad_out` (dLoss/dOutput) through a recorded pass.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.acts[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grads.bias[i][o] = *d;
                let row = &mut grads.weights[i][o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(g, v)| *g = d * v);
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            // ReLU derivative of the hidden layer that produced `input`.
            prev.iter_mut().zip(input).for_each(|(p, a)| {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            });
            delta = prev;
        }
        grads
    }

    /// `theta -= lr * grads`.
    pub fn apply_update(&mut self, grads: &Gradients, lr: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.weights.iter_mut().zip(&grads.weights[i]).for_each(|(w, g)| *w -= lr * g);
            layer.bias.iter_mut().zip(&grads.bias[i]).for_each(|(b, g)| *b -= lr * g);
        }
    }

    /// Every parameter, layer by layer: weights (row-major), then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), NnError> {
        let expected: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if params.len() != expected {
            return Err(NnError::ParameterCount { expected, found: params.len() });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &Mlp) {
        self.layers.clone_from(&other.layers);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(s, "layer {i} {} {}", l.inputs, l.outputs).unwrap();
            s.push_str(&join(&l.weights));
            s.push('\n');
            s.push_str(&join(&l.bias));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let parse_err = |line, message: &str| NnError::Parse { line, message: message.into() };
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            Some((n, _)) => return Err(parse_err(n, "not a network checkpoint")),
            None => return Err(NnError::Truncated { layer: 0 }),
        }
        let (n, header) = lines.next().ok_or(NnError::Truncated { layer: 0 })?;
        let count: usize = header
            .strip_prefix("layers ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err(n, "expected `layers <count>`"))?;
        if count == 0 {
            return Err(parse_err(n, "network has no layers"));
        }
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let (n, head) = lines.next().ok_or(NnError::Truncated { layer: i })?;
            let fields: Vec<&str> = head.split_whitespace().collect();
            let dims = match fields.as_slice() {
                ["layer", idx, a, b] if idx.parse::<usize>().ok() == Some(i) => {
                    a.parse::<usize>().ok().zip(b.parse::<usize>().ok())
                }
                _ => None,
            };
            let (inputs, outputs) =
                dims.ok_or_else(|| parse_err(n, &format!("expected `layer {i} <in> <out>`")))?;
            if let Some(prev) = layers.last().map(|l: &Layer| l.outputs) {
                if prev != inputs {
                    return Err(NnError::ShapeMismatch {
                        layer: i,
                        expected_in: prev,
                        expected_out: outputs,
                        found_in: inputs,
                        found_out: outputs,
                    });
                }
            }
            let weights = read_row(&mut lines, i, inputs * outputs)?;
            let bias = read_row(&mut lines, i, outputs)?;
            layers.push(Layer { inputs, outputs, weights, bias });
        }
        Ok(Self { layers })
    }

    /// Reject a network whose layer shapes differ from `sizes`, naming the
    /// first offending layer.
    pub fn check_sizes(&self, sizes: &[usize]) -> Result<(), NnError> {
        if sizes.len() != self.layers.len() + 1 {
            return Err(NnError::LayerCount {
                expected: sizes.len().saturating_sub(1),
                found: self.layers.len(),
            });
        }
        for (i, (l, w)) in self.layers.iter().zip(sizes.windows(2)).enumerate() {
            if l.inputs != w[0] || l.outputs != w[1] {
                return Err(NnError::ShapeMismatch {
                    layer: i,
                    expected_in: w[0],
                    expected_out: w[1],
                    found_in: l.inputs,
                    found_out: l.outputs,
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn join(values: &[f64]) -> String {
    // Display for f64 prints the shortest string that round-trips.
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn read_row<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    layer: usize,
    expected: usize,
) -> Result<Vec<f64>, NnError> {
    let (n, line) = lines.next().ok_or(NnError::Truncated { layer })?;
    let values = line
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| NnError::Parse { line: n, message: e.to_string() })?;
    if values.len() < expected {
        return Err(NnError::Truncated { layer });
    }
    if values.len() > expected {
        return Err(NnError::Parse {
            line: n,
            message: format!("layer {layer}: {} values, expected {expected}", values.len()),
        });
    }
    Ok(values)
}
