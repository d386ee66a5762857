//! Test objectives with analytic gradients, and a central-difference oracle.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamVector, Rng};

/// A differentiable objective `f: R^n -> R`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value_and_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)>;

    fn value(&self, x: &ParamVector) -> Result<f64> {
        Ok(self.value_and_grad(x)?.0)
    }

    fn gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        Ok(self.value_and_grad(x)?.1)
    }
}

fn finish(value: f64, grad: ParamVector, context: &'static str) -> Result<(f64, ParamVector)> {
    if !value.is_finite() {
        return Err(Error::NonFinite { context, index: 0 });
    }
    grad.check_finite(context)?;
    Ok((value, grad))
}

/// Central differences `(f(x+h e_i) - f(x-h e_i)) / 2h`.
pub fn finite_diff_gradient(obj: &dyn Objective, x: &ParamVector, h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    x.ensure_len(obj.dim())?;
    let mut probe = x.clone();
    let mut out = ParamVector::zeros(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = obj.value(&probe)?;
        probe[i] = xi - h;
        let fm = obj.value(&probe)?;
        probe[i] = xi;
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// `f(x) = ½ Σ λᵢ (xᵢ - aᵢ)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    curvatures: Vec<f64>,
    targets: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(curvatures: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if curvatures.is_empty() {
            return Err(Error::invalid("quadratic needs at least one coordinate"));
        }
        if curvatures.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: curvatures.len(),
                got: targets.len(),
            });
        }
        if curvatures.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("curvatures must be positive and finite"));
        }
        Ok(SeparableQuadratic { curvatures, targets })
    }

    /// Unit curvature, minimum at `targets`.
    pub fn isotropic(targets: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0; targets.len()], targets)
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// PL constant.
    pub fn pl_constant(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::MAX, f64::min)
    }
}

impl Objective for SeparableQuadratic {
    fn dim(&self) -> usize {
        self.curvatures.len()
    }

    fn value_and_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        x.ensure_len(self.dim())?;
        let mut f = 0.0;
        let g: ParamVector = x
            .iter()
            .zip(self.curvatures.iter().zip(&self.targets))
            .map(|(&xi, (&l, &a))| {
                let r = xi - a;
                f += 0.5 * l * r * r;
                l * r
            })
            .collect();
        finish(f, g, "quadratic")
    }
}

/// `f(x) = scale · ½ ‖Zx − y‖²` with `Z` stored `d × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    z: Matrix,
    y: Vec<f64>,
    scale: f64,
}

impl LeastSquares {
    pub fn new(z: Matrix, y: Vec<f64>) -> Result<Self> {
        if y.len() != z.rows() {
            return Err(Error::DimensionMismatch {
                expected: z.rows(),
                got: y.len(),
            });
        }
        Ok(LeastSquares { z, y, scale: 1.0 })
    }

    /// Mean-squared variant, `½‖Zx − y‖² / d`.
    pub fn mean_squared(mut self) -> Self {
        self.scale = 1.0 / self.z.rows() as f64;
        self
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn residual(&self, x: &ParamVector) -> Result<ParamVector> {
        let zx = self.z.matvec(x)?;
        Ok(zx.iter().zip(&self.y).map(|(a, b)| a - b).collect())
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.z.cols()
    }

    fn value_and_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        x.ensure_len(self.dim())?;
        let r = self.residual(x)?;
        let f = 0.5 * self.scale * r.iter().map(|v| v * v).sum::<f64>();
        let g = self.z.matvec_t(&r)?.scale(self.scale);
        finish(f, g, "least squares")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative given pre-activation `z` and activation `a`; relu'(0) = 0.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parameter ranges of one dense layer inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlices {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

/// One-hidden-layer perceptron whose weights live in a single flat vector.
///
/// Layout: `W1 (hidden × in, row-major) | b1 | W2 (out × hidden) | b2`.
/// The loss is mean softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub activation: Activation,
}

impl ToyMlp {
    pub fn new(input: usize, hidden: usize, output: usize, activation: Activation) -> Self {
        ToyMlp {
            input,
            hidden,
            output,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    pub fn layers(&self) -> [LayerSlices; 2] {
        let w1 = self.hidden * self.input;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.output * self.hidden;
        let b2 = w2 + self.output;
        [
            LayerSlices {
                weights: 0..w1,
                bias: w1..b1,
            },
            LayerSlices {
                weights: b1..w2,
                bias: w2..b2,
            },
        ]
    }

    /// `true` for weight entries, `false` for biases.
    pub fn weight_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.param_count()];
        for layer in self.layers() {
            for i in layer.weights {
                flags[i] = true;
            }
        }
        flags
    }

    /// Uniform in `±1/√fan_in` per layer, biases included.
    pub fn init(&self, rng: &mut Rng) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let fans = [self.input, self.hidden];
        for (layer, fan) in self.layers().into_iter().zip(fans) {
            let bound = 1.0 / (fan as f64).sqrt();
            for i in layer.weights.chain(layer.bias) {
                p[i] = rng.uniform_in(-bound, bound);
            }
        }
        p
    }

    fn hidden_pre(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        let [l1, _] = self.layers();
        let w = &params[l1.weights];
        let b = &params[l1.bias];
        for (j, o) in out.iter_mut().enumerate() {
            let row = &w[j * self.input..(j + 1) * self.input];
            *o = b[j] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
        }
    }

    fn logits_from_hidden(&self, params: &[f64], act: &[f64], out: &mut [f64]) {
        let [_, l2] = self.layers();
        let w = &params[l2.weights];
        let b = &params[l2.bias];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w[k * self.hidden..(k + 1) * self.hidden];
            *o = b[k] + row.iter().zip(act).map(|(a, h)| a * h).sum::<f64>();
        }
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        params.ensure_len(self.param_count())?;
        if input.len() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                got: input.len(),
            });
        }
        let mut z1 = vec![0.0; self.hidden];
        self.hidden_pre(params, input, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|&z| self.activation.apply(z)).collect();
        let mut logits = vec![0.0; self.output];
        self.logits_from_hidden(params, &a1, &mut logits);
        Ok(logits)
    }

    pub fn predict(&self, params: &ParamVector, input: &[f64]) -> Result<usize> {
        let logits = self.forward(params, input)?;
        Ok(argmax(&logits))
    }

    /// Mean cross-entropy over the batch and its gradient by reverse accumulation.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        inputs: &[Vec<f64>],
        labels: &[usize],
    ) -> Result<(f64, ParamVector)> {
        params.ensure_len(self.param_count())?;
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::invalid(
                "batch inputs and labels must be non-empty and equal length",
            ));
        }
        let [l1, l2] = self.layers();
        let mut grad = vec![0.0; self.param_count()];
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.output];
        let mut dz2 = vec![0.0; self.output];
        let mut da1 = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let inv = 1.0 / inputs.len() as f64;

        for (x, &label) in inputs.iter().zip(labels) {
            if x.len() != self.input {
                return Err(Error::DimensionMismatch {
                    expected: self.input,
                    got: x.len(),
                });
            }
            if label >= self.output {
                return Err(Error::invalid(format!("label {label} out of range")));
            }
            self.hidden_pre(params, x, &mut z1);
            for (a, &z) in a1.iter_mut().zip(&z1) {
                *a = self.activation.apply(z);
            }
            self.logits_from_hidden(params, &a1, &mut logits);

            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
            let log_denom = denom.ln() + max;
            loss += (log_denom - logits[label]) * inv;
            for (k, d) in dz2.iter_mut().enumerate() {
                let p = (logits[k] - log_denom).exp();
                *d = (p - if k == label { 1.0 } else { 0.0 }) * inv;
            }

            // output layer
            da1.iter_mut().for_each(|v| *v = 0.0);
            for (k, &d) in dz2.iter().enumerate() {
                let row = l2.weights.start + k * self.hidden;
                for j in 0..self.hidden {
                    grad[row + j] += d * a1[j];
                    da1[j] += params[row + j] * d;
                }
                grad[l2.bias.start + k] += d;
            }
            // hidden layer
            for j in 0..self.hidden {
                let dz1 = da1[j] * self.activation.derivative(z1[j], a1[j]);
                let row = l1.weights.start + j * self.input;
                for (i, &xi) in x.iter().enumerate() {
                    grad[row + i] += dz1 * xi;
                }
                grad[l1.bias.start + j] += dz1;
            }
        }
        finish(loss, ParamVector::new(grad), "mlp")
    }

    pub fn accuracy(&self, params: &ParamVector, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty evaluation set"));
        }
        let mut correct = 0usize;
        for (x, &label) in inputs.iter().zip(labels) {
            if self.predict(params, x)? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / inputs.len() as f64)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The MLP loss on a fixed batch, viewed as an objective over its parameters.
#[derive(Debug, Clone)]
pub struct MlpObjective<'a> {
    pub mlp: &'a ToyMlp,
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl Objective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.mlp.param_count()
    }

    fn value_and_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        self.mlp.loss_and_grad(x, self.inputs, self.labels)
    }
}
