//! Flat-parameter multilayer perceptrons with exact reverse-mode gradients.
//!
//! Every network is a plain `Vec<f64>` of parameters plus shape metadata, so
//! checkpoints, optimizer state, and gradient vectors are all index-aligned
//! slices. Layer `l` occupies a contiguous block: the weight matrix
//! (`out x in`, row-major) followed by the bias vector. Hidden layers apply
//! the configured activation; the output layer is affine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;

/// Elementwise nonlinearity applied after every layer except the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            // max(x, 0) + ln(1 + e^-|x|) avoids overflow for large |x|.
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Fully connected network with a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Number of parameters implied by a layer-size list.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl MlpNet {
    /// Wrap an existing parameter vector, validating shape and finiteness.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let net = MlpNet {
            layer_sizes,
            activation,
            params,
        };
        net.validate()?;
        Ok(net)
    }

    /// All-zero parameters; useful as a base for hand-built fixtures.
    pub fn zeros(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let n = param_count(&layer_sizes);
        Self::new(layer_sizes, activation, vec![0.0; n])
    }

    /// Random initialization: weights are N(0, 1/fan_in), biases zero.
    pub fn random(layer_sizes: Vec<usize>, activation: Activation, rng: &mut Xoshiro256) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activation)?;
        let sizes = net.layer_sizes.clone();
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (1.0 / fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = scale * rng.normal();
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least an input and an output layer, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        let expected = param_count(&self.layer_sizes);
        if self.params.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "MlpNet params".into(),
                expected,
                actual: self.params.len(),
            });
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("MlpNet params".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Zero the final layer's weights and bias, leaving earlier layers alone.
    /// The network then computes the zero function while keeping useful
    /// hidden features for training to latch onto.
    pub fn zero_output_layer(&mut self) {
        let n_layers = self.layer_sizes.len() - 1;
        let offset: usize = self.layer_sizes[..n_layers]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        for p in &mut self.params[offset..] {
            *p = 0.0;
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "MlpNet input".into(),
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Evaluate the network.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        let mut offset = 0;
        let last = self.layer_sizes.len() - 2;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                let row = &weights[i * n_in..(i + 1) * n_in];
                let mut acc = biases[i];
                for j in 0..n_in {
                    acc += row[j] * a[j];
                }
                z[i] = if l == last { acc } else { self.activation.eval(acc) };
            }
            a = z;
            offset += n_in * n_out + n_out;
        }
        Ok(a)
    }

    /// Forward pass keeping per-layer inputs and pre-activations for backprop.
    fn forward_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_layers = self.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut preacts = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let a = activations.last().unwrap();
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                let row = &weights[i * n_in..(i + 1) * n_in];
                let mut acc = biases[i];
                for j in 0..n_in {
                    acc += row[j] * a[j];
                }
                z[i] = acc;
            }
            let next = if l == n_layers - 1 {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.eval(v)).collect()
            };
            preacts.push(z);
            activations.push(next);
            offset += n_in * n_out + n_out;
        }
        (activations, preacts)
    }

    /// Reverse-mode gradients of `output_grad . forward(input)` with respect
    /// to parameters and input. Exact up to floating-point rounding.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut param_grad = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(input, output_grad, &mut param_grad)?;
        Ok((param_grad, input_grad))
    }

    /// Like `backward`, but adds the parameter gradient into `param_acc`.
    /// Lets training loops accumulate over a batch without reallocating.
    pub fn backward_into(
        &self,
        input: &[f64],
        output_grad: &[f64],
        param_acc: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "MlpNet output_grad".into(),
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if param_acc.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "MlpNet param_acc".into(),
                expected: self.params.len(),
                actual: param_acc.len(),
            });
        }
        let (activations, preacts) = self.forward_trace(input);
        let n_layers = self.layer_sizes.len() - 1;
        let layer_offsets: Vec<usize> = {
            let mut offs = Vec::with_capacity(n_layers);
            let mut o = 0;
            for w in self.layer_sizes.windows(2) {
                offs.push(o);
                o += w[0] * w[1] + w[1];
            }
            offs
        };

        let mut upstream = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let offset = layer_offsets[l];
            // Gradient with respect to this layer's pre-activation.
            let delta: Vec<f64> = if l == n_layers - 1 {
                upstream
            } else {
                preacts[l]
                    .iter()
                    .zip(&upstream)
                    .map(|(&z, &g)| g * self.activation.deriv(z))
                    .collect()
            };
            let a = &activations[l];
            for i in 0..n_out {
                let wrow = offset + i * n_in;
                for j in 0..n_in {
                    param_acc[wrow + j] += delta[i] * a[j];
                }
                param_acc[offset + n_in * n_out + i] += delta[i];
            }
            let weights = &self.params[offset..offset + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for i in 0..n_out {
                let row = &weights[i * n_in..(i + 1) * n_in];
                for j in 0..n_in {
                    prev[j] += row[j] * delta[i];
                }
            }
            upstream = prev;
        }
        Ok(upstream)
    }
}

/// Adam optimizer state for one flat parameter vector.
///
/// `beta0` decays the first moment, `beta1` the second; both moments are
/// bias-corrected before the update, so the very first step with
/// `beta0 = beta1 = 0` moves each parameter by `lr * g / (|g| + eps)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with the default moment decays (0.0, 0.99).
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            lr,
            beta0: 0.0,
            beta1: 0.99,
            eps: 1e-8,
        }
    }

    pub fn with_betas(mut self, beta0: f64, beta1: f64) -> Self {
        self.beta0 = beta0;
        self.beta1 = beta1;
        self
    }

    /// One Adam update, in place. Rejects non-finite gradients so a
    /// divergence cannot silently poison the moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.len() != self.first_moment.len() || params.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch {
                context: "adam_step".into(),
                expected: self.first_moment.len(),
                actual: if grads.len() != self.first_moment.len() {
                    grads.len()
                } else {
                    params.len()
                },
            });
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("adam_step gradient".into()));
        }
        self.step_count += 1;
        let bc0 = 1.0 - self.beta0.powi(self.step_count as i32);
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta0 * self.first_moment[i] + (1.0 - self.beta0) * g;
            self.second_moment[i] = self.beta1 * self.second_moment[i] + (1.0 - self.beta1) * g * g;
            let m_hat = self.first_moment[i] / bc0;
            let v_hat = self.second_moment[i] / bc1;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Central finite differences of a scalar function of the parameters.
/// The independent check that every analytic gradient is tested against.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], h: f64) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let down = f(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}
