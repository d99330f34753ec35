//! Fully connected networks with hand-written reverse-mode gradients, plus
//! the Adam optimiser used for both model training and control.
//!
//! Parameters live in one flat vector. Layer `l` occupies a contiguous block:
//! its `out x in` weight matrix in row-major order, then its `out` biases.
//! Batched passes use `ndarray` GEMMs; a single example is a batch of one.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
    Sigmoid,
    /// Independent softmax over consecutive groups of `group` outputs.
    Softmax {
        group: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input size first, output size last.
    pub layer_sizes: Vec<usize>,
    /// One activation per non-input layer.
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activations,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(
                "need at least an input and an output layer".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec("layer sizes must be positive".into()));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_sizes.len()
            )));
        }
        for (l, act) in self.activations.iter().enumerate() {
            if let Activation::Softmax { group } = *act {
                let width = self.layer_sizes[l + 1];
                if group == 0 || !width.is_multiple_of(group) {
                    return Err(Error::InvalidSpec(format!(
                        "softmax group {group} does not divide layer width {width}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    /// `(fan_in, fan_out)` of layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l], self.layer_sizes[l + 1])
    }

    /// Offset of layer `l`'s weight block within the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|k| {
                let (i, o) = self.layer_shape(k);
                o * i + o
            })
            .sum()
    }

    pub fn num_params(&self) -> usize {
        self.layer_offset(self.num_layers())
    }
}

/// Flat trainable parameters of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub params: Vec<f64>,
}

impl MlpWeights {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            params: vec![0.0; spec.num_params()],
        }
    }

    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.params.len() != spec.num_params() {
            return Err(Error::shape(
                format!("{} parameters", spec.num_params()),
                self.params.len(),
            ));
        }
        Ok(())
    }

    pub fn layer<'a>(
        &'a self,
        spec: &MlpSpec,
        l: usize,
    ) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (fan_in, fan_out) = spec.layer_shape(l);
        let off = spec.layer_offset(l);
        let w =
            ArrayView2::from_shape((fan_out, fan_in), &self.params[off..off + fan_out * fan_in])
                .expect("layer block matches its shape");
        let b = ArrayView1::from(
            &self.params[off + fan_out * fan_in..off + fan_out * fan_in + fan_out],
        );
        (w, b)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(spec: &MlpSpec, seed: u64) -> MlpWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = MlpWeights::zeros(spec);
    for l in 0..spec.num_layers() {
        let (fan_in, fan_out) = spec.layer_shape(l);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let off = spec.layer_offset(l);
        for w in &mut weights.params[off..off + fan_in * fan_out] {
            *w = rng.gen_range(-limit..=limit);
        }
    }
    weights
}

/// Cached post-activation values of every layer, input included.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Array2<f64>>,
}

impl Tape {
    /// Network outputs, one row per example.
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }

    pub fn batch_size(&self) -> usize {
        self.acts[0].nrows()
    }
}

fn apply_activation(act: Activation, z: &mut Array2<f64>) {
    match act {
        Activation::Linear => {}
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Sigmoid => z.mapv_inplace(|x| 1.0 / (1.0 + (-x).exp())),
        Activation::Softmax { group } => {
            for mut row in z.rows_mut() {
                for chunk in row
                    .as_slice_mut()
                    .expect("rows are contiguous")
                    .chunks_mut(group)
                {
                    let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for x in chunk.iter_mut() {
                        *x = (*x - max).exp();
                        total += *x;
                    }
                    for x in chunk.iter_mut() {
                        *x /= total;
                    }
                }
            }
        }
    }
}

/// Turns `dL/d(output)` into `dL/d(pre-activation)` in place.
fn activation_backward(act: Activation, out: &Array2<f64>, delta: &mut Array2<f64>) {
    match act {
        Activation::Linear => {}
        Activation::Tanh => delta.zip_mut_with(out, |d, &y| *d *= 1.0 - y * y),
        Activation::Sigmoid => delta.zip_mut_with(out, |d, &y| *d *= y * (1.0 - y)),
        Activation::Softmax { group } => {
            for (mut drow, yrow) in delta.rows_mut().into_iter().zip(out.rows()) {
                let d = drow.as_slice_mut().expect("rows are contiguous");
                let y = yrow.to_slice().expect("rows are contiguous");
                for (dc, yc) in d.chunks_mut(group).zip(y.chunks(group)) {
                    let dot: f64 = dc.iter().zip(yc).map(|(a, b)| a * b).sum();
                    for (a, &b) in dc.iter_mut().zip(yc) {
                        *a = b * (*a - dot);
                    }
                }
            }
        }
    }
}

/// Forward pass over a batch (one example per row).
pub fn forward_batch(weights: &MlpWeights, spec: &MlpSpec, x: ArrayView2<f64>) -> Result<Tape> {
    weights.check(spec)?;
    if x.ncols() != spec.input_size() {
        return Err(Error::shape(
            format!("{} inputs", spec.input_size()),
            x.ncols(),
        ));
    }
    let mut acts = Vec::with_capacity(spec.num_layers() + 1);
    acts.push(x.to_owned());
    for l in 0..spec.num_layers() {
        let (w, b) = weights.layer(spec, l);
        let mut z = acts[l].dot(&w.t());
        z += &b;
        apply_activation(spec.activations[l], &mut z);
        acts.push(z);
    }
    Ok(Tape { acts })
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as the flat parameter vector.
    pub params: Vec<f64>,
    /// `dL/dx`, one row per example.
    pub input: Array2<f64>,
}

/// Reverse pass for the loss `sum(upstream * output)`.
pub fn backward_batch(
    weights: &MlpWeights,
    spec: &MlpSpec,
    tape: &Tape,
    upstream: ArrayView2<f64>,
) -> Result<Gradients> {
    weights.check(spec)?;
    if upstream.dim() != tape.output().dim() {
        return Err(Error::shape(
            format!("{:?}", tape.output().dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    let mut grad = vec![0.0; spec.num_params()];
    let mut delta = upstream.to_owned();
    for l in (0..spec.num_layers()).rev() {
        activation_backward(spec.activations[l], &tape.acts[l + 1], &mut delta);
        let (w, _) = weights.layer(spec, l);
        let (fan_in, fan_out) = spec.layer_shape(l);
        let off = spec.layer_offset(l);
        let gw = delta.t().dot(&tape.acts[l]);
        let gb = delta.sum_axis(Axis(0));
        grad[off..off + fan_out * fan_in]
            .iter_mut()
            .zip(gw.iter())
            .for_each(|(g, v)| *g = *v);
        grad[off + fan_out * fan_in..off + fan_out * fan_in + fan_out]
            .iter_mut()
            .zip(gb.iter())
            .for_each(|(g, v)| *g = *v);
        delta = delta.dot(&w);
    }
    Ok(Gradients {
        params: grad,
        input: delta,
    })
}

/// Single-example forward pass.
pub fn mlp_forward(weights: &MlpWeights, spec: &MlpSpec, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("1 x n view");
    let tape = forward_batch(weights, spec, view)?;
    let y = tape.output().row(0).to_vec();
    Ok((y, tape))
}

/// Single-example reverse pass; returns the flat parameter gradient and `dL/dx`.
pub fn mlp_backward(
    weights: &MlpWeights,
    spec: &MlpSpec,
    tape: &Tape,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let view = ArrayView2::from_shape((1, upstream.len()), upstream).expect("1 x n view");
    let g = backward_batch(weights, spec, tape, view)?;
    let input = g.input.slice(s![0, ..]).to_vec();
    Ok((g.params, input))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n || grads.len() != n {
            return Err(Error::shape(
                n,
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grads: &[f64],
) -> Result<(Vec<f64>, AdamState)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grads)?;
    Ok((p, next))
}

/// Convenience bundle of a spec with its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub weights: MlpWeights,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Self {
        let weights = init_weights(&spec, seed);
        Self { spec, weights }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Tape> {
        forward_batch(&self.weights, &self.spec, x)
    }

    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<Gradients> {
        backward_batch(&self.weights, &self.spec, tape, upstream)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(mlp_forward(&self.weights, &self.spec, x)?.0)
    }
}
