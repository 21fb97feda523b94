//! Dense feed-forward networks on top of the tape.

use rand::Rng;

use super::tape::{linear_kernel, softmax_row, Gradients, Tape, Var};
use crate::error::{Error, Result};

/// A dense parameter block with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => (1, self.values.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Softmax,
}

/// Layer sizes and activations of a feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// `input → hidden… → output` with the same activation on every hidden
    /// layer.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Self {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(output);
        Self {
            layer_sizes,
            activations: vec![activation; hidden.len()],
            output_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Parameter("an MLP needs at least two layer sizes".into()));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Parameter(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        if self.activations.len() != self.layer_sizes.len() - 2 {
            return Err(Error::Parameter(format!(
                "{} hidden layers but {} activations",
                self.layer_sizes.len() - 2,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Width of the vector returned as `hidden`.
    pub fn hidden_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 2]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `[w0 shape, b0 shape, w1 shape, …]`
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layer_sizes
            .windows(2)
            .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
            .collect()
    }
}

fn activate(act: Activation, values: &mut [f64]) {
    match act {
        Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Identity => {}
    }
}

/// Checks that a parameter list matches the layer shapes of `spec`.
fn check_params(spec: &MlpSpec, params: &[Tensor]) -> Result<()> {
    spec.validate()?;
    let shapes = spec.param_shapes();
    if shapes.len() != params.len() {
        return Err(Error::Shape(format!(
            "expected {} parameter tensors, got {}",
            shapes.len(),
            params.len()
        )));
    }
    for (want, have) in shapes.iter().zip(params) {
        if want != &have.shape {
            return Err(Error::Shape(format!(
                "parameter shape {:?} where {:?} was expected",
                have.shape, want
            )));
        }
    }
    Ok(())
}

/// Untaped batched forward pass. Returns `(output, hidden)`, each row-major
/// with `rows` rows.
pub fn forward_batch(
    spec: &MlpSpec,
    params: &[Tensor],
    input: &[f64],
    rows: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if input.len() != rows * spec.input_dim() {
        return Err(Error::InputShape(format!(
            "expected {rows} rows of {} inputs, got {} values",
            spec.input_dim(),
            input.len()
        )));
    }
    let n_layers = spec.n_layers();
    let mut x = input.to_vec();
    let mut hidden = x.clone();
    for layer in 0..n_layers {
        let (w, b) = (&params[2 * layer], &params[2 * layer + 1]);
        let (out_dim, in_dim) = w.rows_cols();
        let mut y = linear_kernel(&x, rows, in_dim, &w.values, &b.values, out_dim);
        if layer + 1 < n_layers {
            activate(spec.activations[layer], &mut y);
            if layer + 2 == n_layers {
                hidden = y.clone();
            }
        } else if spec.output_activation == OutputActivation::Softmax {
            for row in y.chunks_mut(out_dim) {
                let logits = row.to_vec();
                softmax_row(&logits, row);
            }
        }
        x = y;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite network output".into()));
    }
    Ok((x, hidden))
}

/// Single-input forward pass: `(output, hidden)` where `hidden` is the
/// post-activation vector of the last hidden layer.
pub fn mlp_forward(spec: &MlpSpec, params: &[Tensor], input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_params(spec, params)?;
    forward_batch(spec, params, input, 1)
}

/// Tape nodes produced by a recorded forward pass.
#[derive(Debug, Clone, Copy)]
pub struct MlpNodes {
    /// Output after the output activation.
    pub output: Var,
    /// Output before the output activation (logits for softmax heads).
    pub pre_output: Var,
    /// Last hidden layer, post-activation.
    pub hidden: Var,
}

/// Parameter leaves of one network on one tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// A feed-forward network that owns its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Uniform `[-s, s]` weights with `s = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|shape| {
                let mut t = Tensor::zeros(&shape);
                if shape.len() == 2 {
                    let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    for v in &mut t.values {
                        *v = rng.random_range(-s..=s);
                    }
                }
                t
            })
            .collect();
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<Tensor>) -> Result<Self> {
        check_params(&spec, &params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        forward_batch(&self.spec, &self.params, input, 1)
    }

    pub fn forward_batch(&self, input: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        forward_batch(&self.spec, &self.params, input, rows)
    }

    /// Records the parameters as leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|t| {
                let (r, c) = t.rows_cols();
                tape.leaf(t.values.clone(), r, c).expect("tensor shape is consistent")
            })
            .collect();
        BoundParams { vars }
    }

    /// Recorded forward pass over a `rows × input_dim` node.
    pub fn forward_tape(&self, tape: &mut Tape, bound: &BoundParams, input: Var) -> Result<MlpNodes> {
        let (_, cols) = tape.shape(input);
        if cols != self.spec.input_dim() {
            return Err(Error::InputShape(format!(
                "network expects {} inputs, got {cols}",
                self.spec.input_dim()
            )));
        }
        let n_layers = self.spec.n_layers();
        let mut x = input;
        let mut hidden = input;
        let mut pre_output = input;
        for layer in 0..n_layers {
            let y = tape.linear(x, bound.vars[2 * layer], bound.vars[2 * layer + 1])?;
            if layer + 1 < n_layers {
                x = match self.spec.activations[layer] {
                    Activation::Relu => tape.relu(y),
                    Activation::Tanh => tape.tanh(y),
                    Activation::Identity => y,
                };
                hidden = x;
            } else {
                pre_output = y;
                x = match self.spec.output_activation {
                    OutputActivation::Identity => y,
                    OutputActivation::Softmax => tape.softmax(y),
                };
            }
        }
        if tape.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite network output".into()));
        }
        Ok(MlpNodes {
            output: x,
            pre_output,
            hidden,
        })
    }

    /// Adds the gradients of the bound leaves into each tensor's `grad`.
    pub fn accumulate_grads(&mut self, bound: &BoundParams, grads: &Gradients) {
        for (t, &v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(v) {
                for (acc, &gv) in t.grad.iter_mut().zip(g) {
                    *acc += gv;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.params {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Polyak averaging toward `online`: `self ← rate·online + (1−rate)·self`.
    pub fn soft_update_from(&mut self, online: &Mlp, rate: f64) {
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            for (v, &ov) in t.values.iter_mut().zip(&o.values) {
                *v = rate * ov + (1.0 - rate) * *v;
            }
        }
    }
}
