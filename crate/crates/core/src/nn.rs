//! Small dense networks with hand-written reverse-mode gradients.
//!
//! The operator set is limited to what the training losses need: affine
//! layers, pointwise activations, and (for the gradient penalty) one extra
//! reverse pass through the input-gradient computation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::io::{read_raw, write_raw};
use crate::rng::SeededRng;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }

    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            _ => 0.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
            Activation::Tanh => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu,
            3 => Activation::Tanh,
            _ => return None,
        })
    }
}

/// Affine map `x W + b` followed by an activation. `W` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Values recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
    consumed: bool,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.weights.iter_mut().for_each(|w| *w *= scale);
        self.biases.iter_mut().for_each(|b| *b *= scale);
        self
    }

    /// Same ordering as [`DenseNet::params_flat`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamGrads,
    pub input: Array2<f64>,
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != l.bias.len() || l.weight.nrows() == 0 || l.bias.is_empty() {
                return Err(Error::ShapeMismatch(format!("layer {i}: weight {:?} bias {}", l.weight.dim(), l.bias.len())));
            }
            if i > 0 && layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs, previous layer gives {}",
                    l.weight.nrows(),
                    layers[i - 1].weight.ncols()
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// MLP with widths `dims[0] -> dims[1] -> ... -> dims[k]`, `hidden`
    /// activation on every layer but the last. Weights are uniform in
    /// `+-sqrt(6 / fan_in)`, biases zero.
    pub fn init(dims: &[usize], hidden: Activation, output: Activation, rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((w[0], w[1]), |_| rng.uniform_range(-bound, bound)),
                    bias: Array1::zeros(w[1]),
                    activation: if i + 2 == dims.len() { output } else { hidden },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite input batch".into()));
        }
        Ok(())
    }

    /// Forward pass that records a [`Tape`] for [`DenseNet::backward`].
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Tape> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut a = batch.clone();
        for layer in &self.layers {
            let z = a.dot(&layer.weight) + &layer.bias;
            let next = z.mapv(|v| layer.activation.apply(v));
            inputs.push(a);
            pre_activations.push(z);
            a = next;
        }
        Ok(Tape {
            inputs,
            pre_activations,
            output: a,
            consumed: false,
        })
    }

    /// Forward pass without recording.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers {
            let z = a.dot(&layer.weight) + &layer.bias;
            a = z.mapv(|v| layer.activation.apply(v));
        }
        Ok(a)
    }

    /// Gradients of `<output, output_grad>` with respect to every parameter
    /// and the input. Consumes the tape.
    pub fn backward(&self, tape: &mut Tape, output_grad: &Array2<f64>) -> Result<Gradients> {
        if tape.consumed {
            return Err(Error::StaleTape);
        }
        if output_grad.dim() != tape.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} for output {:?}",
                output_grad.dim(),
                tape.output.dim()
            )));
        }
        tape.consumed = true;
        let mut params = ParamGrads::zeros_like(self);
        let mut delta = output_grad.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &tape.pre_activations[l];
            let act = layer.activation;
            let dz = Zip::from(&delta).and(z).map_collect(|&d, &zv| d * act.derivative(zv));
            params.weights[l] = tape.inputs[l].t().dot(&dz);
            params.biases[l] = dz.sum_axis(Axis(0));
            delta = dz.dot(&layer.weight.t());
        }
        Ok(Gradients { params, input: delta })
    }

    /// Flattened parameters: per layer, weight (row-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap_or_default());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap_or_default());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file), path)
    }

    /// Checkpoint layout: magic `SGWN`, `u32` LE version (1), `u32` LE layer
    /// count, then per layer `u32` in, `u32` out and a `u8` activation tag
    /// (0 identity, 1 relu, 2 leaky-relu, 3 tanh). One `SGWE` blob per layer
    /// follows, `(in + 1) x out`: the weight rows, then the bias row.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.weight.nrows() as u32).to_le_bytes())?;
            w.write_all(&(l.weight.ncols() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.tag()])?;
        }
        for l in &self.layers {
            let mut blob = Array2::zeros((l.weight.nrows() + 1, l.weight.ncols()));
            blob.slice_mut(ndarray::s![..l.weight.nrows(), ..]).assign(&l.weight);
            blob.row_mut(l.weight.nrows()).assign(&l.bias);
            write_raw(w, &blob, None)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::MalformedFile {
            path: path.to_path_buf(),
            line: 0,
            msg,
        };
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad checkpoint magic (expected SGWN)".into()));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut manifest = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let input = read_u32(r)? as usize;
            let output = read_u32(r)? as usize;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
            let act = Activation::from_tag(tag[0]).ok_or_else(|| bad(format!("unknown activation tag {}", tag[0])))?;
            manifest.push((input, output, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (input, output, activation) in manifest {
            let (blob, _) = read_raw(r, path)?;
            if blob.dim() != (input + 1, output) {
                return Err(bad(format!("layer blob {:?} does not match manifest {input}x{output}", blob.dim())));
            }
            layers.push(Layer {
                weight: blob.slice(ndarray::s![..input, ..]).to_owned(),
                bias: blob.row(input).to_owned(),
                activation,
            });
        }
        Self::new(layers)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGWN";

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn for_net(net: &DenseNet, lr: f64) -> Self {
        Self::new(net.num_params(), lr, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Applies [`adam_step`] to every parameter of `net`.
pub fn adam_step_net(net: &mut DenseNet, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    let mut flat = net.params_flat();
    adam_step(&mut flat, &grads.flatten(), state)?;
    net.set_params_flat(&flat)
}

#[derive(Debug, Clone)]
pub struct GradPenalty {
    /// `mean_b (||grad_x D(x_b)|| - 1)^2` at the interpolates.
    pub penalty: f64,
    /// Gradient of `penalty` with respect to the critic parameters.
    pub grads: ParamGrads,
    pub interpolates: Array2<f64>,
}

/// Gradient penalty at random interpolates `u real + (1 - u) fake`,
/// `u ~ U(0, 1)` per row. The critic must have a scalar output.
pub fn grad_penalty(critic: &DenseNet, real: &Array2<f64>, fake: &Array2<f64>, rng: &mut SeededRng) -> Result<GradPenalty> {
    if real.dim() != fake.dim() {
        return Err(Error::ShapeMismatch(format!("real {:?} vs fake {:?}", real.dim(), fake.dim())));
    }
    let mut interpolates = fake.clone();
    for (mut row, r) in interpolates.rows_mut().into_iter().zip(real.rows()) {
        let u = rng.uniform();
        Zip::from(&mut row).and(&r).for_each(|x, &rv| *x = u * rv + (1.0 - u) * *x);
    }
    let (penalty, grads) = grad_penalty_at(critic, &interpolates)?;
    Ok(GradPenalty {
        penalty,
        grads,
        interpolates,
    })
}

/// Penalty value and its parameter gradient at fixed points.
///
/// First pass: per-sample input gradient `g = dD/dx` by backpropagating a
/// unit seed. Second pass: reverse-mode through that computation for the
/// adjoint `v = dP/dg`, which touches `W` directly (through `delta W^T`) and
/// the forward activations through `sigma'(z)`; the latter adjoints are then
/// pushed back through the forward graph.
pub fn grad_penalty_at(critic: &DenseNet, points: &Array2<f64>) -> Result<(f64, ParamGrads)> {
    if critic.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "gradient penalty needs a scalar critic, output dim is {}",
            critic.output_dim()
        )));
    }
    let tape = critic.forward(points)?;
    let layers = critic.layers();
    let nl = layers.len();
    let b = points.nrows();

    // delta_out[l]: d(sum D)/d(a_out[l]); dz[l]: same w.r.t. z[l].
    let mut delta_out = vec![Array2::<f64>::zeros((0, 0)); nl];
    let mut dz = vec![Array2::<f64>::zeros((0, 0)); nl];
    let mut delta = Array2::<f64>::ones((b, 1));
    for l in (0..nl).rev() {
        let act = layers[l].activation;
        let d = Zip::from(&delta)
            .and(&tape.pre_activations[l])
            .map_collect(|&dv, &zv| dv * act.derivative(zv));
        let next = d.dot(&layers[l].weight.t());
        delta_out[l] = delta;
        dz[l] = d;
        delta = next;
    }
    let g = delta;

    let norms: Vec<f64> = g.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let penalty = norms.iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / b as f64;
    let mut u = g.clone();
    for (mut row, &norm) in u.rows_mut().into_iter().zip(&norms) {
        let coef = if norm > 0.0 { 2.0 * (norm - 1.0) / (b as f64 * norm) } else { 0.0 };
        row *= coef;
    }

    let mut grads = ParamGrads::zeros_like(critic);
    let mut r = Vec::with_capacity(nl);
    for l in 0..nl {
        let act = layers[l].activation;
        let z = &tape.pre_activations[l];
        grads.weights[l] += &u.t().dot(&dz[l]);
        let uz = u.dot(&layers[l].weight);
        r.push(
            Zip::from(&uz)
                .and(&delta_out[l])
                .and(z)
                .map_collect(|&a, &dl, &zv| a * dl * act.second_derivative(zv)),
        );
        u = Zip::from(&uz).and(z).map_collect(|&a, &zv| a * act.derivative(zv));
    }

    let mut adj = Array2::<f64>::zeros((b, critic.output_dim()));
    for l in (0..nl).rev() {
        let act = layers[l].activation;
        let adj_z = Zip::from(&adj)
            .and(&tape.pre_activations[l])
            .and(&r[l])
            .map_collect(|&a, &zv, &rv| a * act.derivative(zv) + rv);
        grads.weights[l] += &tape.inputs[l].t().dot(&adj_z);
        grads.biases[l] += &adj_z.sum_axis(Axis(0));
        adj = adj_z.dot(&layers[l].weight.t());
    }
    Ok((penalty, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear(w: Array2<f64>) -> DenseNet {
        let out = w.ncols();
        DenseNet::new(vec![Layer {
            weight: w,
            bias: Array1::zeros(out),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    /// Straight-line reimplementation of the forward pass, one sample and
    /// one neuron at a time.
    fn reference_forward(net: &DenseNet, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), net.output_dim()));
        for s in 0..x.nrows() {
            let mut a: Vec<f64> = x.row(s).to_vec();
            for l in net.layers() {
                let mut next = vec![0.0; l.bias.len()];
                for (j, nj) in next.iter_mut().enumerate() {
                    let mut z = l.bias[j];
                    for (i, ai) in a.iter().enumerate() {
                        z += ai * l.weight[[i, j]];
                    }
                    *nj = match l.activation {
                        Activation::Identity => z,
                        Activation::Relu => if z > 0.0 { z } else { 0.0 },
                        Activation::LeakyRelu => if z > 0.0 { z } else { 0.2 * z },
                        Activation::Tanh => z.tanh(),
                    };
                }
                a = next;
            }
            for (j, v) in a.into_iter().enumerate() {
                out[[s, j]] = v;
            }
        }
        out
    }

    fn random_batch(rng: &mut SeededRng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.normal())
    }

    fn rel_close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = linear(Array2::eye(3));
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]];
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_on_negative_input_is_zero() {
        let net = DenseNet::new(vec![Layer {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Relu,
        }])
        .unwrap();
        let y = net.predict(&array![[-1.0, -3.0]]).unwrap();
        assert_eq!(y, array![[0.0, 0.0]]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = SeededRng::new(10);
        for act in [Activation::Relu, Activation::LeakyRelu, Activation::Tanh] {
            let net = DenseNet::init(&[4, 7, 5, 2], act, Activation::Identity, &mut rng).unwrap();
            let x = random_batch(&mut rng, 6, 4);
            let a = net.forward(&x).unwrap().output().clone();
            let b = reference_forward(&net, &x);
            assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() <= 1e-12));
        }
    }

    #[test]
    fn dimension_checks() {
        let mut rng = SeededRng::new(1);
        let net = DenseNet::init(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward(&Array2::zeros((2, 4))), Err(Error::DimensionMismatch(_))));
        let bad = vec![
            Layer { weight: Array2::zeros((2, 3)), bias: Array1::zeros(3), activation: Activation::Relu },
            Layer { weight: Array2::zeros((4, 1)), bias: Array1::zeros(1), activation: Activation::Relu },
        ];
        assert!(DenseNet::new(bad).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(3);
        for act in [Activation::LeakyRelu, Activation::Tanh, Activation::Relu] {
            let net = DenseNet::init(&[3, 6, 2], act, Activation::Identity, &mut rng).unwrap();
            let x = random_batch(&mut rng, 5, 3);
            let w = random_batch(&mut rng, 5, 2);
            let mut tape = net.forward(&x).unwrap();
            let grads = net.backward(&mut tape, &w).unwrap();
            let analytic = grads.params.flatten();
            let loss = |n: &DenseNet, x: &Array2<f64>| (n.predict(x).unwrap() * &w).sum();
            let base = net.params_flat();
            let h = 1e-5;
            for (k, &g) in analytic.iter().enumerate() {
                let mut p = base.clone();
                p[k] += h;
                let mut np = net.clone();
                np.set_params_flat(&p).unwrap();
                p[k] -= 2.0 * h;
                let mut nm = net.clone();
                nm.set_params_flat(&p).unwrap();
                let fd = (loss(&np, &x) - loss(&nm, &x)) / (2.0 * h);
                assert!(rel_close(fd, g, 1e-4, 1e-6), "{act:?} param {k}: {fd} vs {g}");
            }
            for i in 0..5 {
                for j in 0..3 {
                    let mut xp = x.clone();
                    xp[[i, j]] += h;
                    let mut xm = x.clone();
                    xm[[i, j]] -= h;
                    let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                    assert!(rel_close(fd, grads.input[[i, j]], 1e-4, 1e-6));
                }
            }
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = SeededRng::new(4);
        let net = DenseNet::init(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 3);
        let mut tape = net.forward(&x).unwrap();
        let g = net.backward(&mut tape, &Array2::zeros((3, 2))).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_input_gradient_is_w_transpose() {
        let w = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.25]];
        let net = linear(w.clone());
        let x = array![[1.0, 1.0, 1.0]];
        let og = array![[2.0, -3.0]];
        let mut tape = net.forward(&x).unwrap();
        let g = net.backward(&mut tape, &og).unwrap();
        assert_eq!(g.input, og.dot(&w.t()));
    }

    #[test]
    fn second_backward_is_stale() {
        let net = linear(Array2::eye(2));
        let mut tape = net.forward(&array![[1.0, 2.0]]).unwrap();
        let og = array![[1.0, 1.0]];
        net.backward(&mut tape, &og).unwrap();
        assert!(matches!(net.backward(&mut tape, &og), Err(Error::StaleTape)));
    }

    #[test]
    fn adam_zero_gradient() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2, 0.1, 0.9, 0.999, 1e-8);
        adam_step(&mut p, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step, 1);

        let mut st = AdamState::new(2, 0.1, 0.9, 0.999, 1e-8);
        st.first = vec![1.0, 1.0];
        st.second = vec![1.0, 1.0];
        let mut q = vec![0.0, 0.0];
        adam_step(&mut q, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(st.first, vec![0.9, 0.9]);
        assert!((st.second[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_scalar() {
        let lr = 1e-3;
        let eps = 1e-8;
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, lr, 0.9, 0.999, eps);
        adam_step(&mut p, &[1.0], &mut st).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        assert!((p[0] - (-lr / (1.0 + eps))).abs() < 1e-18);
    }

    #[test]
    fn adam_constant_gradient_step_size() {
        let lr = 1e-2;
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, lr, 0.9, 0.999, 1e-8);
        for _ in 0..999 {
            adam_step(&mut p, &[3.0], &mut st).unwrap();
        }
        let before = p[0];
        adam_step(&mut p, &[3.0], &mut st).unwrap();
        let delta = (p[0] - before).abs();
        assert!((delta - lr).abs() <= 0.05 * lr, "{delta}");
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut st = AdamState::new(2, 0.1, 0.9, 0.999, 1e-8);
        assert!(adam_step(&mut [0.0], &[0.0], &mut st).is_err());
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let net = linear(array![[0.6], [0.8]]);
        let mut rng = SeededRng::new(0);
        let real = random_batch(&mut rng, 4, 2);
        let fake = random_batch(&mut rng, 4, 2);
        let gp = grad_penalty(&net, &real, &fake, &mut rng).unwrap();
        assert!(gp.penalty.abs() < 1e-15);
    }

    #[test]
    fn scalar_slope_two_penalty_is_one() {
        let net = linear(array![[2.0]]);
        let mut rng = SeededRng::new(0);
        let real = random_batch(&mut rng, 5, 1);
        let fake = random_batch(&mut rng, 5, 1);
        let gp = grad_penalty(&net, &real, &fake, &mut rng).unwrap();
        assert!((gp.penalty - 1.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(6);
        for act in [Activation::LeakyRelu, Activation::Tanh] {
            let net = DenseNet::init(&[3, 5, 4, 1], act, Activation::Identity, &mut rng).unwrap();
            let x = random_batch(&mut rng, 6, 3);
            let (_, grads) = grad_penalty_at(&net, &x).unwrap();
            let analytic = grads.flatten();
            let base = net.params_flat();
            let h = 1e-5;
            for (k, &g) in analytic.iter().enumerate() {
                let mut p = base.clone();
                p[k] += h;
                let mut np = net.clone();
                np.set_params_flat(&p).unwrap();
                p[k] -= 2.0 * h;
                let mut nm = net.clone();
                nm.set_params_flat(&p).unwrap();
                let fd = (grad_penalty_at(&np, &x).unwrap().0 - grad_penalty_at(&nm, &x).unwrap().0) / (2.0 * h);
                assert!(rel_close(fd, g, 1e-3, 1e-6), "{act:?} param {k}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = SeededRng::new(9);
        let net = DenseNet::init(&[4, 8, 1], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        let back = DenseNet::read_from(&mut std::io::Cursor::new(buf), Path::new("mem")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn init_is_deterministic() {
        let a = DenseNet::init(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut SeededRng::new(5)).unwrap();
        let b = DenseNet::init(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_params(), 3 * 4 + 4 + 4 * 2 + 2);
    }
}
