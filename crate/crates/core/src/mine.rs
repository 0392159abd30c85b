//! Neural mutual-information estimation with the Donsker-Varadhan bound.
//!
//! The statistics network ("critic") is a small fully connected ReLU network
//! over the concatenated pair `(x, y)` with a scalar linear output. Forward and
//! reverse passes are written out by hand on column-batched matrices; all
//! arithmetic is `f64`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `out x in`
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

/// Feed-forward critic `F(x, y)`: `input -> hidden... -> 1`, ReLU on hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsNetwork {
    input_dim: usize,
    hidden: Vec<usize>,
    seed: u64,
    layers: Vec<Dense>,
}

/// Topology header stored next to serialized parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub parameter_count: usize,
}

const MAGIC: &[u8; 8] = b"LCMINE01";

impl StatisticsNetwork {
    /// Critic over `num_classes`-dimensional `x` and `y` with the default topology.
    pub fn for_classes(num_classes: usize, seed: u64) -> Result<Self> {
        Self::new(2 * num_classes, &DEFAULT_HIDDEN, seed)
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization of weights and biases.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("network layers must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &out in hidden.iter().chain(std::iter::once(&1)) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = DMatrix::from_fn(out, fan_in, |_, _| rng.random_range(-bound..bound));
            let bias = DVector::from_fn(out, |_, _| rng.random_range(-bound..bound));
            layers.push(Dense { weights, bias });
            fan_in = out;
        }
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            seed,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameters: per layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            for i in 0..l.weights.nrows() {
                out.extend(l.weights.row(i).iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let (rows, cols) = l.weights.shape();
            for i in 0..rows {
                for j in 0..cols {
                    l.weights[(i, j)] = params[k];
                    k += 1;
                }
            }
            for b in l.bias.iter_mut() {
                *b = params[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Multiplies every parameter by `factor`.
    pub fn scale_parameters(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// Linear single-layer critic `<w, input> + b` (no hidden layers).
    pub fn linear(weights: &[f64], bias: f64) -> Result<Self> {
        let mut net = Self::new(weights.len(), &[], 0)?;
        let mut params = weights.to_vec();
        params.push(bias);
        net.set_parameters(&params)?;
        Ok(net)
    }

    /// Applies an input permutation: new input `perm[i]` feeds what input `i` fed.
    pub fn permute_inputs(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.input_dim {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let mut out = self.clone();
        let first = &self.layers[0].weights;
        for (i, &p) in perm.iter().enumerate() {
            out.layers[0].weights.set_column(p, &first.column(i));
        }
        Ok(out)
    }

    /// Forward pass over a column batch (`input_dim x n`).
    pub fn forward(&self, input: &DMatrix<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        if input.nrows() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "input has {} rows, network expects {}",
                input.nrows(),
                self.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &current;
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(std::mem::replace(&mut current, z));
        }
        let out = DVector::from_iterator(current.ncols(), current.row(0).iter().copied());
        Ok((out, ForwardCache { activations }))
    }

    /// Reverse pass. Returns flat parameter gradients (same order as
    /// [`parameters`](Self::parameters)) and the input gradient matrix.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = cache.activations[0].ncols();
        if d_out.len() != n {
            return Err(Error::InvalidArgument("output gradient length mismatch".into()));
        }
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        let mut dz = DMatrix::from_row_slice(1, n, d_out);
        for (i, l) in self.layers.iter().enumerate().rev() {
            let a_prev = &cache.activations[i];
            let dw = &dz * a_prev.transpose();
            let db = DVector::from_iterator(dz.nrows(), dz.row_iter().map(|r| r.sum()));
            grads.push((dw, db));
            let mut da = l.weights.transpose() * &dz;
            if i > 0 {
                // a_prev = relu(z_prev); relu'(z) = [a > 0]
                da.zip_apply(a_prev, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            dz = da;
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.parameter_count());
        for (dw, db) in &grads {
            for i in 0..dw.nrows() {
                flat.extend(dw.row(i).iter());
            }
            flat.extend(db.iter());
        }
        Ok((flat, dz))
    }

    /// Flat binary parameters preceded by a JSON topology header:
    /// `magic[8] | u32 LE header length | header JSON | f64 LE parameters`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = NetworkHeader {
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            seed: self.seed,
            parameter_count: self.parameter_count(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 8 * header.parameter_count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.parameters() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a serialized statistics network".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + len;
        let header: NetworkHeader = serde_json::from_slice(
            bytes
                .get(12..header_end)
                .ok_or_else(|| Error::Format("truncated header".into()))?,
        )?;
        let body = &bytes[header_end..];
        if body.len() != 8 * header.parameter_count {
            return Err(Error::Format("parameter block length mismatch".into()));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut net = Self::new(header.input_dim, &header.hidden, header.seed)?;
        net.set_parameters(&params)?;
        Ok(net)
    }
}

/// Activations kept from a forward pass: the input followed by each hidden layer's output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

/// Scalar critic value `F(x, y)` for one pair.
pub fn critic_forward(net: &StatisticsNetwork, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() + y.len() != net.input_dim || x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "pair dimensions ({}, {}) do not match input {}",
            x.len(),
            y.len(),
            net.input_dim
        )));
    }
    let input = DMatrix::from_iterator(net.input_dim, 1, x.iter().chain(y).copied());
    Ok(net.forward(&input)?.0[0])
}

/// Paired samples `(x_i, y_i)`, each row `dim` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairBatch {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 || x.len() != y.len() || !x.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("pair batch shape mismatch".into()));
        }
        Ok(Self { dim, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Pairs `(x_i, y_perm[i])`.
    pub fn with_permuted_y(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let d = self.dim;
        let mut y = Vec::with_capacity(self.y.len());
        for &j in perm {
            y.extend_from_slice(&self.y[j * d..(j + 1) * d]);
        }
        Ok(Self {
            dim: d,
            x: self.x.clone(),
            y,
        })
    }

    /// Pairs with `y` shuffled within the batch.
    pub fn shuffled<R: Rng>(&self, rng: &mut R) -> Self {
        let perm = random_permutation(self.len(), rng);
        self.with_permuted_y(&perm).expect("permutation has batch length")
    }

    fn write_columns(&self, m: &mut DMatrix<f64>, offset: usize) {
        let d = self.dim;
        for i in 0..self.len() {
            let mut col = m.column_mut(offset + i);
            for k in 0..d {
                col[k] = self.x[i * d + k];
                col[d + k] = self.y[i * d + k];
            }
        }
    }
}

/// Fisher-Yates permutation of `0..n`.
pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// DV estimate `mean F(joint) - log mean exp F(marginal)` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub joint_mean: f64,
    pub log_marginal_mean_exp: f64,
    pub batch_size: usize,
}

fn check_batches(net: &StatisticsNetwork, joint: &PairBatch, marginal: &PairBatch) -> Result<()> {
    if joint.len() < 2 || marginal.len() < 2 {
        return Err(Error::InvalidArgument(
            "DV bound needs at least 2 samples per batch".into(),
        ));
    }
    if joint.dim != marginal.dim || 2 * joint.dim != net.input_dim {
        return Err(Error::InvalidArgument(
            "batch dimensions do not match the critic".into(),
        ));
    }
    Ok(())
}

fn stacked_input(joint: &PairBatch, marginal: &PairBatch) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * joint.dim, joint.len() + marginal.len());
    joint.write_columns(&mut m, 0);
    marginal.write_columns(&mut m, joint.len());
    m
}

/// `log(mean(exp(values)))` with max-shift stabilization.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() - (values.len() as f64).ln()
}

fn estimate_from_outputs(out: &[f64], n_joint: usize) -> MiEstimate {
    let joint_mean = out[..n_joint].iter().sum::<f64>() / n_joint as f64;
    let lme = log_mean_exp(&out[n_joint..]);
    MiEstimate {
        value: joint_mean - lme,
        joint_mean,
        log_marginal_mean_exp: lme,
        batch_size: n_joint,
    }
}

pub fn dv_bound(net: &StatisticsNetwork, joint: &PairBatch, marginal: &PairBatch) -> Result<MiEstimate> {
    check_batches(net, joint, marginal)?;
    let (out, _) = net.forward(&stacked_input(joint, marginal))?;
    Ok(estimate_from_outputs(out.as_slice(), joint.len()))
}

/// Gradients of the DV value.
#[derive(Debug, Clone)]
pub struct DvGradients {
    pub estimate: MiEstimate,
    /// Flat, aligned with [`StatisticsNetwork::parameters`].
    pub theta: Vec<f64>,
    /// Row-major `n x dim` gradient with respect to each joint `y_i`.
    /// Marginal samples are treated as constants.
    pub joint_y: Vec<f64>,
}

pub fn dv_pullback(net: &StatisticsNetwork, joint: &PairBatch, marginal: &PairBatch) -> Result<DvGradients> {
    check_batches(net, joint, marginal)?;
    let (nj, nm) = (joint.len(), marginal.len());
    let (out, cache) = net.forward(&stacked_input(joint, marginal))?;
    let out = out.as_slice();
    let estimate = estimate_from_outputs(out, nj);
    if !estimate.value.is_finite() {
        return Err(Error::NonFinite(format!("DV estimate {}", estimate.value)));
    }
    // dV/dF_joint = 1/n, dV/dF_marginal = -softmax(F_marginal)
    let mut d_out = vec![1.0 / nj as f64; nj + nm];
    let lse = estimate.log_marginal_mean_exp + (nm as f64).ln();
    for (d, f) in d_out[nj..].iter_mut().zip(&out[nj..]) {
        *d = -(f - lse).exp();
    }
    let (theta, d_input) = net.backward(&cache, &d_out)?;
    let d = joint.dim;
    let mut joint_y = Vec::with_capacity(nj * d);
    for i in 0..nj {
        joint_y.extend(d_input.column(i).rows(d, d).iter());
    }
    Ok(DvGradients {
        estimate,
        theta,
        joint_y,
    })
}

/// Adaptive-moment (Adam) ascent state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// `params += lr * m_hat / (sqrt(v_hat) + eps)`. A non-finite gradient
    /// leaves the state untouched and returns an error.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::InvalidArgument("optimizer dimension mismatch".into()));
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Optimizers for the critic (rate alpha) and the pose increment (rate beta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub critic: Adam,
    pub pose: Adam,
    /// Pose learning rate is multiplied by `decay_factor` every `decay_every` steps.
    pub decay_every: u64,
    pub decay_factor: f64,
}

impl OptimizerState {
    pub fn new(net: &StatisticsNetwork, alpha: f64, beta: f64, decay_every: u64, decay_factor: f64) -> Self {
        Self {
            critic: Adam::new(net.parameter_count(), alpha),
            pose: Adam::new(6, beta),
            decay_every,
            decay_factor,
        }
    }
}

/// One ascent step on the critic parameters.
pub fn ascent_step(net: &mut StatisticsNetwork, opt: &mut OptimizerState, grad_theta: &[f64]) -> Result<()> {
    let mut params = net.parameters();
    opt.critic.ascend(&mut params, grad_theta)?;
    net.set_parameters(&params)
}
