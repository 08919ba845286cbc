//! Gradient-based fitting of dense spline networks.
//!
//! The objective is the mean squared error over a dataset plus an optional
//! group-l2,1 penalty `lambda * sum_ij ||c_ij||_2` that pushes whole edge
//! grids towards zero. Parameters are updated with Adam and decoupled weight
//! decay at a constant learning rate.

mod prune;
mod task;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::kan::{bracket, Domain, KanError, KanLayer, KanNetwork, SplineGrid};

pub use prune::{apply_masks, prune_by_norm, prune_edges, PruneMask, PruneOutcome};
pub use task::{Dataset, SyntheticTask, TargetFunction, TASK_CATALOG_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("task input width {task} does not match network input width {network}")]
    InputMismatch { task: usize, network: usize },
    #[error(transparent)]
    Kan(#[from] KanError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub l21_lambda: f64,
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            weight_decay: 0.0,
            l21_lambda: 0.0,
            init_sigma: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.l21_lambda >= 0.0) {
            return bad(format!("l21_lambda must be >= 0, got {}", self.l21_lambda));
        }
        if !(self.init_sigma >= 0.0) {
            return bad(format!("init_sigma must be >= 0, got {}", self.init_sigma));
        }
        Ok(())
    }
}

/// Builds a network with layer widths `dims` whose coefficients are i.i.d.
/// `N(0, sigma^2)` draws from a ChaCha stream seeded by `seed`.
pub fn init_network(dims: &[usize], grid_size: usize, sigma: f64, seed: u64) -> Result<KanNetwork, TrainError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(TrainError::InvalidConfig(format!("need at least two positive widths, got {dims:?}")));
    }
    if grid_size < 2 {
        return Err(KanError::GridTooSmall(grid_size).into());
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let layers = dims
        .windows(2)
        .map(|w| {
            let coeffs: Vec<f64> = (0..w[0] * w[1] * grid_size)
                .map(|_| if sigma == 0.0 { 0.0 } else { normal.sample(&mut rng) })
                .collect();
            KanLayer::from_flat(w[0], w[1], grid_size, Domain::UNIT, &coeffs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KanNetwork::new(layers)?)
}

/// Sparse derivative of a grid's output with respect to its coefficients.
/// Holds one or two `(node, weight)` pairs; weights are nonnegative and sum
/// to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineGradient {
    pub entries: [(usize, f64); 2],
    pub len: usize,
}

impl SplineGradient {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }

    /// Dense form of length `g`.
    pub fn to_dense(&self, g: usize) -> Vec<f64> {
        let mut out = vec![0.0; g];
        for (i, w) in self.iter() {
            out[i] += w;
        }
        out
    }
}

fn interpolation_weights(domain: Domain, g: usize, x: f64) -> SplineGradient {
    let b = bracket(domain, g, x);
    if b.frac == 0.0 {
        SplineGradient { entries: [(b.index, 1.0), (0, 0.0)], len: 1 }
    } else if b.frac == 1.0 {
        SplineGradient { entries: [(b.index + 1, 1.0), (0, 0.0)], len: 1 }
    } else {
        SplineGradient { entries: [(b.index, 1.0 - b.frac), (b.index + 1, b.frac)], len: 2 }
    }
}

/// Derivative of `eval_spline(grid, x)` with respect to the grid's
/// coefficients.
pub fn spline_gradient(grid: &SplineGrid, x: f64) -> Result<SplineGradient, KanError> {
    if !x.is_finite() {
        return Err(KanError::NonFiniteInput(x));
    }
    Ok(interpolation_weights(grid.domain(), grid.len(), x))
}

/// Group-l2,1 penalty of one layer and its gradient, laid out like
/// [`KanLayer::flat_coefficients`]. The subgradient at a zero grid is zero.
pub fn group_l21_penalty(layer: &KanLayer, lambda: f64) -> (f64, Vec<f64>) {
    let g = layer.grid_size();
    let mut grad = vec![0.0; layer.edge_count() * g];
    if lambda == 0.0 {
        return (0.0, grad);
    }
    let mut value = 0.0;
    for (grid, out) in layer.grids().iter().zip(grad.chunks_exact_mut(g)) {
        let norm = grid.norm();
        value += norm;
        if norm >= 1e-12 {
            for (o, c) in out.iter_mut().zip(grid.coefficients()) {
                *o = lambda * c / norm;
            }
        }
    }
    (lambda * value, grad)
}

/// Mean squared error of `net` over a dataset, averaged over samples and
/// outputs.
pub fn mse(net: &KanNetwork, data: &Dataset) -> Result<f64, TrainError> {
    check_input(net, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let out_dim = net.output_dim();
    let mut total = 0.0;
    for n in 0..data.len() {
        let y = net.forward(data.input(n))?;
        total += y.iter().map(|v| (v - data.targets[n]).powi(2)).sum::<f64>();
    }
    Ok(total / (data.len() * out_dim) as f64)
}

fn check_input(net: &KanNetwork, data: &Dataset) -> Result<(), TrainError> {
    if net.input_dim() != data.input_dim {
        return Err(TrainError::InputMismatch { task: data.input_dim, network: net.input_dim() });
    }
    Ok(())
}

/// Objective value and gradient (one flat buffer per layer) over the
/// samples selected by `batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub mse: f64,
    pub penalty: f64,
    pub gradients: Vec<Vec<f64>>,
}

impl LossGradient {
    pub fn total(&self) -> f64 {
        self.mse + self.penalty
    }
}

/// Evaluates `MSE + lambda * sum ||c_ij||` and its analytic gradient over the
/// given sample indices.
pub fn loss_and_gradient(
    net: &KanNetwork,
    data: &Dataset,
    batch: &[usize],
    lambda: f64,
) -> Result<LossGradient, TrainError> {
    check_input(net, data)?;
    let layers = net.layers();
    let mut gradients: Vec<Vec<f64>> =
        layers.iter().map(|l| vec![0.0; l.edge_count() * l.grid_size()]).collect();
    let out_dim = net.output_dim();
    let scale = 1.0 / (batch.len().max(1) * out_dim) as f64;
    let mut sse = 0.0;

    let mut acts: Vec<Vec<f64>> = net.dims().into_iter().map(|w| vec![0.0; w]).collect();
    let mut upstream = vec![0.0; net.max_width()];
    let mut downstream = vec![0.0; net.max_width()];

    for &n in batch {
        acts[0].copy_from_slice(data.input(n));
        for (l, layer) in layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l + 1);
            layer.forward_into(&head[l], &mut tail[0]);
        }
        let y = &acts[layers.len()];
        for (j, yj) in y.iter().enumerate() {
            let r = yj - data.targets[n];
            sse += r * r;
            upstream[j] = 2.0 * r * scale;
        }
        for (l, layer) in layers.iter().enumerate().rev() {
            let x = &acts[l];
            let out = layer.out_dim();
            let g = layer.grid_size();
            let grad = &mut gradients[l];
            for (i, &xi) in x.iter().enumerate() {
                let w = interpolation_weights(layer.domain(), g, xi);
                let mut dx = 0.0;
                for j in 0..out {
                    let e = i * out + j;
                    let delta = upstream[j];
                    for (node, weight) in w.iter() {
                        grad[e * g + node] += delta * weight;
                    }
                    dx += delta * layer.grids()[e].slope_unchecked(xi);
                }
                downstream[i] = dx;
            }
            std::mem::swap(&mut upstream, &mut downstream);
        }
    }

    let mut penalty = 0.0;
    if lambda > 0.0 {
        for (layer, grad) in layers.iter().zip(gradients.iter_mut()) {
            let (value, pgrad) = group_l21_penalty(layer, lambda);
            penalty += value;
            grad.iter_mut().zip(pgrad).for_each(|(a, b)| *a += b);
        }
    }
    Ok(LossGradient { mse: sse * scale, penalty, gradients })
}

/// Adam first/second moment state for every coefficient.
struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamW {
    fn new(net: &KanNetwork) -> Self {
        let zeros: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.edge_count() * l.grid_size()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn update(&mut self, net: &mut KanNetwork, grads: &[Vec<f64>], lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = layer.grid_size();
            for (e, grid) in layer.grids_mut().iter_mut().enumerate() {
                for (n, c) in grid.coefficients_mut().iter_mut().enumerate() {
                    let p = e * g + n;
                    let grad = grads[l][p];
                    let m = &mut self.m[l][p];
                    let v = &mut self.v[l][p];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *c -= lr * (m_hat / (v_hat.sqrt() + self.eps) + weight_decay * *c);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: KanNetwork,
    /// Full-training-set MSE after each epoch.
    pub loss_history: Vec<f64>,
}

/// Fits `net` to the task's training set with mini-batch AdamW.
pub fn train(net: &KanNetwork, task: &SyntheticTask, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let data = task.dataset()?;
    train_on(net, &data, config)
}

/// Like [`train`], on an explicit dataset.
pub fn train_on(net: &KanNetwork, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_input(net, data)?;
    let mut net = net.clone();
    let mut opt = AdamW::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let lg = loss_and_gradient(&net, data, batch, config.l21_lambda)?;
            if !lg.total().is_finite() {
                return Err(TrainError::Diverged { epoch, loss: lg.total() });
            }
            opt.update(&mut net, &lg.gradients, config.learning_rate, config.weight_decay);
        }
        let loss = mse(&net, data)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        history.push(loss);
    }
    Ok(TrainOutcome { network: net, loss_history: history })
}
