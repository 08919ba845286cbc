//! Dense Kolmogorov-Arnold layers built from piecewise-linear spline grids.
//!
//! Every edge `(i, j)` of a layer carries a [`SplineGrid`]: `G` coefficient
//! values sampled on a uniform grid over `[domain_lo, domain_hi]`. Output
//! neuron `j` sums the edge functions applied to each input:
//!
//! ```text
//! y_j = sum_i phi_ij(x_i)
//! ```
//!
//! Edge functions interpolate linearly between grid nodes and clamp inputs
//! outside the domain to the nearest endpoint.

use thiserror::Error;

/// Errors raised by grid, layer and network construction or evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KanError {
    #[error("grid needs at least 2 coefficients, got {0}")]
    GridTooSmall(usize),
    #[error("invalid domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("non-finite coefficient at position {0}")]
    NonFiniteCoefficient(usize),
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("network must contain at least one layer")]
    EmptyNetwork,
}

pub type KanResult<T> = Result<T, KanError>;

/// Input range shared by every grid of a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> KanResult<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(KanError::InvalidDomain { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Node spacing for a grid of `g` coefficients.
    #[inline]
    pub fn spacing(&self, g: usize) -> f64 {
        (self.hi - self.lo) / (g - 1) as f64
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Location of an input inside a uniform grid: the left bracketing node and
/// the fractional offset towards the next node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Bracket {
    pub index: usize,
    pub frac: f64,
}

/// Finds the grid cell containing `x` (after clamping). Inputs within a few
/// ulps of a node snap onto it so node evaluation is exact.
#[inline]
pub(crate) fn bracket(domain: Domain, g: usize, x: f64) -> Bracket {
    let x = domain.clamp(x);
    let last = (g - 1) as f64;
    let dx = domain.spacing(g);
    let pos = ((x - domain.lo) / dx).clamp(0.0, last);
    let nearest = pos.round();
    // rounding in (x - lo) / dx is bounded by a few ulps of the domain magnitude
    let tol = 16.0 * f64::EPSILON * ((domain.lo.abs() + domain.hi.abs()) / dx + nearest);
    if (pos - nearest).abs() <= tol {
        let node = nearest as usize;
        return if node == g - 1 {
            Bracket { index: g - 2, frac: 1.0 }
        } else {
            Bracket { index: node, frac: 0.0 }
        };
    }
    let index = (pos.floor() as usize).min(g - 2);
    Bracket { index, frac: pos - index as f64 }
}

#[inline]
pub(crate) fn lerp_at(coefficients: &[f64], b: Bracket) -> f64 {
    if b.frac == 0.0 {
        return coefficients[b.index];
    }
    if b.frac == 1.0 {
        return coefficients[b.index + 1];
    }
    let lo = coefficients[b.index];
    lo + b.frac * (coefficients[b.index + 1] - lo)
}

/// One edge function: coefficient values on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    coefficients: Vec<f64>,
    domain: Domain,
}

impl SplineGrid {
    pub fn new(coefficients: Vec<f64>, domain: Domain) -> KanResult<Self> {
        if coefficients.len() < 2 {
            return Err(KanError::GridTooSmall(coefficients.len()));
        }
        if let Some(pos) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(KanError::NonFiniteCoefficient(pos));
        }
        Ok(Self { coefficients, domain })
    }

    pub fn zeros(g: usize, domain: Domain) -> KanResult<Self> {
        Self::new(vec![0.0; g], domain)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.domain.spacing(self.len())
    }

    /// Input position of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.len() {
            self.domain.hi
        } else {
            self.domain.lo + i as f64 * self.spacing()
        }
    }

    /// Interpolates the grid at `x`, clamping out-of-domain inputs.
    pub fn eval(&self, x: f64) -> KanResult<f64> {
        if !x.is_finite() {
            return Err(KanError::NonFiniteInput(x));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        lerp_at(&self.coefficients, bracket(self.domain, self.len(), x))
    }

    /// Derivative of the edge function with respect to its input. Zero in the
    /// clamped region; at an interior node the right-hand segment is used.
    pub(crate) fn slope_unchecked(&self, x: f64) -> f64 {
        if x < self.domain.lo || x > self.domain.hi {
            return 0.0;
        }
        let b = bracket(self.domain, self.len(), x);
        (self.coefficients[b.index + 1] - self.coefficients[b.index]) / self.spacing()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Interpolates a grid at `x`. Free-function form of [`SplineGrid::eval`].
pub fn eval_spline(grid: &SplineGrid, x: f64) -> KanResult<f64> {
    grid.eval(x)
}

/// A dense layer of `in_dim * out_dim` edges. Grids are stored row-major by
/// `(input, output)`: edge `(i, j)` lives at `i * out_dim + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    grid_size: usize,
    domain: Domain,
    grids: Vec<SplineGrid>,
}

impl KanLayer {
    pub fn new(in_dim: usize, out_dim: usize, grids: Vec<SplineGrid>) -> KanResult<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(KanError::InvalidLayer {
                layer: 0,
                reason: format!("dimensions must be positive, got {in_dim}x{out_dim}"),
            });
        }
        if grids.len() != in_dim * out_dim {
            return Err(KanError::Shape { expected: in_dim * out_dim, actual: grids.len() });
        }
        let grid_size = grids[0].len();
        let domain = grids[0].domain();
        if let Some(edge) = grids.iter().position(|g| g.len() != grid_size || g.domain() != domain) {
            return Err(KanError::InvalidLayer {
                layer: 0,
                reason: format!("edge {edge} does not share grid size {grid_size} and domain"),
            });
        }
        Ok(Self { in_dim, out_dim, grid_size, domain, grids })
    }

    /// Builds a layer from a flat row-major coefficient buffer of length
    /// `in_dim * out_dim * grid_size`.
    pub fn from_flat(
        in_dim: usize,
        out_dim: usize,
        grid_size: usize,
        domain: Domain,
        coefficients: &[f64],
    ) -> KanResult<Self> {
        let expected = in_dim * out_dim * grid_size;
        if coefficients.len() != expected {
            return Err(KanError::Shape { expected, actual: coefficients.len() });
        }
        if grid_size < 2 {
            return Err(KanError::GridTooSmall(grid_size));
        }
        let grids = coefficients
            .chunks_exact(grid_size)
            .map(|c| SplineGrid::new(c.to_vec(), domain))
            .collect::<KanResult<Vec<_>>>()?;
        Self::new(in_dim, out_dim, grids)
    }

    pub fn zeros(in_dim: usize, out_dim: usize, grid_size: usize, domain: Domain) -> KanResult<Self> {
        Self::from_flat(in_dim, out_dim, grid_size, domain, &vec![0.0; in_dim * out_dim * grid_size])
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Number of edges, `in_dim * out_dim`.
    pub fn edge_count(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[SplineGrid] {
        &self.grids
    }

    pub fn grids_mut(&mut self) -> &mut [SplineGrid] {
        &mut self.grids
    }

    #[inline]
    pub fn edge_index(&self, i: usize, j: usize) -> usize {
        i * self.out_dim + j
    }

    pub fn grid(&self, i: usize, j: usize) -> &SplineGrid {
        &self.grids[self.edge_index(i, j)]
    }

    pub fn grid_mut(&mut self, i: usize, j: usize) -> &mut SplineGrid {
        let e = self.edge_index(i, j);
        &mut self.grids[e]
    }

    /// Flat row-major copy of every coefficient.
    pub fn flat_coefficients(&self) -> Vec<f64> {
        self.grids.iter().flat_map(|g| g.coefficients().iter().copied()).collect()
    }

    /// Evaluates `y_j = sum_i phi_ij(x_i)` over every edge.
    pub fn forward(&self, x: &[f64]) -> KanResult<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(KanError::Shape { expected: self.in_dim, actual: x.len() });
        }
        if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(KanError::NonFiniteInput(bad));
        }
        let mut y = vec![0.0; self.out_dim];
        self.forward_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            // every grid of the layer shares G and domain, so one bracket per input
            let b = bracket(self.domain, self.grid_size, xi);
            let row = &self.grids[i * self.out_dim..(i + 1) * self.out_dim];
            for (yj, grid) in y.iter_mut().zip(row) {
                *yj += lerp_at(grid.coefficients(), b);
            }
        }
    }
}

/// Single-layer forward pass. Free-function form of [`KanLayer::forward`].
pub fn layer_forward(layer: &KanLayer, x: &[f64]) -> KanResult<Vec<f64>> {
    layer.forward(x)
}

/// A stack of dense layers with matching adjacent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct KanNetwork {
    layers: Vec<KanLayer>,
}

impl KanNetwork {
    pub fn new(layers: Vec<KanLayer>) -> KanResult<Self> {
        if layers.is_empty() {
            return Err(KanError::EmptyNetwork);
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(KanError::InvalidLayer {
                    layer: l + 1,
                    reason: format!(
                        "input width {} does not match previous output width {}",
                        pair[1].in_dim(),
                        pair[0].out_dim()
                    ),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<KanLayer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths, e.g. `[1, 16, 1]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(KanLayer::out_dim)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(KanLayer::edge_count).sum()
    }

    pub fn coefficient_count(&self) -> usize {
        self.layers.iter().map(|l| l.edge_count() * l.grid_size()).sum()
    }

    pub fn max_width(&self) -> usize {
        self.dims().into_iter().max().unwrap_or(0)
    }

    /// Composes the layers. Intermediate activations outside a layer's
    /// domain saturate at the endpoint values of its grids.
    pub fn forward(&self, x: &[f64]) -> KanResult<Vec<f64>> {
        let mut act = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            let mut next = vec![0.0; layer.out_dim()];
            layer.forward_into(&act, &mut next);
            act = next;
        }
        Ok(act)
    }
}

/// Network forward pass. Free-function form of [`KanNetwork::forward`].
pub fn network_forward(net: &KanNetwork, x: &[f64]) -> KanResult<Vec<f64>> {
    net.forward(x)
}

/// Bytes needed to hold every grid as float32: `sum(E * G * 4)`.
pub fn dense_runtime_bytes(net: &KanNetwork) -> u64 {
    net.layers().iter().map(|l| dense_layer_bytes(l.edge_count() as u64, l.grid_size() as u64)).sum()
}

pub fn dense_layer_bytes(edges: u64, grid_size: u64) -> u64 {
    edges * grid_size * 4
}
