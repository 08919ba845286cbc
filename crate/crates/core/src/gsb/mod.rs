//! Gain-shape-bias vector quantization of spline layers.
//!
//! Each edge grid `c_ij` is factored as `g_ij * shape_ij + b_ij`, where the
//! bias is the grid mean, the gain its population standard deviation and the
//! shape the resulting zero-mean, unit-variance vector. Shapes of one layer
//! are clustered into a `K x G` codebook; an edge then stores only a codebook
//! index plus its gain and bias:
//!
//! ```text
//! c_hat_ij = g_ij * C[k_ij] + b_ij
//! ```

mod compress;
mod kmeans;
mod normalize;

use thiserror::Error;

use crate::kan::{Domain, KanError, KanLayer, SplineGrid};
use crate::quant::{LinearQuantParams, LogQuantParams, QuantError};

pub use compress::{compress_layer, compress_network, compress_network_with, VqConfig};
pub use kmeans::{assign_indices, kmeans, kmeans_codebook, KMeansConfig, KMeansResult};
pub use normalize::{normalize_grid, normalize_layer, DEGENERATE_GAIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VqError {
    #[error("codebook size must be at least 1")]
    EmptyCodebook,
    #[error("no shapes to cluster")]
    NoShapes,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("edge ({i}, {j}) outside a {in_dim}x{out_dim} layer")]
    EdgeOutOfRange { i: usize, j: usize, in_dim: usize, out_dim: usize },
    #[error("edge {edge}: index {index} is not below codebook size {k}")]
    IndexOutOfRange { edge: usize, index: u32, k: usize },
    #[error("R^2 scopes differ: {originals} originals vs {reconstructions} reconstructions")]
    ScopeMismatch { originals: usize, reconstructions: usize },
    #[error("R^2 undefined: originals have zero variance but reconstruction error is {residual}")]
    UndefinedRSquared { residual: f64 },
    #[error(transparent)]
    Kan(#[from] KanError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Position of an edge inside a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EdgeId {
    pub layer: usize,
    pub i: usize,
    pub j: usize,
}

/// One normalized grid: `shape` has zero mean and unit population variance,
/// or is all zeros when the grid was constant (`gain == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub shape: Vec<f64>,
    pub gain: f64,
    pub bias: f64,
    pub edge_id: EdgeId,
}

/// Provenance of a learned codebook.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CodebookMeta {
    pub iterations: u32,
    pub inertia: f64,
    pub seed: u64,
    /// Set when fewer distinct shapes than `K` existed and trailing rows
    /// duplicate the last learned centroid.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodebookEntries {
    Float(Vec<f32>),
    Int8 { codes: Vec<i8>, params: LinearQuantParams },
}

/// `K x G` shared shape matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub grid_size: usize,
    pub entries: CodebookEntries,
    pub meta: CodebookMeta,
}

impl Codebook {
    pub fn from_rows(k: usize, grid_size: usize, rows: &[f64], meta: CodebookMeta) -> Result<Self, VqError> {
        if k == 0 {
            return Err(VqError::EmptyCodebook);
        }
        if rows.len() != k * grid_size {
            return Err(VqError::Dimension { expected: k * grid_size, actual: rows.len() });
        }
        let entries = CodebookEntries::Float(rows.iter().map(|&v| v as f32).collect());
        Ok(Self { k, grid_size, entries, meta })
    }

    pub fn is_int8(&self) -> bool {
        matches!(self.entries, CodebookEntries::Int8 { .. })
    }

    /// Dequantized row `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        let range = k * self.grid_size..(k + 1) * self.grid_size;
        match &self.entries {
            CodebookEntries::Float(v) => v[range].iter().map(|&x| x as f64).collect(),
            CodebookEntries::Int8 { codes, params } => codes[range].iter().map(|&c| params.dequantize(c)).collect(),
        }
    }

    /// Every row, dequantized and flattened.
    pub fn rows(&self) -> Vec<f64> {
        (0..self.k).flat_map(|k| self.row(k)).collect()
    }
}

/// Codebook indices at native width: 16 bits when `K <= 65,536`, else 32.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexTable {
    U16(Vec<u16>),
    U32(Vec<u32>),
}

impl IndexTable {
    pub fn for_codebook(k: usize, indices: &[u32]) -> Self {
        if k <= 1 << 16 {
            IndexTable::U16(indices.iter().map(|&i| i as u16).collect())
        } else {
            IndexTable::U32(indices.to_vec())
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IndexTable::U16(v) => v.len(),
            IndexTable::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, e: usize) -> u32 {
        match self {
            IndexTable::U16(v) => v[e] as u32,
            IndexTable::U32(v) => v[e],
        }
    }

    pub fn to_vec(&self) -> Vec<u32> {
        (0..self.len()).map(|e| self.get(e)).collect()
    }

    pub fn element_bytes(&self) -> usize {
        match self {
            IndexTable::U16(_) => 2,
            IndexTable::U32(_) => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainTable {
    Float(Vec<f32>),
    LogInt8 { codes: Vec<i8>, params: LogQuantParams },
}

impl GainTable {
    pub fn get(&self, e: usize) -> f64 {
        match self {
            GainTable::Float(v) => v[e] as f64,
            GainTable::LogInt8 { codes, params } => params.decode(codes[e]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GainTable::Float(v) => v.len(),
            GainTable::LogInt8 { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BiasTable {
    Float(Vec<f32>),
    Int8 { codes: Vec<i8>, params: LinearQuantParams },
}

impl BiasTable {
    pub fn get(&self, e: usize) -> f64 {
        match self {
            BiasTable::Float(v) => v[e] as f64,
            BiasTable::Int8 { codes, params } => params.dequantize(codes[e]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BiasTable::Float(v) => v.len(),
            BiasTable::Int8 { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A layer stored as codebook index, gain and bias per edge. Edges follow
/// the dense layer's row-major `(input, output)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid_size: usize,
    pub domain: Domain,
    pub codebook: Codebook,
    pub indices: IndexTable,
    pub gains: GainTable,
    pub biases: BiasTable,
}

impl CompressedLayer {
    pub fn edge_count(&self) -> usize {
        self.in_dim * self.out_dim
    }

    pub fn k(&self) -> usize {
        self.codebook.k
    }

    /// True when codebook, gains and biases are all Int8.
    pub fn is_int8(&self) -> bool {
        self.codebook.is_int8()
            && matches!(self.gains, GainTable::LogInt8 { .. })
            && matches!(self.biases, BiasTable::Int8 { .. })
    }

    /// Checks table lengths and index ranges.
    pub fn validate(&self) -> Result<(), VqError> {
        let e = self.edge_count();
        for len in [self.indices.len(), self.gains.len(), self.biases.len()] {
            if len != e {
                return Err(VqError::Dimension { expected: e, actual: len });
            }
        }
        if self.codebook.grid_size != self.grid_size {
            return Err(VqError::Dimension { expected: self.grid_size, actual: self.codebook.grid_size });
        }
        for edge in 0..e {
            let index = self.indices.get(edge);
            if index as usize >= self.codebook.k {
                return Err(VqError::IndexOutOfRange { edge, index, k: self.codebook.k });
            }
        }
        Ok(())
    }

    fn reconstruct_edge(&self, e: usize) -> Vec<f64> {
        let g = self.gains.get(e);
        let b = self.biases.get(e);
        self.codebook.row(self.indices.get(e) as usize).into_iter().map(|c| g * c + b).collect()
    }

    /// Rebuilds the dense layer `g * C[k] + b` edge by edge.
    pub fn reconstruct(&self) -> Result<KanLayer, VqError> {
        let grids = (0..self.edge_count())
            .map(|e| SplineGrid::new(self.reconstruct_edge(e), self.domain))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KanLayer::new(self.in_dim, self.out_dim, grids)?)
    }
}

/// Reconstructed grid of edge `(i, j)`: `g_ij * C[k_ij] + b_ij`.
pub fn reconstruct_grid(cl: &CompressedLayer, i: usize, j: usize) -> Result<SplineGrid, VqError> {
    if i >= cl.in_dim || j >= cl.out_dim {
        return Err(VqError::EdgeOutOfRange { i, j, in_dim: cl.in_dim, out_dim: cl.out_dim });
    }
    let e = i * cl.out_dim + j;
    let index = cl.indices.get(e);
    if index as usize >= cl.k() {
        return Err(VqError::IndexOutOfRange { edge: e, index, k: cl.k() });
    }
    Ok(SplineGrid::new(cl.reconstruct_edge(e), cl.domain)?)
}

/// Coefficient of determination of a set of reconstructions:
/// `1 - sum ||c - c_hat||^2 / sum ||c - c_bar||^2` with `c_bar` the mean grid
/// over the given scope.
pub fn r_squared(originals: &[SplineGrid], reconstructions: &[SplineGrid]) -> Result<f64, VqError> {
    let a: Vec<&[f64]> = originals.iter().map(SplineGrid::coefficients).collect();
    let b: Vec<&[f64]> = reconstructions.iter().map(SplineGrid::coefficients).collect();
    r_squared_slices(&a, &b)
}

pub(crate) fn r_squared_slices(originals: &[&[f64]], reconstructions: &[&[f64]]) -> Result<f64, VqError> {
    if originals.len() != reconstructions.len() || originals.is_empty() {
        return Err(VqError::ScopeMismatch { originals: originals.len(), reconstructions: reconstructions.len() });
    }
    let g = originals[0].len();
    for c in originals.iter().chain(reconstructions) {
        if c.len() != g {
            return Err(VqError::Dimension { expected: g, actual: c.len() });
        }
    }
    let mut mean = vec![0.0; g];
    for c in originals {
        mean.iter_mut().zip(c.iter()).for_each(|(m, v)| *m += v);
    }
    let n = originals.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let mut residual = 0.0;
    let mut total = 0.0;
    for (c, r) in originals.iter().zip(reconstructions) {
        for ((&v, &w), &m) in c.iter().zip(r.iter()).zip(&mean) {
            residual += (v - w) * (v - w);
            total += (v - m) * (v - m);
        }
    }
    if total == 0.0 {
        return if residual == 0.0 { Ok(1.0) } else { Err(VqError::UndefinedRSquared { residual }) };
    }
    Ok(1.0 - residual / total)
}
