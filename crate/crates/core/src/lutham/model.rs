use crate::gsb::{BiasTable, CodebookEntries, CompressedLayer, GainTable};
use crate::kan::{Domain, KanLayer, KanNetwork};

use super::plan::{
    plan_memory, LayerHeader, MemoryPlan, ModelHeader, FLAG_BIASES_INT8, FLAG_CODEBOOK_INT8, FLAG_CODEBOOK_PADDED,
    FLAG_GAINS_LOG_INT8,
};
use super::LuthamError;

/// Uncompressed layer: float32 grids, row-major by `(input, output, node)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid_size: usize,
    pub domain: Domain,
    pub coefficients: Vec<f32>,
}

impl DenseLayer {
    pub fn from_kan(layer: &KanLayer) -> Self {
        Self {
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            grid_size: layer.grid_size(),
            domain: layer.domain(),
            coefficients: layer.flat_coefficients().into_iter().map(|c| c as f32).collect(),
        }
    }

    pub fn to_kan(&self) -> Result<KanLayer, LuthamError> {
        let flat: Vec<f64> = self.coefficients.iter().map(|&c| c as f64).collect();
        Ok(KanLayer::from_flat(self.in_dim, self.out_dim, self.grid_size, self.domain, &flat)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelLayer {
    Dense(DenseLayer),
    Compressed(CompressedLayer),
}

impl ModelLayer {
    pub fn in_dim(&self) -> usize {
        match self {
            ModelLayer::Dense(d) => d.in_dim,
            ModelLayer::Compressed(c) => c.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ModelLayer::Dense(d) => d.out_dim,
            ModelLayer::Compressed(c) => c.out_dim,
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            ModelLayer::Dense(d) => d.grid_size,
            ModelLayer::Compressed(c) => c.grid_size,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            ModelLayer::Dense(d) => d.domain,
            ModelLayer::Compressed(c) => c.domain,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.in_dim() * self.out_dim()
    }

    pub fn header(&self) -> LayerHeader {
        let domain = self.domain();
        let mut h = LayerHeader {
            in_dim: self.in_dim() as u32,
            out_dim: self.out_dim() as u32,
            grid_size: self.grid_size() as u32,
            domain_lo: domain.lo,
            domain_hi: domain.hi,
            ..LayerHeader::default()
        };
        if let ModelLayer::Compressed(c) = self {
            h.k = c.codebook.k as u32;
            h.kmeans_iterations = c.codebook.meta.iterations;
            h.kmeans_seed = c.codebook.meta.seed;
            h.kmeans_inertia = c.codebook.meta.inertia;
            if c.codebook.meta.padded {
                h.flags |= FLAG_CODEBOOK_PADDED;
            }
            if let CodebookEntries::Int8 { params, .. } = &c.codebook.entries {
                h.flags |= FLAG_CODEBOOK_INT8;
                h.codebook_scale = params.scale;
            }
            if let GainTable::LogInt8 { params, .. } = &c.gains {
                h.flags |= FLAG_GAINS_LOG_INT8;
                h.gain_min = params.min_gain;
                h.gain_log_step = params.log_step;
            }
            if let BiasTable::Int8 { params, .. } = &c.biases {
                h.flags |= FLAG_BIASES_INT8;
                h.bias_scale = params.scale;
            }
        }
        h
    }
}

/// A runnable chain of dense and compressed layers. Immutable once built;
/// share it freely across threads, each with its own workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<ModelLayer>,
    /// Decoded log-Int8 gains per layer, indexed by code byte.
    gain_luts: Vec<Option<Box<[f64; 256]>>>,
}

impl Model {
    pub fn new(layers: Vec<ModelLayer>) -> Result<Self, LuthamError> {
        for (l, layer) in layers.iter().enumerate() {
            if layer.in_dim() == 0 || layer.out_dim() == 0 || layer.grid_size() < 2 {
                return Err(LuthamError::Topology { layer: l, reason: "dimensions must be positive and G >= 2".into() });
            }
            if l > 0 && layers[l - 1].out_dim() != layer.in_dim() {
                return Err(LuthamError::Topology {
                    layer: l,
                    reason: format!("input width {} after output width {}", layer.in_dim(), layers[l - 1].out_dim()),
                });
            }
            match layer {
                ModelLayer::Dense(d) => {
                    let expected = d.in_dim * d.out_dim * d.grid_size;
                    if d.coefficients.len() != expected {
                        return Err(LuthamError::Shape { expected, actual: d.coefficients.len() });
                    }
                }
                ModelLayer::Compressed(c) => c.validate()?,
            }
        }
        let gain_luts = layers
            .iter()
            .map(|l| match l {
                ModelLayer::Compressed(CompressedLayer { gains: GainTable::LogInt8 { params, .. }, .. }) => {
                    Some(Box::new(params.decode_table()))
                }
                _ => None,
            })
            .collect();
        Ok(Self { layers, gain_luts })
    }

    /// Wraps a dense network without compression.
    pub fn dense(net: &KanNetwork) -> Self {
        Self::new(net.layers().iter().map(|l| ModelLayer::Dense(DenseLayer::from_kan(l))).collect())
            .expect("a valid network maps to a valid model")
    }

    pub fn compressed(layers: Vec<CompressedLayer>) -> Result<Self, LuthamError> {
        Self::new(layers.into_iter().map(ModelLayer::Compressed).collect())
    }

    pub fn layers(&self) -> &[ModelLayer] {
        &self.layers
    }

    pub(crate) fn gain_lut(&self, layer: usize) -> Option<&[f64; 256]> {
        self.gain_luts[layer].as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, ModelLayer::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, ModelLayer::out_dim)
    }

    pub fn dims(&self) -> Vec<usize> {
        match self.layers.first() {
            None => Vec::new(),
            Some(first) => std::iter::once(first.in_dim()).chain(self.layers.iter().map(ModelLayer::out_dim)).collect(),
        }
    }

    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim().max(l.out_dim())).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(ModelLayer::edge_count).sum()
    }

    pub fn is_dense(&self) -> bool {
        self.layers.iter().all(|l| matches!(l, ModelLayer::Dense(_)))
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader { layers: self.layers.iter().map(ModelLayer::header).collect() }
    }

    pub fn plan(&self) -> Result<MemoryPlan, LuthamError> {
        plan_memory(&self.header())
    }

    /// Rebuilds a dense network (compressed layers reconstructed grid by grid).
    pub fn to_network(&self) -> Result<KanNetwork, LuthamError> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                ModelLayer::Dense(d) => d.to_kan(),
                ModelLayer::Compressed(c) => Ok(c.reconstruct()?),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KanNetwork::new(layers)?)
    }
}
