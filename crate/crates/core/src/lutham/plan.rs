//! Ahead-of-time memory planning.
//!
//! Every buffer the runtime needs is sized from the model header alone, so
//! a loader can reserve all memory before touching the payload and the
//! forward pass never allocates.

use super::bitpack::packed_len;
use super::format::{align_up, FILE_HEADER_BYTES, LAYER_HEADER_BYTES, SECTION_ALIGN};
use super::LuthamError;

/// Bits per codebook index: `ceil(log2 K)`, with 0 for `K <= 1`.
pub fn index_bits(k: u64) -> u32 {
    if k <= 1 {
        0
    } else {
        64 - (k - 1).leading_zeros()
    }
}

pub(crate) const FLAG_CODEBOOK_INT8: u32 = 1;
pub(crate) const FLAG_GAINS_LOG_INT8: u32 = 1 << 1;
pub(crate) const FLAG_BIASES_INT8: u32 = 1 << 2;
pub(crate) const FLAG_CODEBOOK_PADDED: u32 = 1 << 3;
pub(crate) const KNOWN_FLAGS: u32 = 0b1111;

/// Fixed-size description of one layer, as stored in the model header.
/// `k == 0` marks an uncompressed layer holding raw float coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerHeader {
    pub in_dim: u32,
    pub out_dim: u32,
    pub grid_size: u32,
    pub k: u32,
    pub flags: u32,
    pub codebook_scale: f32,
    pub bias_scale: f32,
    pub gain_min: f32,
    pub gain_log_step: f32,
    pub kmeans_iterations: u32,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub kmeans_seed: u64,
    pub kmeans_inertia: f64,
}

impl LayerHeader {
    pub fn is_dense(&self) -> bool {
        self.k == 0
    }

    pub fn edges(&self) -> u64 {
        self.in_dim as u64 * self.out_dim as u64
    }

    pub fn codebook_int8(&self) -> bool {
        self.flags & FLAG_CODEBOOK_INT8 != 0
    }

    pub fn gains_int8(&self) -> bool {
        self.flags & FLAG_GAINS_LOG_INT8 != 0
    }

    pub fn biases_int8(&self) -> bool {
        self.flags & FLAG_BIASES_INT8 != 0
    }

    pub fn index_bits(&self) -> u32 {
        index_bits(self.k as u64)
    }

    /// Width of the unpacked runtime index table.
    pub fn index_element_bytes(&self) -> u64 {
        if self.k as u64 <= 1 << 16 {
            2
        } else {
            4
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelHeader {
    pub layers: Vec<LayerHeader>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    Coefficients,
    Codebook,
    Indices,
    Gains,
    Biases,
}

impl SectionKind {
    pub fn name(self) -> &'static str {
        match self {
            SectionKind::Coefficients => "coefficients",
            SectionKind::Codebook => "codebook",
            SectionKind::Indices => "indices",
            SectionKind::Gains => "gains",
            SectionKind::Biases => "biases",
        }
    }
}

/// One payload section: absolute file offset (64-byte aligned) and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Section {
    pub kind: SectionKind,
    pub offset: u64,
    pub len: u64,
}

/// Byte-exact buffer sizes for one layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerPlan {
    pub edges: u64,
    pub grid_size: u64,
    pub k: u64,
    pub index_bits: u32,
    /// Raw float grids; non-zero only for uncompressed layers.
    pub coefficient_bytes: u64,
    pub codebook_bytes: u64,
    /// Bit-packed indices as stored in the file.
    pub index_bytes: u64,
    /// Native-width index table built at load time.
    pub unpacked_index_bytes: u64,
    pub gain_bytes: u64,
    /// Decode table for log-Int8 gains.
    pub gain_lut_bytes: u64,
    pub bias_bytes: u64,
    /// One sample's output activations.
    pub activation_bytes: u64,
    pub sections: Vec<Section>,
}

impl LayerPlan {
    /// Bytes stored on disk for this layer (packed indices).
    pub fn stored_bytes(&self) -> u64 {
        self.coefficient_bytes + self.codebook_bytes + self.index_bytes + self.gain_bytes + self.bias_bytes
    }

    /// Bytes resident at run time (unpacked indices plus decode tables).
    pub fn resident_bytes(&self) -> u64 {
        self.coefficient_bytes
            + self.codebook_bytes
            + self.unpacked_index_bytes
            + self.gain_bytes
            + self.gain_lut_bytes
            + self.bias_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryPlan {
    pub layers: Vec<LayerPlan>,
    /// Widest activation vector, including the network input.
    pub max_width: u64,
    /// Activation double buffer of f64 values: `2 * max_width * 8`.
    pub scratch_bytes: u64,
    /// Sum of every section length.
    pub payload_bytes: u64,
    /// Header, padding and payload.
    pub file_bytes: u64,
}

impl MemoryPlan {
    /// Compressed size counting packed indices (the on-disk convention).
    pub fn stored_bytes(&self) -> u64 {
        self.layers.iter().map(LayerPlan::stored_bytes).sum()
    }

    /// Everything the forward pass touches: model tables plus scratch.
    pub fn working_set_bytes(&self) -> u64 {
        self.layers.iter().map(LayerPlan::resident_bytes).sum::<u64>() + self.scratch_bytes
    }
}

fn overflow(layer: usize) -> LuthamError {
    LuthamError::PlanOverflow { layer }
}

/// Derives every buffer size and section offset from the header.
pub fn plan_memory(header: &ModelHeader) -> Result<MemoryPlan, LuthamError> {
    let n = header.layers.len() as u64;
    let header_bytes = LAYER_HEADER_BYTES
        .checked_mul(n)
        .and_then(|b| b.checked_add(FILE_HEADER_BYTES))
        .ok_or_else(|| overflow(0))?;
    let mut cursor = header_bytes;
    let mut payload = 0u64;
    let mut plans = Vec::with_capacity(header.layers.len());
    let mut max_width = header.layers.first().map_or(0, |l| l.in_dim as u64);

    for (l, h) in header.layers.iter().enumerate() {
        let e = h.edges();
        let g = h.grid_size as u64;
        let k = h.k as u64;
        let mul = |a: u64, b: u64| a.checked_mul(b).ok_or_else(|| overflow(l));
        let mut plan = LayerPlan {
            edges: e,
            grid_size: g,
            k,
            index_bits: h.index_bits(),
            activation_bytes: mul(h.out_dim as u64, 4)?,
            ..LayerPlan::default()
        };
        max_width = max_width.max(h.in_dim as u64).max(h.out_dim as u64);

        let mut sizes: Vec<(SectionKind, u64)> = Vec::with_capacity(4);
        if h.is_dense() {
            plan.coefficient_bytes = mul(mul(e, g)?, 4)?;
            sizes.push((SectionKind::Coefficients, plan.coefficient_bytes));
        } else {
            plan.codebook_bytes = mul(mul(k, g)?, if h.codebook_int8() { 1 } else { 4 })?;
            plan.index_bytes = packed_len(e, plan.index_bits).ok_or_else(|| overflow(l))?;
            plan.unpacked_index_bytes = mul(e, h.index_element_bytes())?;
            plan.gain_bytes = mul(e, if h.gains_int8() { 1 } else { 4 })?;
            plan.gain_lut_bytes = if h.gains_int8() { 256 * 8 } else { 0 };
            plan.bias_bytes = mul(e, if h.biases_int8() { 1 } else { 4 })?;
            sizes.extend([
                (SectionKind::Codebook, plan.codebook_bytes),
                (SectionKind::Indices, plan.index_bytes),
                (SectionKind::Gains, plan.gain_bytes),
                (SectionKind::Biases, plan.bias_bytes),
            ]);
        }
        for (kind, len) in sizes {
            let offset = align_up(cursor, SECTION_ALIGN).ok_or_else(|| overflow(l))?;
            cursor = offset.checked_add(len).ok_or_else(|| overflow(l))?;
            payload = payload.checked_add(len).ok_or_else(|| overflow(l))?;
            plan.sections.push(Section { kind, offset, len });
        }
        plans.push(plan);
    }
    let scratch_bytes = max_width.checked_mul(16).ok_or_else(|| overflow(0))?;
    Ok(MemoryPlan { layers: plans, max_width, scratch_bytes, payload_bytes: payload, file_bytes: cursor })
}
