//! `SKAN` v1 binary model format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SKAN"
//! 4       2     format version (1)
//! 6       1     endianness tag 'L'
//! 7       1     reserved, 0
//! 8       4     layer count L
//! 12      4     header bytes (16 + 80 * L)
//! 16      80*L  layer headers
//! ...           payload sections, each starting on a 64-byte boundary
//! ```
//!
//! Layer header (80 bytes, offsets relative to its start):
//!
//! ```text
//! 0  u32 in_dim        4  u32 out_dim        8  u32 grid_size
//! 12 u32 K (0 = dense) 16 u32 flags          20 f32 codebook_scale
//! 24 f32 bias_scale    28 f32 gain_min       32 f32 gain_log_step
//! 36 u32 kmeans_iters  40 f64 domain_lo      48 f64 domain_hi
//! 56 u64 kmeans_seed   64 f64 kmeans_inertia 72 8 reserved bytes, 0
//! ```
//!
//! Flags: bit 0 Int8 codebook, bit 1 log-Int8 gains, bit 2 Int8 biases,
//! bit 3 padded codebook.
//!
//! Sections follow layer order. A dense layer has one section of
//! `E * G` f32 coefficients. A compressed layer has, in order: the codebook
//! (`K * G` f32 or i8), bit-packed indices (`ceil(E * ceil(log2 K) / 8)`
//! bytes, see [`super::bitpack`]), gains (f32 or log-Int8 bytes) and biases
//! (f32 or i8).

use crate::gsb::{BiasTable, Codebook, CodebookEntries, CodebookMeta, CompressedLayer, GainTable, IndexTable};
use crate::kan::Domain;
use crate::quant::{LinearQuantParams, LogQuantParams};

use super::bitpack::{pack, unpack_into};
use super::model::{DenseLayer, Model, ModelLayer};
use super::plan::{
    plan_memory, LayerHeader, ModelHeader, Section, SectionKind, FLAG_CODEBOOK_PADDED, KNOWN_FLAGS,
};
use super::LuthamError;

pub const MAGIC: [u8; 4] = *b"SKAN";
pub const FORMAT_VERSION: u16 = 1;
pub const SECTION_ALIGN: u64 = 64;
const ENDIAN_LITTLE: u8 = b'L';
pub(crate) const FILE_HEADER_BYTES: u64 = 16;
pub(crate) const LAYER_HEADER_BYTES: u64 = 80;

pub(crate) fn align_up(v: u64, align: u64) -> Option<u64> {
    v.checked_add(align - 1).map(|x| x / align * align)
}

pub fn serialize(model: &Model) -> Result<Vec<u8>, LuthamError> {
    let header = model.header();
    let plan = plan_memory(&header)?;
    let mut out = Vec::with_capacity(plan.file_bytes as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(ENDIAN_LITTLE);
    out.push(0);
    out.extend_from_slice(&(header.layers.len() as u32).to_le_bytes());
    let header_bytes = FILE_HEADER_BYTES + LAYER_HEADER_BYTES * header.layers.len() as u64;
    out.extend_from_slice(&(header_bytes as u32).to_le_bytes());
    for h in &header.layers {
        write_layer_header(&mut out, h);
    }

    for (layer, lp) in model.layers().iter().zip(&plan.layers) {
        for section in &lp.sections {
            out.resize(section.offset as usize, 0);
            write_section(&mut out, layer, section.kind);
            debug_assert_eq!(out.len() as u64, section.offset + section.len);
        }
    }
    debug_assert_eq!(out.len() as u64, plan.file_bytes);
    Ok(out)
}

fn write_layer_header(out: &mut Vec<u8>, h: &LayerHeader) {
    for v in [h.in_dim, h.out_dim, h.grid_size, h.k, h.flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [h.codebook_scale, h.bias_scale, h.gain_min, h.gain_log_step] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.kmeans_iterations.to_le_bytes());
    out.extend_from_slice(&h.domain_lo.to_le_bytes());
    out.extend_from_slice(&h.domain_hi.to_le_bytes());
    out.extend_from_slice(&h.kmeans_seed.to_le_bytes());
    out.extend_from_slice(&h.kmeans_inertia.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_i8s(out: &mut Vec<u8>, values: &[i8]) {
    out.extend(values.iter().map(|&v| v as u8));
}

fn write_section(out: &mut Vec<u8>, layer: &ModelLayer, kind: SectionKind) {
    match (layer, kind) {
        (ModelLayer::Dense(d), SectionKind::Coefficients) => put_f32s(out, &d.coefficients),
        (ModelLayer::Compressed(c), SectionKind::Codebook) => match &c.codebook.entries {
            CodebookEntries::Float(v) => put_f32s(out, v),
            CodebookEntries::Int8 { codes, .. } => put_i8s(out, codes),
        },
        (ModelLayer::Compressed(c), SectionKind::Indices) => {
            let bits = super::plan::index_bits(c.codebook.k as u64);
            out.extend_from_slice(&pack(&c.indices.to_vec(), bits));
        }
        (ModelLayer::Compressed(c), SectionKind::Gains) => match &c.gains {
            GainTable::Float(v) => put_f32s(out, v),
            GainTable::LogInt8 { codes, .. } => put_i8s(out, codes),
        },
        (ModelLayer::Compressed(c), SectionKind::Biases) => match &c.biases {
            BiasTable::Float(v) => put_f32s(out, v),
            BiasTable::Int8 { codes, .. } => put_i8s(out, codes),
        },
        _ => unreachable!("section kind does not belong to this layer type"),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, offset: u64, len: u64, section: &'static str, layer: Option<usize>) -> Result<&'a [u8], LuthamError> {
        let available = self.bytes.len() as u64;
        match offset.checked_add(len) {
            Some(end) if end <= available => Ok(&self.bytes[offset as usize..end as usize]),
            _ => Err(LuthamError::Truncated { section, layer, offset, needed: len, available }),
        }
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Parses and validates the file and layer headers without reading any
/// payload.
pub fn read_header(bytes: &[u8]) -> Result<ModelHeader, LuthamError> {
    let r = Reader { bytes };
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(LuthamError::BadMagic { found: bytes[..4].try_into().unwrap() });
    }
    let head = r.slice(0, FILE_HEADER_BYTES, "file header", None)?;
    let version = u16_at(head, 4);
    if version != FORMAT_VERSION {
        return Err(LuthamError::UnsupportedVersion { found: version, offset: 4 });
    }
    if head[6] != ENDIAN_LITTLE {
        return Err(LuthamError::BadEndianness { found: head[6], offset: 6 });
    }
    let count = u32_at(head, 8) as u64;
    let declared = u32_at(head, 12) as u64;
    let expected = FILE_HEADER_BYTES + LAYER_HEADER_BYTES * count;
    if head[7] != 0 || declared != expected {
        return Err(LuthamError::InvalidHeader {
            layer: 0,
            offset: 12,
            reason: format!("header size {declared} does not match {count} layers"),
        });
    }

    let mut layers = Vec::with_capacity(count.min(1 << 16) as usize);
    for l in 0..count as usize {
        let base = FILE_HEADER_BYTES + LAYER_HEADER_BYTES * l as u64;
        let b = r.slice(base, LAYER_HEADER_BYTES, "layer header", Some(l))?;
        let h = LayerHeader {
            in_dim: u32_at(b, 0),
            out_dim: u32_at(b, 4),
            grid_size: u32_at(b, 8),
            k: u32_at(b, 12),
            flags: u32_at(b, 16),
            codebook_scale: f32_at(b, 20),
            bias_scale: f32_at(b, 24),
            gain_min: f32_at(b, 28),
            gain_log_step: f32_at(b, 32),
            kmeans_iterations: u32_at(b, 36),
            domain_lo: f64_at(b, 40),
            domain_hi: f64_at(b, 48),
            kmeans_seed: u64_at(b, 56),
            kmeans_inertia: f64_at(b, 64),
        };
        let invalid = |reason: String| LuthamError::InvalidHeader { layer: l, offset: base, reason };
        if b[72..80].iter().any(|&x| x != 0) {
            return Err(invalid("reserved bytes are not zero".into()));
        }
        if h.in_dim == 0 || h.out_dim == 0 || h.grid_size < 2 {
            return Err(invalid(format!("bad dimensions {}x{} with G = {}", h.in_dim, h.out_dim, h.grid_size)));
        }
        if h.flags & !KNOWN_FLAGS != 0 {
            return Err(invalid(format!("unknown flags {:#x}", h.flags)));
        }
        if h.is_dense() && h.flags != 0 {
            return Err(invalid("uncompressed layer carries compression flags".into()));
        }
        if let Some(prev) = layers.last().map(|p: &LayerHeader| p.out_dim) {
            if prev != h.in_dim {
                return Err(invalid(format!("input width {} after output width {prev}", h.in_dim)));
            }
        }
        let non_finite = |field: &'static str, at: u64| LuthamError::NonFinite { layer: l, field, offset: base + at };
        for (value, field, at) in [(h.domain_lo, "domain_lo", 40), (h.domain_hi, "domain_hi", 48), (h.kmeans_inertia, "kmeans_inertia", 64)] {
            if !value.is_finite() {
                return Err(non_finite(field, at));
            }
        }
        if h.domain_lo >= h.domain_hi {
            return Err(invalid(format!("empty domain [{}, {}]", h.domain_lo, h.domain_hi)));
        }
        let positive = |v: f32| v.is_finite() && v > 0.0;
        if h.codebook_int8() && !positive(h.codebook_scale) {
            return Err(non_finite("codebook_scale", 20));
        }
        if h.biases_int8() && !positive(h.bias_scale) {
            return Err(non_finite("bias_scale", 24));
        }
        if h.gains_int8() && !positive(h.gain_min) {
            return Err(non_finite("gain_min", 28));
        }
        if h.gains_int8() && !positive(h.gain_log_step) {
            return Err(non_finite("gain_log_step", 32));
        }
        layers.push(h);
    }
    Ok(ModelHeader { layers })
}

fn read_f32s(
    bytes: &[u8],
    section: &Section,
    layer: usize,
    field: &'static str,
) -> Result<Vec<f32>, LuthamError> {
    let mut out = Vec::with_capacity(bytes.len() / 4);
    for (n, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(LuthamError::NonFinite { layer, field, offset: section.offset + 4 * n as u64 });
        }
        out.push(v);
    }
    Ok(out)
}

fn read_i8s(bytes: &[u8]) -> Vec<i8> {
    let mut out = Vec::with_capacity(bytes.len());
    out.extend(bytes.iter().map(|&b| b as i8));
    out
}

/// Parses a model. Sizes every buffer from the header's memory plan before
/// reading the payload, allocating each exactly once.
pub fn deserialize(bytes: &[u8]) -> Result<Model, LuthamError> {
    let header = read_header(bytes)?;
    let plan = plan_memory(&header)?;
    let r = Reader { bytes };
    let mut layers = Vec::with_capacity(header.layers.len());

    for (l, (h, lp)) in header.layers.iter().zip(&plan.layers).enumerate() {
        let mut sections = Vec::with_capacity(lp.sections.len());
        for s in &lp.sections {
            sections.push((s, r.slice(s.offset, s.len, s.kind.name(), Some(l))?));
        }
        let domain = Domain::new(h.domain_lo, h.domain_hi)?;
        let (in_dim, out_dim, g) = (h.in_dim as usize, h.out_dim as usize, h.grid_size as usize);

        if h.is_dense() {
            let (s, b) = sections[0];
            let coefficients = read_f32s(b, s, l, "coefficient")?;
            layers.push(ModelLayer::Dense(DenseLayer { in_dim, out_dim, grid_size: g, domain, coefficients }));
            continue;
        }

        let (cb_sec, cb) = sections[0];
        let entries = if h.codebook_int8() {
            CodebookEntries::Int8 { codes: read_i8s(cb), params: LinearQuantParams { scale: h.codebook_scale } }
        } else {
            CodebookEntries::Float(read_f32s(cb, cb_sec, l, "codebook entry")?)
        };

        let (idx_sec, packed) = sections[1];
        let edges = lp.edges as usize;
        let bits = lp.index_bits;
        let indices = if lp.unpacked_index_bytes == 2 * lp.edges {
            let mut t = vec![0u16; edges];
            unpack_into(packed, bits, &mut t);
            IndexTable::U16(t)
        } else {
            let mut t = vec![0u32; edges];
            unpack_into(packed, bits, &mut t);
            IndexTable::U32(t)
        };
        for e in 0..edges {
            let index = indices.get(e);
            if index >= h.k {
                return Err(LuthamError::IndexOutOfRange {
                    layer: l,
                    i: e / out_dim,
                    j: e % out_dim,
                    index,
                    k: h.k,
                    offset: idx_sec.offset + (e as u64 * bits as u64) / 8,
                });
            }
        }

        let (g_sec, gb) = sections[2];
        let gains = if h.gains_int8() {
            GainTable::LogInt8 {
                codes: read_i8s(gb),
                params: LogQuantParams { min_gain: h.gain_min, log_step: h.gain_log_step },
            }
        } else {
            GainTable::Float(read_f32s(gb, g_sec, l, "gain")?)
        };
        let (b_sec, bb) = sections[3];
        let biases = if h.biases_int8() {
            BiasTable::Int8 { codes: read_i8s(bb), params: LinearQuantParams { scale: h.bias_scale } }
        } else {
            BiasTable::Float(read_f32s(bb, b_sec, l, "bias")?)
        };

        let meta = CodebookMeta {
            iterations: h.kmeans_iterations,
            inertia: h.kmeans_inertia,
            seed: h.kmeans_seed,
            padded: h.flags & FLAG_CODEBOOK_PADDED != 0,
        };
        layers.push(ModelLayer::Compressed(CompressedLayer {
            in_dim,
            out_dim,
            grid_size: g,
            domain,
            codebook: Codebook { k: h.k as usize, grid_size: g, entries, meta },
            indices,
            gains,
            biases,
        }));
    }
    Model::new(layers)
}
