//! Lookup-table runtime and model container.
//!
//! A [`Model`] is a chain of layers, each either dense (raw float grids) or
//! compressed (codebook, indices, gains, biases). Models serialize to the
//! `SKAN` binary format, whose header alone determines a byte-exact
//! [`MemoryPlan`]. The forward pass evaluates every edge with one bracket
//! lookup and one linear interpolation regardless of grid resolution, and
//! runs entirely inside a caller-owned [`Workspace`].

mod bench;
mod bitpack;
mod format;
mod model;
mod plan;
mod report;
mod runtime;

use thiserror::Error;

use crate::gsb::VqError;
use crate::kan::KanError;

pub use bench::{bench_iso_latency, write_bench_csv, BenchConfig, LatencyStats};
pub use bitpack::{pack, packed_len, unpack_into};
pub use format::{deserialize, read_header, serialize, FORMAT_VERSION, MAGIC, SECTION_ALIGN};
pub use model::{DenseLayer, Model, ModelLayer};
pub use plan::{index_bits, plan_memory, LayerHeader, LayerPlan, MemoryPlan, ModelHeader, Section, SectionKind};
pub use report::{
    compression_report, reference_scale_estimate, CompressionReport, ReferenceEstimate, ReportRow,
    REFERENCE_COMPRESSED_BYTES, REFERENCE_DENSE_BYTES,
};
pub use runtime::{compressed_forward, compressed_forward_into, pli_lookup, Workspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LuthamError {
    #[error("bad magic {found:?} at offset 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} at offset {offset}")]
    UnsupportedVersion { found: u16, offset: u64 },
    #[error("unsupported endianness tag {found:#04x} at offset {offset}")]
    BadEndianness { found: u8, offset: u64 },
    #[error("truncated {section} section{}: need {needed} bytes at offset {offset}, file has {available}",
        layer.map(|l| format!(" of layer {l}")).unwrap_or_default())]
    Truncated { section: &'static str, layer: Option<usize>, offset: u64, needed: u64, available: u64 },
    #[error("layer {layer} header at offset {offset}: {reason}")]
    InvalidHeader { layer: usize, offset: u64, reason: String },
    #[error("layer {layer}: non-finite {field} at offset {offset}")]
    NonFinite { layer: usize, field: &'static str, offset: u64 },
    #[error("layer {layer}, edge ({i}, {j}): index {index} is not below codebook size {k} (offset {offset})")]
    IndexOutOfRange { layer: usize, i: usize, j: usize, index: u32, k: u32, offset: u64 },
    #[error("memory plan overflows for layer {layer}")]
    PlanOverflow { layer: usize },
    #[error("layer {layer} does not fit: {reason}")]
    Topology { layer: usize, reason: String },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("workspace holds {available} activations per buffer, model needs {needed}")]
    WorkspaceTooSmall { needed: usize, available: usize },
    #[error("codebook index {index} out of range for K = {k}")]
    CodebookIndex { index: usize, k: usize },
    #[error("non-finite input {0}")]
    NonFiniteInput(f32),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Kan(#[from] KanError),
}
