use std::io::{self, Write};

use crate::kan::{dense_layer_bytes, dense_runtime_bytes, KanNetwork};

use super::format::serialize;
use super::model::Model;
use super::plan::{plan_memory, LayerHeader, ModelHeader, FLAG_BIASES_INT8, FLAG_CODEBOOK_INT8, FLAG_GAINS_LOG_INT8};
use super::LuthamError;

/// Published compressed size of the reference detection head, in bytes.
pub const REFERENCE_COMPRESSED_BYTES: u64 = 12_910_000;
/// Published uncompressed runtime size of the same head, in bytes.
pub const REFERENCE_DENSE_BYTES: u64 = 1_130_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub component: &'static str,
    pub bytes: u64,
    /// Dense runtime bytes divided by this component's bytes.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub rows: Vec<ReportRow>,
}

impl CompressionReport {
    pub fn get(&self, component: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.component == component)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "component,bytes,ratio")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.component, r.bytes, r.ratio)?;
        }
        Ok(())
    }
}

/// Sizes of a compressed model against its dense source. Ratios are taken
/// against dense runtime memory (`E * G * 4` bytes).
pub fn compression_report(dense: &KanNetwork, model: &Model) -> Result<CompressionReport, LuthamError> {
    if dense.dims() != model.dims() {
        return Err(LuthamError::Topology {
            layer: 0,
            reason: format!("dense widths {:?} differ from model widths {:?}", dense.dims(), model.dims()),
        });
    }
    for (l, (a, b)) in dense.layers().iter().zip(model.layers()).enumerate() {
        if a.grid_size() != b.grid_size() {
            return Err(LuthamError::Topology {
                layer: l,
                reason: format!("grid size {} differs from {}", b.grid_size(), a.grid_size()),
            });
        }
    }
    let dense_bytes = dense_runtime_bytes(dense);
    let checkpoint = serialize(&Model::dense(dense))?.len() as u64;
    let plan = model.plan()?;
    let sum = |f: fn(&super::plan::LayerPlan) -> u64| plan.layers.iter().map(f).sum::<u64>();
    let components: [(&'static str, u64); 11] = [
        ("dense_runtime", dense_bytes),
        ("dense_checkpoint", checkpoint),
        ("coefficients", sum(|l| l.coefficient_bytes)),
        ("codebook", sum(|l| l.codebook_bytes)),
        ("indices_packed", sum(|l| l.index_bytes)),
        ("indices_unpacked", sum(|l| l.unpacked_index_bytes)),
        ("gains", sum(|l| l.gain_bytes)),
        ("biases", sum(|l| l.bias_bytes)),
        ("compressed_stored", plan.stored_bytes()),
        ("compressed_working_set", plan.working_set_bytes()),
        ("compressed_file", plan.file_bytes),
    ];
    let rows = components
        .into_iter()
        .map(|(component, bytes)| ReportRow {
            component,
            bytes,
            ratio: if bytes == 0 { f64::INFINITY } else { dense_bytes as f64 / bytes as f64 },
        })
        .collect();
    Ok(CompressionReport { rows })
}

/// Storage arithmetic at the reference scale, compared with the published
/// figures.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEstimate {
    pub edges: u64,
    pub k: u64,
    pub grid_size: u64,
    pub codebooks: u64,
    /// Stored bytes per edge for index, gain and bias.
    pub edge_bits: u64,
    pub compressed_bytes: u64,
    pub dense_bytes: u64,
    /// `compressed_bytes / REFERENCE_COMPRESSED_BYTES - 1`.
    pub compressed_rel_diff: f64,
    /// `dense_bytes / REFERENCE_DENSE_BYTES - 1`.
    pub dense_rel_diff: f64,
}

impl ReferenceEstimate {
    /// Human-readable comparison naming every residual discrepancy.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} edges, K = {}, G = {}, {} codebook(s), {} bits/edge\n\
             compressed: {} B computed vs {} B published ({:+.1}%)\n",
            self.edges,
            self.k,
            self.grid_size,
            self.codebooks,
            self.edge_bits,
            self.compressed_bytes,
            REFERENCE_COMPRESSED_BYTES,
            100.0 * self.compressed_rel_diff
        );
        if self.compressed_bytes != REFERENCE_COMPRESSED_BYTES {
            s.push_str(
                "discrepancy: the published compressed size is not reproduced exactly by \
                 edges * bits / 8 + codebook bytes\n",
            );
        }
        s.push_str(&format!(
            "dense: {} B computed (E * G * 4) vs {} B published ({:+.1}%)\n",
            self.dense_bytes,
            REFERENCE_DENSE_BYTES,
            100.0 * self.dense_rel_diff
        ));
        if self.dense_rel_diff.abs() > 0.1 {
            s.push_str(
                "discrepancy: the published dense size is not explained by E * G float32 \
                 coefficients; the published ratio cannot be recomputed from these inputs\n",
            );
        }
        s
    }
}

/// Int8 storage for `edges` edges split evenly over `codebooks` layers, each
/// with its own `K x G` codebook, computed through [`plan_memory`].
pub fn reference_scale_estimate(edges: u64, k: u64, grid_size: u64, codebooks: u64) -> Result<ReferenceEstimate, LuthamError> {
    let codebooks = codebooks.max(1);
    let per_layer = edges / codebooks;
    let layers = (0..codebooks)
        .map(|c| {
            let in_dim = if c + 1 == codebooks { edges - per_layer * c } else { per_layer };
            let narrow = |v: u64| u32::try_from(v).map_err(|_| LuthamError::PlanOverflow { layer: c as usize });
            Ok(LayerHeader {
                in_dim: narrow(in_dim)?,
                out_dim: 1,
                grid_size: narrow(grid_size)?,
                k: narrow(k)?,
                flags: FLAG_CODEBOOK_INT8 | FLAG_GAINS_LOG_INT8 | FLAG_BIASES_INT8,
                domain_lo: -1.0,
                domain_hi: 1.0,
                ..LayerHeader::default()
            })
        })
        .collect::<Result<Vec<_>, LuthamError>>()?;
    let plan = plan_memory(&ModelHeader { layers })?;
    let compressed_bytes = plan.stored_bytes();
    let dense_bytes = dense_layer_bytes(edges, grid_size);
    Ok(ReferenceEstimate {
        edges,
        k,
        grid_size,
        codebooks,
        edge_bits: crate::quant::int8_edge_bits(k),
        compressed_bytes,
        dense_bytes,
        compressed_rel_diff: compressed_bytes as f64 / REFERENCE_COMPRESSED_BYTES as f64 - 1.0,
        dense_rel_diff: dense_bytes as f64 / REFERENCE_DENSE_BYTES as f64 - 1.0,
    })
}
