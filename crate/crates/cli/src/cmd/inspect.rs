use std::fmt::Write as _;
use std::path::Path;

use holoquant_core::kan::dense_layer_bytes;
use holoquant_core::lutham::{deserialize, read_header, LayerHeader, Model, ModelLayer, FORMAT_VERSION};
use holoquant_core::quant::int8_edge_bits;

use crate::error::{CliError, CliResult};
use crate::io::{thousands, write_with};
use crate::manifest::Manifest;

fn bytes(n: u64) -> String {
    format!("{} B", thousands(n))
}

fn flags(h: &LayerHeader) -> String {
    let mut parts = Vec::new();
    if h.codebook_int8() {
        parts.push("codebook int8");
    }
    if h.gains_int8() {
        parts.push("gains log-int8");
    }
    if h.biases_int8() {
        parts.push("biases int8");
    }
    if parts.is_empty() {
        "float32".into()
    } else {
        parts.join(", ")
    }
}

/// Human-readable dump of a parsed model file.
pub fn render(model: &Model, file_len: u64) -> CliResult<String> {
    let plan = model.plan().map_err(|e| CliError::Internal(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "format: SKAN v{FORMAT_VERSION}, {} layer(s), {}", model.layers().len(), bytes(file_len));
    let _ = writeln!(s, "widths: {:?}", model.dims());
    let mut dense_total = 0;
    for (l, (layer, lp)) in model.layers().iter().zip(&plan.layers).enumerate() {
        let h = layer.header();
        dense_total += dense_layer_bytes(lp.edges, lp.grid_size);
        let _ = writeln!(
            s,
            "layer {l}: {} -> {}, G = {}, E = {}, domain [{}, {}]",
            h.in_dim, h.out_dim, h.grid_size, lp.edges, h.domain_lo, h.domain_hi
        );
        match layer {
            ModelLayer::Dense(_) => {
                let _ = writeln!(s, "  K = 0 (uncompressed)");
                let _ = writeln!(s, "  coefficients: {}", bytes(lp.coefficient_bytes));
            }
            ModelLayer::Compressed(_) => {
                let int8 = h.codebook_int8() && h.gains_int8() && h.biases_int8();
                let edge_bits = if int8 { int8_edge_bits(lp.k) } else { lp.index_bits as u64 + 64 };
                let _ = writeln!(s, "  K = {}, {}", h.k, flags(&h));
                let _ = writeln!(s, "  codebook: {}", bytes(lp.codebook_bytes));
                let _ = writeln!(
                    s,
                    "  indices: {} packed ({} bits/edge), {} unpacked",
                    bytes(lp.index_bytes),
                    lp.index_bits,
                    bytes(lp.unpacked_index_bytes)
                );
                let _ = writeln!(s, "  gains: {}", bytes(lp.gain_bytes));
                if lp.gain_lut_bytes > 0 {
                    let _ = writeln!(s, "  gain decode table: {}", bytes(lp.gain_lut_bytes));
                }
                let _ = writeln!(s, "  biases: {}", bytes(lp.bias_bytes));
                let _ = writeln!(s, "  per-edge storage: {edge_bits} bits");
                if h.codebook_int8() {
                    let _ = writeln!(s, "  codebook scale: {}", h.codebook_scale);
                }
                if h.biases_int8() {
                    let _ = writeln!(s, "  bias scale: {}", h.bias_scale);
                }
                if h.gains_int8() {
                    let _ = writeln!(s, "  gain min: {}, log step: {}", h.gain_min, h.gain_log_step);
                }
                let _ = writeln!(
                    s,
                    "  k-means: seed {}, {} iterations, inertia {}",
                    h.kmeans_seed, h.kmeans_iterations, h.kmeans_inertia
                );
            }
        }
        let _ = writeln!(s, "  stored: {}", bytes(lp.stored_bytes()));
    }
    let _ = writeln!(s, "memory plan:");
    let _ = writeln!(s, "  max width: {}", plan.max_width);
    let _ = writeln!(s, "  scratch: {}", bytes(plan.scratch_bytes));
    let _ = writeln!(s, "  payload: {}", bytes(plan.payload_bytes));
    let _ = writeln!(s, "  stored: {}", bytes(plan.stored_bytes()));
    let _ = writeln!(s, "  working set: {}", bytes(plan.working_set_bytes()));
    let _ = writeln!(s, "  file: {}", bytes(plan.file_bytes));
    let _ = writeln!(s, "dense equivalent: {}", bytes(dense_total));
    if model.is_dense() {
        let _ = writeln!(s, "compression ratio: uncompressed");
    } else {
        let stored = plan.stored_bytes();
        let _ = writeln!(s, "compression ratio: {:.2}x stored", dense_total as f64 / stored as f64);
        let _ = writeln!(
            s,
            "compression ratio: {:.2}x working set",
            dense_total as f64 / plan.working_set_bytes() as f64
        );
    }
    Ok(s)
}

pub fn run(model_path: &Path, out_dir: &Path) -> CliResult<()> {
    let data = std::fs::read(model_path)
        .map_err(|e| CliError::data(format!("cannot read model {}", model_path.display()), e))?;
    // header errors carry the offset of the first bad field
    read_header(&data).map_err(|e| CliError::data(model_path.display(), e))?;
    let model = deserialize(&data).map_err(|e| CliError::data(model_path.display(), e))?;
    let text = render(&model, data.len() as u64)?;
    print!("{text}");
    let out_path = write_with(&out_dir.join("inspect.txt"), |w| {
        w.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    let mut m = Manifest::new("inspect");
    m.input(model_path).output(&out_path);
    m.write(out_dir)?;
    Ok(())
}
