use std::io::Write;
use std::path::Path;

use holoquant_core::analysis::reconstruction_r_squared;
use holoquant_core::gsb::{compress_network, CompressedLayer, VqConfig};
use holoquant_core::lutham::{index_bits, Model};
use holoquant_core::quant::{int8_edge_bits, quantize_compressed_layer};

use crate::error::{CliError, CliResult};
use crate::io::{load_model, save_model, thousands, write_with};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub iterations: usize,
    pub int8: bool,
}

/// Stored bits per edge for index, gain and bias.
fn edge_bits(k: u64, int8: bool) -> u64 {
    if int8 {
        int8_edge_bits(k)
    } else {
        index_bits(k) as u64 + 64
    }
}

pub fn run(model_path: &Path, opts: Options, out_dir: &Path) -> CliResult<()> {
    if opts.k < 1 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if opts.restarts < 1 || opts.iterations < 1 {
        return Err(CliError::Usage("--restarts and --iterations must be at least 1".into()));
    }
    let model = load_model(model_path)?;
    if !model.is_dense() {
        return Err(CliError::Data(format!("{} is already compressed", model_path.display())));
    }
    let net = model.to_network().map_err(|e| CliError::data(model_path.display(), e))?;
    let vq = VqConfig { max_iterations: opts.iterations, batch_size: 4096, seed: opts.seed, restarts: opts.restarts };
    let mut layers = compress_network(&net, opts.k, &vq).map_err(|e| CliError::data("compression", e))?;
    if opts.int8 {
        layers = layers
            .iter()
            .map(quantize_compressed_layer)
            .collect::<Result<Vec<CompressedLayer>, _>>()
            .map_err(|e| CliError::data("int8 quantization", e))?;
    }
    let r2 = reconstruction_r_squared(&net, &layers).map_err(|e| CliError::data("R^2", e))?;
    let compressed = Model::compressed(layers).map_err(|e| CliError::Internal(e.to_string()))?;
    let plan = compressed.plan().map_err(|e| CliError::Internal(e.to_string()))?;
    let dense_bytes = model.plan().map_err(|e| CliError::Internal(e.to_string()))?.stored_bytes();

    let out_path = out_dir.join("compressed.skan");
    save_model(&compressed, &out_path)?;
    let csv_path = write_with(&out_dir.join("r_squared.csv"), |w| {
        writeln!(w, "layer,r_squared")?;
        for (l, v) in r2.per_layer.iter().enumerate() {
            writeln!(w, "{l},{v}")?;
        }
        if let Some(a) = r2.aggregate {
            writeln!(w, "aggregate,{a}")?;
        }
        Ok(())
    })?;

    println!("K = {}, restarts = {}, seed = {}{}", opts.k, opts.restarts, opts.seed, if opts.int8 { ", int8" } else { "" });
    println!("per-edge storage: {} bits", edge_bits(opts.k as u64, opts.int8));
    for (l, v) in r2.per_layer.iter().enumerate() {
        println!("layer {l} R^2: {v}");
    }
    match r2.aggregate {
        Some(a) => println!("aggregate R^2: {a}"),
        None => println!("aggregate R^2: undefined"),
    }
    let stored = plan.stored_bytes();
    println!(
        "stored: {} B vs {} B dense ({:.2}x)",
        thousands(stored),
        thousands(dense_bytes),
        dense_bytes as f64 / stored as f64
    );
    println!("wrote {}", out_path.display());

    let mut m = Manifest::new("compress");
    m.input(model_path)
        .output(&out_path)
        .output(&csv_path)
        .seed("kmeans", opts.seed)
        .param("k", opts.k as i64)
        .param("restarts", opts.restarts as i64)
        .param("iterations", opts.iterations as i64)
        .param("int8", opts.int8);
    m.write(out_dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_edge_bits() {
        assert_eq!(edge_bits(65_536, true), 32);
        assert_eq!(edge_bits(16, false), 68);
        assert_eq!(edge_bits(1, true), 16);
    }
}
