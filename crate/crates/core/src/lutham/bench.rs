use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::runtime::{compressed_forward_into, Workspace};
use super::LuthamError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    /// Samples per timed forward call.
    pub batch: usize,
    /// Untimed calls per model before measuring.
    pub warmup: usize,
    /// Timed calls per model.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { batch: 64, warmup: 20, repeats: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub grid_size: usize,
    pub median_us: f64,
    pub p25_us: f64,
    pub p75_us: f64,
    /// Interpolations per edge in one forward call; 1 by construction.
    pub interpolations_per_edge: f64,
}

/// Linear-interpolated quantile of sorted samples.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Times the same random batch through every model. Calls are interleaved
/// round-robin so drift in machine state hits all models alike. The models
/// must share layer widths and differ only in grid size.
pub fn bench_iso_latency(models: &[Model], config: &BenchConfig) -> Result<Vec<LatencyStats>, LuthamError> {
    let Some(first) = models.first() else {
        return Ok(Vec::new());
    };
    if first.is_empty() {
        return Err(LuthamError::Topology { layer: 0, reason: "model has no layers".into() });
    }
    for m in &models[1..] {
        if m.dims() != first.dims() {
            return Err(LuthamError::Topology {
                layer: 0,
                reason: format!("widths {:?} differ from {:?}", m.dims(), first.dims()),
            });
        }
    }
    let repeats = config.repeats.max(1);
    let domain = first.layers()[0].domain();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inputs: Vec<f32> = (0..config.batch * first.input_dim())
        .map(|_| rng.random_range(domain.lo..domain.hi) as f32)
        .collect();
    let mut outputs = vec![0.0f32; config.batch * first.output_dim()];
    let mut workspaces = models.iter().map(Workspace::for_model).collect::<Result<Vec<_>, _>>()?;
    let mut samples = vec![Vec::with_capacity(repeats); models.len()];

    for _ in 0..config.warmup {
        for (m, ws) in models.iter().zip(&mut workspaces) {
            compressed_forward_into(m, &inputs, &mut outputs, ws)?;
        }
    }
    for ws in &mut workspaces {
        ws.interpolations = 0;
    }
    for _ in 0..repeats {
        for ((m, ws), s) in models.iter().zip(&mut workspaces).zip(&mut samples) {
            let start = Instant::now();
            compressed_forward_into(m, &inputs, &mut outputs, ws)?;
            s.push(start.elapsed().as_secs_f64() * 1e6);
        }
    }

    Ok(models
        .iter()
        .zip(samples)
        .zip(&workspaces)
        .map(|((m, mut s), ws)| {
            s.sort_by(f64::total_cmp);
            let calls = (repeats * config.batch) as f64;
            LatencyStats {
                grid_size: m.layers()[0].grid_size(),
                median_us: quantile(&s, 0.5),
                p25_us: quantile(&s, 0.25),
                p75_us: quantile(&s, 0.75),
                interpolations_per_edge: if calls == 0.0 {
                    0.0
                } else {
                    ws.interpolations as f64 / calls / m.edge_count() as f64
                },
            }
        })
        .collect())
}

pub fn write_bench_csv<W: Write>(stats: &[LatencyStats], mut w: W) -> io::Result<()> {
    writeln!(w, "G,median_us,p25_us,p75_us")?;
    for s in stats {
        writeln!(w, "{},{},{},{}", s.grid_size, s.median_us, s.p25_us, s.p75_us)?;
    }
    Ok(())
}
