use std::path::{Path, PathBuf};

use holoquant_core::lutham::{bench_iso_latency, write_bench_csv, BenchConfig};

use crate::error::{CliError, CliResult};
use crate::io::{load_model, write_with};
use crate::manifest::Manifest;

pub fn run(model_paths: &[PathBuf], config: BenchConfig, out_dir: &Path) -> CliResult<()> {
    if model_paths.len() < 2 {
        return Err(CliError::Usage("bench needs at least two models".into()));
    }
    if config.batch == 0 || config.repeats == 0 {
        return Err(CliError::Usage("--batch and --repeats must be at least 1".into()));
    }
    let models = model_paths.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
    let stats = bench_iso_latency(&models, &config).map_err(|e| CliError::data("bench", e))?;

    let csv_path = write_with(&out_dir.join("bench.csv"), |w| write_bench_csv(&stats, w))?;
    for (s, p) in stats.iter().zip(model_paths) {
        println!(
            "G = {:>4}: median {:.3} us (p25 {:.3}, p75 {:.3}), {} interpolation(s)/edge  [{}]",
            s.grid_size,
            s.median_us,
            s.p25_us,
            s.p75_us,
            s.interpolations_per_edge,
            p.display()
        );
    }
    let max = stats.iter().map(|s| s.median_us).fold(f64::NEG_INFINITY, f64::max);
    let min = stats.iter().map(|s| s.median_us).fold(f64::INFINITY, f64::min);
    println!("median ratio (max/min): {:.3}", max / min);

    let mut m = Manifest::new("bench");
    for p in model_paths {
        m.input(p);
    }
    m.output(&csv_path)
        .seed("inputs", config.seed)
        .param("batch", config.batch as i64)
        .param("warmup", config.warmup as i64)
        .param("repeats", config.repeats as i64);
    m.write(out_dir)?;
    Ok(())
}
