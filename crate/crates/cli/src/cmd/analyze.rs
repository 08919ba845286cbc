use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use holoquant_core::analysis::{
    codebook_ablation, coefficient_spectrum, prune_budget_bits, pruning_sweep, pruning_vs_vq, write_comparison_csv,
    write_spectrum_csv, write_sweep_csv, AblationConfig, CompareConfig, SpectrumReport,
};
use holoquant_core::kan::KanNetwork;
use holoquant_core::trainer::{mse, Dataset};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{load_model, write_with};
use crate::manifest::Manifest;

/// MSE multiple of the unpruned baseline that counts as collapse.
const CLIFF_FACTOR: f64 = 5.0;
/// R^2 at which the ablation summary calls the codebook saturated.
const SATURATED_R2: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Spectrum,
    PruneSweep,
    Ablation,
    PruneVsVq,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Spectrum => "spectrum",
            Mode::PruneSweep => "prune-sweep",
            Mode::Ablation => "ablation",
            Mode::PruneVsVq => "prune-vs-vq",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<Vec<usize>>,
    pub restarts: Option<usize>,
}

fn analysis_err(e: impl std::fmt::Display) -> CliError {
    CliError::data("analysis", e)
}

fn spectrum_lines(label: &str, r: &SpectrumReport, out: &mut String) {
    let _ = writeln!(out, "{label} rank-1: {:.1}% at r=1", 100.0 * r.fraction_at(1));
    for &(p, rank) in &r.thresholds {
        let _ = writeln!(out, "{label} {:.0}% variance at r={rank}", 100.0 * p);
    }
}

/// Test samples named by the config: the held-out split when `task.test`
/// is set, else the whole dataset.
fn test_set(config: &Config) -> CliResult<Dataset> {
    let task = config.task()?;
    if config.task.test > 0 {
        Ok(task.train_test(config.task.test).map_err(|e| CliError::data("task", e))?.1)
    } else {
        task.dataset().map_err(|e| CliError::data("task", e))
    }
}

pub fn run(
    model_path: &Path,
    mode: Mode,
    config_path: Option<&Path>,
    overrides: Overrides,
    out_dir: &Path,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let net = model.to_network().map_err(|e| CliError::data(model_path.display(), e))?;
    let config = match config_path {
        Some(p) => {
            let mut c = Config::load(p)?;
            if let Some(seed) = overrides.seed {
                c.override_seed(seed);
            }
            if let Some(k) = &overrides.k {
                c.analyze.ks = k.clone();
            }
            if let Some(r) = overrides.restarts {
                c.analyze.restarts = r;
            }
            Some(c)
        }
        None if mode == Mode::Spectrum => None,
        None => return Err(CliError::Usage(format!("--mode {} needs --config", mode.name()))),
    };
    if let Some(c) = &config {
        if c.task.input_dim != net.input_dim() {
            return Err(CliError::Data(format!(
                "model input width {} differs from task.input_dim {}",
                net.input_dim(),
                c.task.input_dim
            )));
        }
    }

    let mut summary = format!("mode: {}\nmodel: {}\n", mode.name(), model_path.display());
    let mut outputs: Vec<PathBuf> = Vec::new();
    match (mode, &config) {
        (Mode::Spectrum, _) => spectrum(&net, out_dir, &mut summary, &mut outputs)?,
        (Mode::PruneSweep, Some(c)) => prune_sweep(&net, c, out_dir, &mut summary, &mut outputs)?,
        (Mode::Ablation, Some(c)) => ablation(&net, c, out_dir, &mut summary, &mut outputs)?,
        (Mode::PruneVsVq, Some(c)) => prune_vs_vq(&net, c, out_dir, &mut summary, &mut outputs)?,
        _ => unreachable!("config presence checked above"),
    }
    print!("{summary}");
    let summary_path = out_dir.join(format!("{}.summary.txt", mode.name()));
    outputs.push(write_with(&summary_path, |w| {
        w.extend_from_slice(summary.as_bytes());
        Ok(())
    })?);

    let mut m = Manifest::new("analyze");
    m.input(model_path).param("mode", mode.name());
    if let Some(p) = config_path {
        m.input(p);
    }
    for p in &outputs {
        m.output(p);
    }
    if let Some(c) = &config {
        m.seed("task", c.task.seed);
        for (n, s) in c.analyze.seeds.iter().enumerate() {
            m.seed(&format!("analysis_{n}"), *s);
        }
    }
    m.config = config;
    m.write(out_dir)?;
    Ok(())
}

fn spectrum(net: &KanNetwork, out_dir: &Path, summary: &mut String, outputs: &mut Vec<PathBuf>) -> CliResult<()> {
    let (raw, centered) = coefficient_spectrum(net).map_err(analysis_err)?;
    outputs.push(write_with(&out_dir.join("spectrum.csv"), |w| write_spectrum_csv(&raw, w))?);
    outputs.push(write_with(&out_dir.join("spectrum_centered.csv"), |w| write_spectrum_csv(&centered, w))?);
    let g = net.layers().first().map_or(0, |l| l.grid_size());
    let _ = writeln!(summary, "matrix: {} edges x {g} nodes", net.edge_count());
    spectrum_lines("raw", &raw, summary);
    spectrum_lines("centered", &centered, summary);
    Ok(())
}

fn prune_sweep(
    net: &KanNetwork,
    c: &Config,
    out_dir: &Path,
    summary: &mut String,
    outputs: &mut Vec<PathBuf>,
) -> CliResult<()> {
    let test = test_set(c)?;
    let seed = c.analyze.seeds.first().copied().unwrap_or(0);
    let curve = pruning_sweep(net, &test, &c.analyze.sparsities, seed, &c.task.function).map_err(analysis_err)?;
    outputs.push(write_with(&out_dir.join("prune_sweep.csv"), |w| write_sweep_csv(std::slice::from_ref(&curve), w))?);
    let baseline = mse(net, &test).map_err(analysis_err)?;
    let _ = writeln!(summary, "baseline MSE: {baseline}");
    for (x, y) in curve.x.iter().zip(&curve.y) {
        let _ = writeln!(summary, "sparsity {x}: MSE {y} ({:.2}x baseline)", y / baseline);
    }
    match curve.x.iter().zip(&curve.y).find(|(_, y)| **y >= CLIFF_FACTOR * baseline) {
        Some((x, _)) => {
            let _ = writeln!(summary, "{CLIFF_FACTOR}x baseline MSE first crossed at sparsity {x}");
        }
        None => {
            let _ = writeln!(summary, "{CLIFF_FACTOR}x baseline MSE not crossed");
        }
    }
    Ok(())
}

fn ablation(
    net: &KanNetwork,
    c: &Config,
    out_dir: &Path,
    summary: &mut String,
    outputs: &mut Vec<PathBuf>,
) -> CliResult<()> {
    if c.analyze.ks.contains(&0) {
        return Err(CliError::Usage("codebook sizes must be at least 1".into()));
    }
    let test = test_set(c)?;
    let config = AblationConfig { restarts: c.analyze.restarts.max(1), ..AblationConfig::default() };
    let curves =
        codebook_ablation(net, &test, &c.analyze.ks, &c.analyze.seeds, &config, &c.task.function).map_err(analysis_err)?;
    let r2: Vec<_> = curves.iter().map(|a| a.r_squared.clone()).collect();
    let delta: Vec<_> = curves.iter().map(|a| a.mse_delta.clone()).collect();
    outputs.push(write_with(&out_dir.join("ablation.csv"), |w| write_sweep_csv(&r2, w))?);
    outputs.push(write_with(&out_dir.join("ablation_mse_delta.csv"), |w| write_sweep_csv(&delta, w))?);
    for curve in &r2 {
        for (x, y) in curve.x.iter().zip(&curve.y) {
            let _ = writeln!(summary, "seed {}: K = {x}: R^2 {y}", curve.seed);
        }
        match curve.x.iter().zip(&curve.y).find(|(_, y)| **y >= SATURATED_R2) {
            Some((x, _)) => {
                let _ = writeln!(summary, "seed {}: R^2 >= {SATURATED_R2} first reached at K = {x}", curve.seed);
            }
            None => {
                let _ = writeln!(summary, "seed {}: R^2 >= {SATURATED_R2} not reached", curve.seed);
            }
        }
    }
    Ok(())
}

fn prune_vs_vq(
    net: &KanNetwork,
    c: &Config,
    out_dir: &Path,
    summary: &mut String,
    outputs: &mut Vec<PathBuf>,
) -> CliResult<()> {
    let test = test_set(c)?;
    let g = net.layers().first().map_or(0, |l| l.grid_size()) as u64;
    let edges = net.edge_count() as f64;
    let budgets: Vec<u64> = c
        .analyze
        .budget_sparsities
        .iter()
        .map(|s| prune_budget_bits(((1.0 - s) * edges).round() as u64, g))
        .collect();
    let config = CompareConfig {
        restarts: c.analyze.restarts.max(1),
        seed: c.analyze.seeds.first().copied().unwrap_or(0),
        ..CompareConfig::default()
    };
    let cmp = pruning_vs_vq(net, &test, &budgets, &config).map_err(analysis_err)?;
    outputs.push(write_with(&out_dir.join("prune_vs_vq.csv"), |w| write_comparison_csv(&cmp, w))?);
    let _ = writeln!(summary, "baseline MSE: {}", cmp.baseline_mse);
    let mut wins = 0;
    for r in &cmp.rows {
        let (p, v) = (r.prune_inflation(cmp.baseline_mse), r.vq_inflation(cmp.baseline_mse));
        if v < p {
            wins += 1;
        }
        let _ = writeln!(
            summary,
            "{} bits: pruning keeps {} edges ({p:.3}x), VQ K = {} ({v:.3}x)",
            r.budget_bits, r.kept_edges, r.k
        );
    }
    let verdict = if wins == cmp.rows.len() { "VQ wins at every matched budget" } else { "VQ does not win at every matched budget" };
    let _ = writeln!(summary, "{verdict} ({wins}/{})", cmp.rows.len());
    Ok(())
}
