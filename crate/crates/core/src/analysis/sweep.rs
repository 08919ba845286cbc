use rayon::prelude::*;

use crate::gsb::{compress_network, r_squared_slices, CompressedLayer, VqConfig};
use crate::kan::KanNetwork;
use crate::trainer::{mse, prune_by_norm, Dataset};

use super::{check_increasing, AnalysisError};

/// One measured curve. `x` is strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub task: String,
}

/// Test MSE after pruning to each sparsity level.
pub fn pruning_sweep(
    net: &KanNetwork,
    test: &Dataset,
    sparsities: &[f64],
    seed: u64,
    task: &str,
) -> Result<SweepCurve, AnalysisError> {
    check_increasing(sparsities)?;
    let y = sparsities
        .iter()
        .map(|&s| Ok(mse(&prune_by_norm(net, s)?.network, test)?))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(SweepCurve { x: sparsities.to_vec(), y, seed, task: task.to_string() })
}

/// Reconstruction quality of a compressed network, per layer and over all
/// edges together (the latter only when every layer shares `G`).
#[derive(Debug, Clone, PartialEq)]
pub struct RSquaredReport {
    pub per_layer: Vec<f64>,
    pub aggregate: Option<f64>,
}

pub fn reconstruction_r_squared(net: &KanNetwork, layers: &[CompressedLayer]) -> Result<RSquaredReport, AnalysisError> {
    let recon = layers.iter().map(CompressedLayer::reconstruct).collect::<Result<Vec<_>, _>>()?;
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut all_orig: Vec<&[f64]> = Vec::new();
    let mut all_recon: Vec<&[f64]> = Vec::new();
    for (orig, rec) in net.layers().iter().zip(&recon) {
        let a: Vec<&[f64]> = orig.grids().iter().map(|g| g.coefficients()).collect();
        let b: Vec<&[f64]> = rec.grids().iter().map(|g| g.coefficients()).collect();
        per_layer.push(r_squared_slices(&a, &b)?);
        all_orig.extend(a);
        all_recon.extend(b);
    }
    let uniform = net.layers().windows(2).all(|w| w[0].grid_size() == w[1].grid_size());
    let aggregate = if uniform { Some(r_squared_slices(&all_orig, &all_recon)?) } else { None };
    Ok(RSquaredReport { per_layer, aggregate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub batch_size: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { restarts: 3, max_iterations: 100, batch_size: 4096 }
    }
}

/// R² and test-MSE change against `K` for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurve {
    pub seed: u64,
    pub r_squared: SweepCurve,
    /// Compressed-model test MSE minus dense test MSE.
    pub mse_delta: SweepCurve,
}

/// Compresses `net` at every `K` (best of `config.restarts` k-means runs per
/// layer) for every seed. Cells run in parallel; output order follows
/// `seeds` then `ks`.
pub fn codebook_ablation(
    net: &KanNetwork,
    test: &Dataset,
    ks: &[usize],
    seeds: &[u64],
    config: &AblationConfig,
    task: &str,
) -> Result<Vec<AblationCurve>, AnalysisError> {
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    check_increasing(&xs)?;
    let baseline = mse(net, test)?;
    let cells: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| ks.iter().map(move |&k| (s, k))).collect();
    let results = cells
        .par_iter()
        .map(|&(seed, k)| {
            let vq = VqConfig { max_iterations: config.max_iterations, batch_size: config.batch_size, seed, restarts: config.restarts };
            let layers = compress_network(net, k, &vq)?;
            let r2 = reconstruction_r_squared(net, &layers)?;
            let recon = KanNetwork::new(layers.iter().map(CompressedLayer::reconstruct).collect::<Result<_, _>>()?)?;
            let aggregate = r2.aggregate.unwrap_or_else(|| r2.per_layer.iter().sum::<f64>() / r2.per_layer.len() as f64);
            Ok((aggregate, mse(&recon, test)? - baseline))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    Ok(seeds
        .iter()
        .zip(results.chunks(ks.len().max(1)))
        .map(|(&seed, row)| AblationCurve {
            seed,
            r_squared: SweepCurve { x: xs.clone(), y: row.iter().map(|r| r.0).collect(), seed, task: task.to_string() },
            mse_delta: SweepCurve { x: xs.clone(), y: row.iter().map(|r| r.1).collect(), seed, task: task.to_string() },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_network, SyntheticTask, TargetFunction};

    fn fixture() -> (KanNetwork, Dataset) {
        let net = init_network(&[2, 3, 1], 6, 0.4, 3).unwrap();
        let task = SyntheticTask::new(TargetFunction::SumOfSinusoids, 2, 40, 0.0, 1);
        (net, task.dataset().unwrap())
    }

    #[test]
    fn sweep_endpoints() {
        let (net, data) = fixture();
        let curve = pruning_sweep(&net, &data, &[0.0, 1.0], 7, "t").unwrap();
        assert_eq!(curve.y[0], mse(&net, &data).unwrap());
        let zero: f64 = data.targets.iter().map(|t| t * t).sum::<f64>() / data.len() as f64;
        assert!((curve.y[1] - zero).abs() < 1e-15);
        assert!(pruning_sweep(&net, &data, &[0.5, 0.5], 7, "t").is_err());
    }

    #[test]
    fn ablation_shape_and_exact_recovery() {
        let (net, data) = fixture();
        let curves = codebook_ablation(&net, &data, &[1, 2, 6], &[0, 1], &AblationConfig::default(), "t").unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[1].seed, 1);
        assert_eq!(curves[0].r_squared.x, vec![1.0, 2.0, 6.0]);
        // K = 6 covers every edge of both layers
        assert!(curves[0].r_squared.y[2] > 1.0 - 1e-6);
        assert!(curves[0].mse_delta.y[2].abs() < 1e-6);
    }
}
