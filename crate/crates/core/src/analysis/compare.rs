use rayon::prelude::*;

use crate::gsb::{compress_network_with, CompressedLayer, VqConfig};
use crate::kan::KanNetwork;
use crate::lutham::index_bits;
use crate::quant::quantize_compressed_layer;
use crate::trainer::{mse, prune_edges, Dataset};

use super::{uniform_grid_size, AnalysisError};

/// Bits to store `kept` dense float32 grids of `grid_size` nodes.
pub fn prune_budget_bits(kept: u64, grid_size: u64) -> u64 {
    kept * grid_size * 32
}

/// Bits for an Int8 codebook layout with at most `k` rows per layer:
/// `sum_l E_l * (ceil(log2 K_l) + 16) + K_l * G * 8` with `K_l = min(k, E_l)`.
pub fn vq_budget_bits(net: &KanNetwork, k: u64) -> u64 {
    net.layers()
        .iter()
        .map(|l| {
            let e = l.edge_count() as u64;
            let kl = k.min(e);
            e * (index_bits(kl) as u64 + 16) + kl * l.grid_size() as u64 * 8
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { restarts: 3, max_iterations: 100, batch_size: 4096, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub budget_bits: u64,
    pub kept_edges: usize,
    pub sparsity: f64,
    pub prune_bits: u64,
    pub prune_mse: f64,
    /// Codebook rows requested (each layer uses `min(k, E_l)`).
    pub k: usize,
    pub vq_bits: u64,
    pub vq_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline_mse: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonRow {
    pub fn prune_inflation(&self, baseline: f64) -> f64 {
        self.prune_mse / baseline
    }

    pub fn vq_inflation(&self, baseline: f64) -> f64 {
        self.vq_mse / baseline
    }
}

/// Most dense float32 grids that fit `budget` bits.
fn kept_for_budget(budget: u64, grid_size: u64, edges: usize) -> usize {
    (budget / prune_budget_bits(1, grid_size).max(1)).min(edges as u64) as usize
}

/// Largest power-of-two `K` whose Int8 layout fits `budget`, capped once every
/// layer holds one row per edge.
fn largest_k(net: &KanNetwork, budget: u64) -> Result<usize, AnalysisError> {
    let minimum_bits = vq_budget_bits(net, 1);
    if minimum_bits > budget {
        return Err(AnalysisError::InfeasibleBudget { budget_bits: budget, minimum_bits });
    }
    let cap = net.layers().iter().map(|l| l.edge_count()).max().unwrap_or(1);
    let mut k = 1usize;
    while k < cap && vq_budget_bits(net, 2 * k as u64) <= budget {
        k *= 2;
    }
    Ok(k)
}

/// For each bit budget, test MSE of (a) the network pruned by norm to the
/// most edges that fit and (b) the Int8 codebook compression with the
/// largest fitting power-of-two `K`. All layers must share `G`.
pub fn pruning_vs_vq(
    net: &KanNetwork,
    test: &Dataset,
    budgets: &[u64],
    config: &CompareConfig,
) -> Result<Comparison, AnalysisError> {
    let g = uniform_grid_size(net)? as u64;
    let edges = net.edge_count();
    let baseline_mse = mse(net, test)?;
    let rows = budgets
        .par_iter()
        .map(|&budget| {
            let kept = kept_for_budget(budget, g, edges);
            let pruned = prune_edges(net, edges - kept)?;
            let prune_mse = mse(&pruned.network, test)?;

            let k = largest_k(net, budget)?;
            let ks: Vec<usize> = net.layers().iter().map(|l| k.min(l.edge_count())).collect();
            let vq = VqConfig {
                max_iterations: config.max_iterations,
                batch_size: config.batch_size,
                seed: config.seed,
                restarts: config.restarts,
            };
            let layers = compress_network_with(net, &ks, &vq)?
                .iter()
                .map(quantize_compressed_layer)
                .collect::<Result<Vec<_>, _>>()
                .map_err(crate::gsb::VqError::from)?;
            let recon = KanNetwork::new(layers.iter().map(CompressedLayer::reconstruct).collect::<Result<_, _>>()?)?;
            Ok(ComparisonRow {
                budget_bits: budget,
                kept_edges: kept,
                sparsity: 1.0 - kept as f64 / edges as f64,
                prune_bits: prune_budget_bits(kept as u64, g),
                prune_mse,
                k,
                vq_bits: vq_budget_bits(net, k as u64),
                vq_mse: mse(&recon, test)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(Comparison { baseline_mse, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_network, SyntheticTask, TargetFunction};

    #[test]
    fn budget_arithmetic() {
        let net = init_network(&[4, 4], 10, 0.3, 0).unwrap();
        // 16 edges, K = 16: 16 * (4 + 16) + 16 * 10 * 8
        assert_eq!(vq_budget_bits(&net, 16), 16 * 20 + 1280);
        // K beyond the edge count is clamped
        assert_eq!(vq_budget_bits(&net, 1 << 20), vq_budget_bits(&net, 16));
        assert_eq!(vq_budget_bits(&net, 1), 16 * 16 + 80);
        assert_eq!(prune_budget_bits(3, 10), 960);
    }

    #[test]
    fn infeasible_and_unlimited_budgets() {
        let net = init_network(&[2, 3, 1], 6, 0.4, 3).unwrap();
        let data = SyntheticTask::new(TargetFunction::RadialBump, 2, 30, 0.0, 2).dataset().unwrap();
        let err = pruning_vs_vq(&net, &data, &[10], &CompareConfig::default()).unwrap_err();
        assert!(matches!(err, AnalysisError::InfeasibleBudget { budget_bits: 10, .. }));

        let c = pruning_vs_vq(&net, &data, &[u64::MAX / 2], &CompareConfig::default()).unwrap();
        let row = &c.rows[0];
        assert_eq!(row.kept_edges, 9);
        assert_eq!(row.prune_mse, c.baseline_mse);
        assert!((row.vq_mse - c.baseline_mse).abs() < 1e-2 * c.baseline_mse, "{row:?} vs {}", c.baseline_mse);
    }

    #[test]
    fn sub_bit_budget_prunes_everything() {
        assert_eq!(kept_for_budget(39, 6, 40), 0);
        assert_eq!(kept_for_budget(192 * 3 + 191, 6, 40), 3);
        assert_eq!(kept_for_budget(u64::MAX, 6, 40), 40);
    }
}
