//! Edge-level magnitude pruning.

use std::cmp::Ordering;

use crate::kan::KanNetwork;

use super::TrainError;

/// Per-edge keep flags for one layer, aligned with its grid array.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub keep: Vec<bool>,
    /// Edges with norm below this value were removed.
    pub threshold: f64,
}

impl PruneMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub network: KanNetwork,
    pub masks: Vec<PruneMask>,
    /// Norm of the weakest surviving edge; infinite when every edge is pruned.
    pub threshold: f64,
    pub pruned: usize,
}

/// Zeroes the `floor(sparsity * E_total)` edges with the smallest grid norms,
/// ranked globally across layers. Ties go to the lexicographically smallest
/// `(layer, i, j)`.
pub fn prune_by_norm(net: &KanNetwork, sparsity: f64) -> Result<PruneOutcome, TrainError> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(TrainError::InvalidConfig(format!("sparsity must lie in [0, 1], got {sparsity}")));
    }
    let total = net.edge_count();
    prune_edges(net, ((sparsity * total as f64).floor() as usize).min(total))
}

/// Zeroes exactly `count` edges (clamped to the edge total) in the same
/// global norm order as [`prune_by_norm`].
pub fn prune_edges(net: &KanNetwork, count: usize) -> Result<PruneOutcome, TrainError> {
    let mut ranked: Vec<(f64, usize, usize)> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| layer.grids().iter().enumerate().map(move |(e, g)| (g.norm(), l, e)))
        .collect();
    // edge index e = i * out_dim + j, so (l, e) order equals (l, i, j) order
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then((a.1, a.2).cmp(&(b.1, b.2))));

    let prune_count = count.min(ranked.len());
    let threshold = ranked.get(prune_count).map_or(f64::INFINITY, |r| r.0);

    let mut masks: Vec<PruneMask> =
        net.layers().iter().map(|l| PruneMask { keep: vec![true; l.edge_count()], threshold }).collect();
    for &(_, l, e) in &ranked[..prune_count] {
        masks[l].keep[e] = false;
    }
    let network = apply_masks(net, &masks)?;
    Ok(PruneOutcome { network, masks, threshold, pruned: prune_count })
}

/// Returns a copy of `net` with every masked-out grid set to zero.
pub fn apply_masks(net: &KanNetwork, masks: &[PruneMask]) -> Result<KanNetwork, TrainError> {
    if masks.len() != net.layers().len() {
        return Err(TrainError::InvalidConfig(format!(
            "expected {} masks, got {}",
            net.layers().len(),
            masks.len()
        )));
    }
    let mut out = net.clone();
    for (l, (layer, mask)) in out.layers_mut().iter_mut().zip(masks).enumerate() {
        if mask.keep.len() != layer.edge_count() {
            return Err(TrainError::InvalidConfig(format!(
                "mask {l} has {} flags for {} edges",
                mask.keep.len(),
                layer.edge_count()
            )));
        }
        for (grid, &keep) in layer.grids_mut().iter_mut().zip(&mask.keep) {
            if !keep {
                grid.coefficients_mut().iter_mut().for_each(|c| *c = 0.0);
            }
        }
    }
    Ok(out)
}
