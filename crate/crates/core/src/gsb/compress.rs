use crate::kan::{KanLayer, KanNetwork};

use super::{
    assign_indices, kmeans_codebook, normalize_layer, BiasTable, CompressedLayer, GainTable, IndexTable, KMeansConfig,
    VqError,
};

/// Settings for codebook learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqConfig {
    pub max_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Independent k-means runs per layer; the one with the lowest
    /// reconstruction error is kept.
    pub restarts: usize,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self { max_iterations: 100, batch_size: 4096, seed: 0, restarts: 1 }
    }
}

impl VqConfig {
    fn kmeans(&self, k: usize, layer: usize, restart: usize) -> KMeansConfig {
        let seed = self.seed.wrapping_add((layer as u64).wrapping_mul(1_000_003)).wrapping_add(restart as u64);
        KMeansConfig { k, max_iterations: self.max_iterations, batch_size: self.batch_size, seed }
    }
}

/// Normalizes, clusters and assigns every edge of `layer` against a `k`-row
/// codebook learned for this layer alone. Gains and biases stay float.
pub fn compress_layer(layer: &KanLayer, k: usize, config: &VqConfig) -> Result<CompressedLayer, VqError> {
    compress_layer_at(layer, 0, k, config)
}

fn compress_layer_at(layer: &KanLayer, index: usize, k: usize, config: &VqConfig) -> Result<CompressedLayer, VqError> {
    if k == 0 {
        return Err(VqError::EmptyCodebook);
    }
    let shapes = normalize_layer(layer, index);
    let mut best: Option<(f64, CompressedLayer)> = None;
    for restart in 0..config.restarts.max(1) {
        let codebook = kmeans_codebook(&shapes, &config.kmeans(k, index, restart))?;
        let indices = assign_indices(&shapes, &codebook)?;
        let candidate = CompressedLayer {
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            grid_size: layer.grid_size(),
            domain: layer.domain(),
            codebook,
            indices: IndexTable::for_codebook(k, &indices),
            gains: GainTable::Float(shapes.iter().map(|s| s.gain as f32).collect()),
            biases: BiasTable::Float(shapes.iter().map(|s| s.bias as f32).collect()),
        };
        let sse = reconstruction_sse(layer, &candidate)?;
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, candidate));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Compresses every layer of a network with the same `k`.
pub fn compress_network(net: &KanNetwork, k: usize, config: &VqConfig) -> Result<Vec<CompressedLayer>, VqError> {
    net.layers().iter().enumerate().map(|(l, layer)| compress_layer_at(layer, l, k, config)).collect()
}

/// Compresses layer `l` with its own codebook size `ks[l]`.
pub fn compress_network_with(net: &KanNetwork, ks: &[usize], config: &VqConfig) -> Result<Vec<CompressedLayer>, VqError> {
    if ks.len() != net.layers().len() {
        return Err(VqError::Dimension { expected: net.layers().len(), actual: ks.len() });
    }
    net.layers().iter().zip(ks).enumerate().map(|(l, (layer, &k))| compress_layer_at(layer, l, k, config)).collect()
}

pub(crate) fn reconstruction_sse(layer: &KanLayer, cl: &CompressedLayer) -> Result<f64, VqError> {
    let rebuilt = cl.reconstruct()?;
    Ok(layer
        .grids()
        .iter()
        .zip(rebuilt.grids())
        .flat_map(|(a, b)| a.coefficients().iter().zip(b.coefficients()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsb::{normalize_grid, r_squared};
    use crate::kan::{Domain, SplineGrid};
    use crate::trainer::init_network;

    #[test]
    fn two_distinct_shapes_recover_exactly() {
        let a = [0.0, 1.0, 4.0, 9.0];
        let b = [3.0, -1.0, 2.0, 0.5];
        let mut flat = Vec::new();
        for e in 0..12 {
            let (src, g, off) = if e % 3 == 0 { (&a, 1.0 + e as f64, -2.0) } else { (&b, 0.5, e as f64) };
            flat.extend(src.iter().map(|v| g * v + off));
        }
        let layer = KanLayer::from_flat(3, 4, 4, Domain::UNIT, &flat).unwrap();
        let cl = compress_layer(&layer, 2, &VqConfig::default()).unwrap();
        let rebuilt = cl.reconstruct().unwrap();
        let r2 = r_squared(layer.grids(), rebuilt.grids()).unwrap();
        assert!(r2 >= 1.0 - 1e-6, "r2 = {r2}");
    }

    #[test]
    fn single_entry_codebook() {
        let net = init_network(&[4, 5], 6, 0.3, 1).unwrap();
        let cl = compress_layer(&net.layers()[0], 1, &VqConfig::default()).unwrap();
        assert!(cl.indices.to_vec().iter().all(|&i| i == 0));
        assert!(cl.validate().is_ok());
    }

    #[test]
    fn restarts_never_hurt() {
        let net = init_network(&[6, 8], 10, 0.3, 4).unwrap();
        let layer = &net.layers()[0];
        let one = compress_layer(layer, 5, &VqConfig { restarts: 1, ..VqConfig::default() }).unwrap();
        let many = compress_layer(layer, 5, &VqConfig { restarts: 6, ..VqConfig::default() }).unwrap();
        assert!(reconstruction_sse(layer, &many).unwrap() <= reconstruction_sse(layer, &one).unwrap());
    }

    #[test]
    fn degenerate_edges_reconstruct_to_bias() {
        let flat = [2.0, 2.0, 2.0, 0.0, 1.0, 3.0];
        let layer = KanLayer::from_flat(1, 2, 3, Domain::UNIT, &flat).unwrap();
        let cl = compress_layer(&layer, 2, &VqConfig::default()).unwrap();
        assert_eq!(cl.gains.get(0), 0.0);
        assert_eq!(cl.reconstruct().unwrap().grid(0, 0).coefficients(), &[2.0; 3]);
        let shape = normalize_grid(&SplineGrid::new(flat[3..].to_vec(), Domain::UNIT).unwrap());
        assert!(shape.gain > 0.0);
    }
}
