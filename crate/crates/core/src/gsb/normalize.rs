use crate::kan::{KanLayer, SplineGrid};

use super::{EdgeId, ShapeRecord};

/// Grids whose standard deviation falls below this are treated as constant.
pub const DEGENERATE_GAIN: f64 = 1e-8;

/// Splits a grid into bias (mean), gain (population std) and unit shape.
pub fn normalize_grid(grid: &SplineGrid) -> ShapeRecord {
    let c = grid.coefficients();
    let n = c.len() as f64;
    let bias = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - bias) * (v - bias)).sum::<f64>() / n;
    let gain = var.sqrt();
    if gain < DEGENERATE_GAIN {
        return ShapeRecord { shape: vec![0.0; c.len()], gain: 0.0, bias, edge_id: EdgeId::default() };
    }
    let shape = c.iter().map(|v| (v - bias) / gain).collect();
    ShapeRecord { shape, gain, bias, edge_id: EdgeId::default() }
}

/// Normalizes every edge of a layer, tagging records with their position.
pub fn normalize_layer(layer: &KanLayer, layer_index: usize) -> Vec<ShapeRecord> {
    let out = layer.out_dim();
    layer
        .grids()
        .iter()
        .enumerate()
        .map(|(e, g)| {
            let mut rec = normalize_grid(g);
            rec.edge_id = EdgeId { layer: layer_index, i: e / out, j: e % out };
            rec
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::Domain;
    use proptest::prelude::*;

    fn grid(c: &[f64]) -> SplineGrid {
        SplineGrid::new(c.to_vec(), Domain::UNIT).unwrap()
    }

    #[test]
    fn examples() {
        let r = normalize_grid(&grid(&[1.0, 3.0]));
        assert_eq!((r.bias, r.gain, r.shape), (2.0, 1.0, vec![-1.0, 1.0]));

        let r = normalize_grid(&grid(&[5.0, 5.0, 5.0]));
        assert_eq!((r.bias, r.gain, r.shape), (5.0, 0.0, vec![0.0; 3]));

        let r = normalize_grid(&grid(&[0.0, 2.0, 4.0]));
        assert!((r.bias - 2.0).abs() < 1e-15);
        assert!((r.gain - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.gain - 1.63299).abs() < 1e-5);
        let expect = [-1.22474, 0.0, 1.22474];
        for (s, e) in r.shape.iter().zip(expect) {
            assert!((s - e).abs() < 1e-5);
        }
    }

    #[test]
    fn layer_records_carry_positions() {
        let layer = KanLayer::from_flat(2, 3, 2, Domain::UNIT, &[0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 0.0, 0.0, 1.0, 1.0, 9.0, 5.0]).unwrap();
        let recs = normalize_layer(&layer, 4);
        assert_eq!(recs[4].edge_id, EdgeId { layer: 4, i: 1, j: 1 });
        assert_eq!(recs[3].gain, 0.0);
    }

    proptest! {
        #[test]
        fn round_trip_and_unit_stats(c in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            let r = normalize_grid(&grid(&c));
            prop_assume!(r.gain > 0.0);
            let n = c.len() as f64;
            let mean = r.shape.iter().sum::<f64>() / n;
            let var = r.shape.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
            for (s, orig) in r.shape.iter().zip(&c) {
                let back = r.gain * s + r.bias;
                prop_assert!((back - orig).abs() <= 1e-6 * orig.abs().max(r.gain));
            }
        }
    }
}
