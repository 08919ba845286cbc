mod common;

use common::{propagated_bound, random_compressed_layer, rng, to_f64, CountingAlloc};
use holoquant_core::gsb::{Codebook, CodebookMeta, CompressedLayer};
use holoquant_core::kan::{Domain, KanNetwork};
use holoquant_core::lutham::{compressed_forward, compressed_forward_into, pli_lookup, Model, Workspace};
use holoquant_core::quant::quantize_compressed_layer;
use proptest::prelude::*;
use rand::Rng;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn random_model(seed: u64, dims: &[usize], g: usize, k: usize) -> Vec<CompressedLayer> {
    let mut r = rng(seed);
    dims.windows(2).map(|w| random_compressed_layer(&mut r, w[0], w[1], g, k)).collect()
}

fn reference(layers: &[CompressedLayer]) -> KanNetwork {
    KanNetwork::new(layers.iter().map(|l| l.reconstruct().unwrap()).collect()).unwrap()
}

fn inputs(seed: u64, n: usize, width: usize) -> Vec<f32> {
    let mut r = rng(seed ^ 0x5eed);
    (0..n * width).map(|_| r.random_range(-1.3f32..1.3)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn float_runtime_matches_reconstruction(
        seed in any::<u64>(),
        a in 1usize..6, b in 1usize..12, c in 1usize..6,
        g in prop::sample::select(vec![5usize, 10, 20]),
        k in 1usize..9,
    ) {
        let layers = random_model(seed, &[a, b, c], g, k);
        let oracle = reference(&layers);
        let model = Model::compressed(layers).unwrap();
        let mut ws = Workspace::for_model(&model).unwrap();
        let x = inputs(seed, 7, a);
        let y = compressed_forward(&model, &x, &mut ws).unwrap();
        for (xs, ys) in x.chunks(a).zip(y.chunks(c)) {
            let want = oracle.forward(&to_f64(xs)).unwrap();
            for (got, want) in ys.iter().zip(&want) {
                prop_assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn int8_runtime_within_propagated_bound(
        seed in any::<u64>(),
        a in 1usize..6, b in 1usize..12, c in 1usize..6,
        g in prop::sample::select(vec![5usize, 10, 20]),
        k in 1usize..9,
    ) {
        let layers = random_model(seed, &[a, b, c], g, k);
        let float_ref = reference(&layers);
        let quantized: Vec<_> = layers.iter().map(|l| quantize_compressed_layer(l).unwrap()).collect();
        let int8_ref = reference(&quantized);
        let bound = propagated_bound(&float_ref, &int8_ref);
        let model = Model::compressed(quantized).unwrap();
        let mut ws = Workspace::for_model(&model).unwrap();
        let x = inputs(seed, 7, a);
        let y = compressed_forward(&model, &x, &mut ws).unwrap();
        for (xs, ys) in x.chunks(a).zip(y.chunks(c)) {
            let want = float_ref.forward(&to_f64(xs)).unwrap();
            let exact = int8_ref.forward(&to_f64(xs)).unwrap();
            for j in 0..c {
                let got = ys[j] as f64;
                prop_assert!((got - exact[j]).abs() < 1e-5, "{got} vs exact {}", exact[j]);
                prop_assert!((got - want[j]).abs() <= bound[j] + 1e-5, "{got} vs {} (bound {})", want[j], bound[j]);
            }
        }
    }
}

#[test]
fn int8_pli_error_is_within_half_a_step() {
    let mut r = rng(3);
    for _ in 0..200 {
        let g = r.random_range(2..12);
        let rows: Vec<f64> = (0..g).map(|_| r.random_range(-3.0..3.0)).collect();
        let float = Codebook::from_rows(1, g, &rows, CodebookMeta::default()).unwrap();
        let mut layer = random_compressed_layer(&mut r, 1, 1, g, 1);
        layer.codebook = float.clone();
        let q = quantize_compressed_layer(&layer).unwrap();
        let scale = match &q.codebook.entries {
            holoquant_core::gsb::CodebookEntries::Int8 { params, .. } => params.scale as f64,
            _ => unreachable!(),
        };
        let gain = r.random_range(-2.0..2.0);
        for _ in 0..20 {
            let x = r.random_range(-1.5..1.5);
            let a = pli_lookup(&float, Domain::UNIT, 0, gain, 0.25, x).unwrap();
            let b = pli_lookup(&q.codebook, Domain::UNIT, 0, gain, 0.25, x).unwrap();
            // the float row is itself f32-rounded, so allow one f32 ulp of the row range
            assert!((a - b).abs() <= gain.abs() * (scale / 2.0 + 3.0 * f32::EPSILON as f64), "{a} vs {b}");
        }
    }
}

#[test]
fn steady_state_forward_does_not_allocate() {
    let mut layers = random_model(9, &[4, 16, 3], 10, 8);
    layers[1] = quantize_compressed_layer(&layers[1]).unwrap();
    let model = Model::compressed(layers).unwrap();
    let mut ws = Workspace::for_model(&model).unwrap();
    let x = inputs(1, 32, 4);
    let mut y = vec![0.0f32; 32 * 3];
    compressed_forward_into(&model, &x, &mut y, &mut ws).unwrap();

    let before = common::allocations();
    for _ in 0..200 {
        compressed_forward_into(&model, &x, &mut y, &mut ws).unwrap();
    }
    assert_eq!(common::allocations() - before, 0);
}

#[test]
fn repeated_inputs_give_identical_outputs() {
    let model = Model::compressed(random_model(4, &[3, 5, 2], 7, 4)).unwrap();
    let mut ws = Workspace::for_model(&model).unwrap();
    let x = inputs(2, 1, 3).repeat(5);
    let y = compressed_forward(&model, &x, &mut ws).unwrap();
    for row in y.chunks(2) {
        assert_eq!(row, &y[..2]);
    }
}

#[test]
fn dense_model_matches_network() {
    let net = holoquant_core::trainer::init_network(&[3, 6, 2], 9, 0.4, 5).unwrap();
    let model = Model::dense(&net);
    let oracle = model.to_network().unwrap();
    let mut ws = Workspace::for_model(&model).unwrap();
    let x = inputs(8, 10, 3);
    let y = compressed_forward(&model, &x, &mut ws).unwrap();
    for (xs, ys) in x.chunks(3).zip(y.chunks(2)) {
        for (got, want) in ys.iter().zip(oracle.forward(&to_f64(xs)).unwrap()) {
            assert!((*got as f64 - want).abs() < 1e-5);
        }
    }
}
