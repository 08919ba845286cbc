//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use holoquant_core::gsb::{BiasTable, Codebook, CodebookMeta, CompressedLayer, GainTable, IndexTable};
use holoquant_core::kan::{Domain, KanLayer, KanNetwork};
use holoquant_core::trainer::{loss_and_gradient, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts heap allocations made by the current thread.
pub struct CountingAlloc;

thread_local! {
    static ALLOCATIONS: Cell<u64> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let _ = ALLOCATIONS.try_with(|c| c.set(c.get() + 1));
        unsafe { System.alloc(layout) }
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let _ = ALLOCATIONS.try_with(|c| c.set(c.get() + 1));
        unsafe { System.alloc_zeroed(layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let _ = ALLOCATIONS.try_with(|c| c.set(c.get() + 1));
        unsafe { System.realloc(ptr, layout, new_size) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

pub fn allocations() -> u64 {
    ALLOCATIONS.with(Cell::get)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compressed layer with random contents. About one edge in eight gets a
/// zero gain, mimicking degenerate (constant) grids.
pub fn random_compressed_layer(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize, g: usize, k: usize) -> CompressedLayer {
    let e = in_dim * out_dim;
    let rows: Vec<f64> = (0..k * g).map(|_| rng.random_range(-2.0..2.0)).collect();
    let meta = CodebookMeta {
        iterations: rng.random_range(0..200),
        inertia: rng.random_range(0.0..10.0),
        seed: rng.random(),
        padded: rng.random_bool(0.3),
    };
    let indices: Vec<u32> = (0..e).map(|_| rng.random_range(0..k as u32)).collect();
    let gains: Vec<f32> =
        (0..e).map(|_| if rng.random_bool(0.125) { 0.0 } else { rng.random_range(0.01f32..2.0) }).collect();
    let biases: Vec<f32> = (0..e).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    CompressedLayer {
        in_dim,
        out_dim,
        grid_size: g,
        domain: Domain::new(-1.0, 1.0).unwrap(),
        codebook: Codebook::from_rows(k, g, &rows, meta).unwrap(),
        indices: IndexTable::for_codebook(k, &indices),
        gains: GainTable::Float(gains),
        biases: BiasTable::Float(biases),
    }
}

/// Largest absolute slope of any segment of any grid, per edge.
fn edge_lipschitz(layer: &KanLayer) -> Vec<f64> {
    let dx = layer.domain().spacing(layer.grid_size());
    layer
        .grids()
        .iter()
        .map(|grid| grid.coefficients().windows(2).map(|w| (w[1] - w[0]).abs() / dx).fold(0.0, f64::max))
        .collect()
}

/// Per-output error bound between a network built from quantized layers and
/// its float reference, propagated layer by layer. At each edge the grids
/// differ by at most their largest node gap (both are piecewise linear on
/// the same nodes) and an input perturbation `d` moves the reference edge by
/// at most `L * d`.
pub fn propagated_bound(reference: &KanNetwork, quantized: &KanNetwork) -> Vec<f64> {
    let mut d = vec![0.0; reference.input_dim()];
    for (r, q) in reference.layers().iter().zip(quantized.layers()) {
        let lip = edge_lipschitz(r);
        let mut next = vec![0.0; r.out_dim()];
        for i in 0..r.in_dim() {
            for (j, bound) in next.iter_mut().enumerate() {
                let e = r.edge_index(i, j);
                let node_gap = r.grids()[e]
                    .coefficients()
                    .iter()
                    .zip(q.grids()[e].coefficients())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                *bound += node_gap + lip[e] * d[i];
            }
        }
        d = next;
    }
    d
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn objective(net: &KanNetwork, data: &Dataset, batch: &[usize], lambda: f64) -> f64 {
    loss_and_gradient(net, data, batch, lambda).unwrap().total()
}

/// Relative error of the analytic gradient against central differences,
/// measured as a norm ratio over every coefficient.
pub fn gradient_error(net: &KanNetwork, data: &Dataset, batch: &[usize], lambda: f64) -> f64 {
    let analytic = loss_and_gradient(net, data, batch, lambda).unwrap().gradients;
    let h = 1e-5;
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for (l, layer) in net.layers().iter().enumerate() {
        let g = layer.grid_size();
        for e in 0..layer.edge_count() {
            for n in 0..g {
                let mut plus = net.clone();
                plus.layers_mut()[l].grids_mut()[e].coefficients_mut()[n] += h;
                let mut minus = net.clone();
                minus.layers_mut()[l].grids_mut()[e].coefficients_mut()[n] -= h;
                let numeric = (objective(&plus, data, batch, lambda) - objective(&minus, data, batch, lambda)) / (2.0 * h);
                let a = analytic[l][e * g + n];
                diff += (a - numeric).powi(2);
                norm_a += a * a;
                norm_n += numeric * numeric;
            }
        }
    }
    diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-300)
}


/// Smallest distance from any layer input on `batch` to a spline node. Central
/// differences are only meaningful away from the kinks.
pub fn min_node_distance(net: &KanNetwork, data: &Dataset, batch: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for &n in batch {
        let mut x = data.input(n).to_vec();
        for layer in net.layers() {
            let d = layer.domain();
            let step = (d.hi - d.lo) / (layer.grid_size() - 1) as f64;
            for &v in &x {
                let t = ((v - d.lo) / step).round().clamp(0.0, (layer.grid_size() - 1) as f64);
                best = best.min((v - (d.lo + t * step)).abs());
            }
            x = layer.forward(&x).unwrap();
        }
    }
    best
}
