//! Diagnostic studies on trained networks: singular-value spectra of the
//! stacked coefficients, pruning sweeps, codebook-size ablations and
//! pruning-versus-quantization comparisons at matched storage budgets.
//!
//! Every sweep is deterministic for fixed seeds. Independent cells run in
//! parallel on the rayon pool and are reassembled in declared order.

mod compare;
mod spectrum;
mod sweep;

use std::io::{self, Write};

use thiserror::Error;

use crate::gsb::VqError;
use crate::kan::{KanError, KanLayer, KanNetwork};
use crate::trainer::TrainError;

pub use compare::{prune_budget_bits, pruning_vs_vq, vq_budget_bits, CompareConfig, Comparison, ComparisonRow};
pub use spectrum::{coefficient_spectrum, singular_values, svd_spectrum, SpectrumReport, SPECTRUM_THRESHOLDS};
pub use sweep::{
    codebook_ablation, pruning_sweep, reconstruction_r_squared, AblationConfig, AblationCurve, RSquaredReport,
    SweepCurve,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("layer {layer} has G = {actual}, expected {expected} like the first layer")]
    MixedGridSize { layer: usize, expected: usize, actual: usize },
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("matrix entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("sweep points must be strictly increasing: {0}")]
    NotIncreasing(String),
    #[error("budget of {budget_bits} bits is below the smallest codebook layout ({minimum_bits} bits)")]
    InfeasibleBudget { budget_bits: u64, minimum_bits: u64 },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Kan(#[from] KanError),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Copy with the column mean subtracted from every row.
    pub fn centered(&self) -> Matrix {
        let mut mean = vec![0.0; self.cols];
        for r in 0..self.rows {
            mean.iter_mut().zip(self.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= self.rows.max(1) as f64);
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols.max(1)) {
            row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        Matrix::new(self.rows, self.cols, data)
    }
}

pub(crate) fn uniform_grid_size(net: &KanNetwork) -> Result<usize, AnalysisError> {
    let expected = net.layers().first().map_or(0, KanLayer::grid_size);
    for (layer, l) in net.layers().iter().enumerate() {
        if l.grid_size() != expected {
            return Err(AnalysisError::MixedGridSize { layer, expected, actual: l.grid_size() });
        }
    }
    Ok(expected)
}

/// One row per edge, ordered by `(layer, i, j)`, holding that edge's grid.
pub fn stack_coefficients(net: &KanNetwork) -> Result<Matrix, AnalysisError> {
    let g = uniform_grid_size(net)?;
    let data: Vec<f64> = net.layers().iter().flat_map(|l| l.flat_coefficients()).collect();
    Ok(Matrix::new(net.edge_count(), g, data))
}

/// Inverse of [`stack_coefficients`]: writes the rows back into a network
/// with the topology of `template`.
pub fn unstack_coefficients(matrix: &Matrix, template: &KanNetwork) -> Result<KanNetwork, AnalysisError> {
    let g = uniform_grid_size(template)?;
    if matrix.cols != g || matrix.rows != template.edge_count() {
        return Err(KanError::Shape { expected: template.edge_count() * g, actual: matrix.data.len() }.into());
    }
    let mut offset = 0;
    let layers = template
        .layers()
        .iter()
        .map(|l| {
            let n = l.edge_count() * g;
            let layer = KanLayer::from_flat(l.in_dim(), l.out_dim(), g, l.domain(), &matrix.data[offset..offset + n]);
            offset += n;
            layer
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KanNetwork::new(layers)?)
}

fn check_increasing(xs: &[f64]) -> Result<(), AnalysisError> {
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AnalysisError::NotIncreasing(format!("{xs:?}")));
    }
    Ok(())
}

/// `rank,sigma,cumfrac`, ranks starting at 1.
pub fn write_spectrum_csv<W: Write>(report: &SpectrumReport, mut w: W) -> io::Result<()> {
    writeln!(w, "rank,sigma,cumfrac")?;
    for (r, (s, f)) in report.singular_values.iter().zip(&report.cumulative).enumerate() {
        writeln!(w, "{},{},{}", r + 1, s, f)?;
    }
    Ok(())
}

/// `x,y,seed`, one block per curve.
pub fn write_sweep_csv<W: Write>(curves: &[SweepCurve], mut w: W) -> io::Result<()> {
    writeln!(w, "x,y,seed")?;
    for c in curves {
        for (x, y) in c.x.iter().zip(&c.y) {
            writeln!(w, "{},{},{}", x, y, c.seed)?;
        }
    }
    Ok(())
}

/// `budget_bits,prune_mse,vq_mse`.
pub fn write_comparison_csv<W: Write>(comparison: &Comparison, mut w: W) -> io::Result<()> {
    writeln!(w, "budget_bits,prune_mse,vq_mse")?;
    for r in &comparison.rows {
        writeln!(w, "{},{},{}", r.budget_bits, r.prune_mse, r.vq_mse)?;
    }
    Ok(())
}
