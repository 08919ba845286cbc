use crate::kan::KanNetwork;

use super::{stack_coefficients, AnalysisError, Matrix};

/// Cumulative-variance levels whose ranks every report records.
pub const SPECTRUM_THRESHOLDS: [f64; 3] = [0.90, 0.94, 0.99];

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `cumulative[r - 1] = sum_{i <= r} sigma_i^2 / sum sigma_i^2`.
    pub cumulative: Vec<f64>,
    /// `(p, smallest r with cumulative fraction >= p)` per threshold.
    pub thresholds: Vec<(f64, usize)>,
}

impl SpectrumReport {
    pub fn from_singular_values(mut singular_values: Vec<f64>) -> Self {
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = singular_values.iter().map(|s| s * s).sum();
        let mut acc = 0.0;
        let cumulative: Vec<f64> = singular_values
            .iter()
            .map(|s| {
                acc += s * s;
                // an all-zero matrix has no variance to explain; treat rank 1 as complete
                if total > 0.0 {
                    (acc / total).min(1.0)
                } else {
                    1.0
                }
            })
            .collect();
        let mut report = Self { singular_values, cumulative, thresholds: Vec::new() };
        report.thresholds = SPECTRUM_THRESHOLDS.iter().map(|&p| (p, report.rank_at(p))).collect();
        report
    }

    /// Smallest rank whose cumulative fraction reaches `p` (small slack
    /// absorbs summation rounding).
    pub fn rank_at(&self, p: f64) -> usize {
        self.cumulative.iter().position(|&f| f >= p - 1e-12).map_or(self.cumulative.len(), |r| r + 1)
    }

    /// Cumulative fraction at rank `r` (1-based); 0 for `r = 0`.
    pub fn fraction_at(&self, r: usize) -> f64 {
        match r {
            0 => 0.0,
            r => self.cumulative[(r - 1).min(self.cumulative.len() - 1)],
        }
    }
}

/// Singular values by one-sided Jacobi rotations, descending. Works on the
/// narrower orientation so the rotation count scales with `min(rows, cols)^2`.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, AnalysisError> {
    if m.rows == 0 || m.cols == 0 {
        return Err(AnalysisError::EmptyMatrix);
    }
    if let Some(index) = m.data.iter().position(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite { index });
    }
    // columns of the tall orientation, each stored contiguously
    let (len, n) = (m.rows.max(m.cols), m.rows.min(m.cols));
    let mut cols = vec![0.0; len * n];
    for r in 0..m.rows {
        for c in 0..m.cols {
            let (vec, at) = if m.rows >= m.cols { (c, r) } else { (r, c) };
            cols[vec * len + at] = m.get(r, c);
        }
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (head, tail) = cols.split_at_mut(q * len);
                let a = &mut head[p * len..(p + 1) * len];
                let b = &mut tail[..len];
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = c * u - s * v;
                    *y = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols.chunks(len).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma)
}

pub fn svd_spectrum(m: &Matrix) -> Result<SpectrumReport, AnalysisError> {
    Ok(SpectrumReport::from_singular_values(singular_values(m)?))
}

/// Raw and column-centered spectra of the stacked coefficient matrix.
pub fn coefficient_spectrum(net: &KanNetwork) -> Result<(SpectrumReport, SpectrumReport), AnalysisError> {
    let m = stack_coefficients(net)?;
    Ok((svd_spectrum(&m)?, svd_spectrum(&m.centered())?))
}
