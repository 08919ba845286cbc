//! Training, codebook compression and lookup-table inference for
//! Kolmogorov-Arnold networks built from piecewise-linear spline grids.

pub mod gsb;
pub mod kan;
pub mod quant;
pub mod trainer;
pub mod lutham;
pub mod analysis;
