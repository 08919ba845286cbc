//! Int8 encodings for compressed layers.
//!
//! Codebook coefficients and biases use symmetric linear Int8 with one scale
//! per tensor. Gains use a logarithmic Int8 code so that small and large
//! amplitudes keep the same relative precision.
//!
//! Log-gain byte layout: bit 7 is a sign bit (always 0 for the nonnegative
//! gains produced by gain-shape-bias decomposition), bits 0..=6 hold the
//! magnitude code `m`. Codes `0..=126` decode to
//! `min_gain * 2^(m * log_step)`; code 127 is reserved for an exact zero.

use thiserror::Error;

use crate::gsb::{BiasTable, CodebookEntries, CompressedLayer, GainTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("gain at position {index} is negative ({value})")]
    NegativeGain { index: usize, value: f64 },
    #[error("layer is already Int8")]
    AlreadyQuantized,
}

/// Symmetric per-tensor scale; the zero point is always 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearQuantParams {
    pub scale: f32,
}

impl LinearQuantParams {
    pub const MAX_CODE: i32 = 127;

    #[inline]
    pub fn dequantize(&self, code: i8) -> f64 {
        code as f64 * self.scale as f64
    }
}

/// Calibration of the logarithmic gain code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogQuantParams {
    /// Smallest positive gain seen during calibration; decodes code 0 exactly.
    pub min_gain: f32,
    pub log_step: f32,
}

pub const GAIN_ZERO_CODE: i8 = 127;
pub const GAIN_MAX_MAGNITUDE_CODE: i8 = 126;
const GAIN_SIGN_BIT: u8 = 0x80;

impl LogQuantParams {
    pub fn log_min(&self) -> f64 {
        (self.min_gain as f64).log2()
    }

    /// Worst-case relative error of a decoded gain inside the calibrated
    /// range: `2^(log_step / 2) - 1`.
    pub fn relative_error_bound(&self) -> f64 {
        (self.log_step as f64 / 2.0).exp2() - 1.0
    }

    pub fn decode(&self, code: i8) -> f64 {
        if code == GAIN_ZERO_CODE {
            return 0.0;
        }
        let bits = code as u8;
        let magnitude = (bits & !GAIN_SIGN_BIT) as f64;
        let value = self.min_gain as f64 * (magnitude * self.log_step as f64).exp2();
        if bits & GAIN_SIGN_BIT != 0 {
            -value
        } else {
            value
        }
    }

    /// Decoded value of every byte, indexable by `code as u8`.
    pub fn decode_table(&self) -> [f64; 256] {
        let mut table = [0.0f64; 256];
        for (b, slot) in table.iter_mut().enumerate() {
            let code = b as u8 as i8;
            *slot = if (b as u8) & 0x7f == GAIN_ZERO_CODE as u8 { 0.0 } else { self.decode(code) };
        }
        table
    }
}

fn check_finite(values: &[f32]) -> Result<(), QuantError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(QuantError::NonFinite { index, value: values[index] as f64 }),
        None => Ok(()),
    }
}

/// Symmetric linear Int8: `scale = max|v| / 127`, `code = round_half_even(v / scale)`.
/// An all-zero input gets scale 1.
pub fn quantize_linear_i8(values: &[f32]) -> Result<(Vec<i8>, LinearQuantParams), QuantError> {
    check_finite(values)?;
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max((*v as f64).abs()));
    if max_abs == 0.0 {
        return Ok((vec![0; values.len()], LinearQuantParams { scale: 1.0 }));
    }
    let mut scale = (max_abs / LinearQuantParams::MAX_CODE as f64) as f32;
    if scale == 0.0 {
        // subnormal inputs
        scale = f32::MIN_POSITIVE;
    }
    let params = LinearQuantParams { scale };
    let codes = values.iter().map(|&v| linear_code(v, params)).collect();
    Ok((codes, params))
}

#[inline]
fn linear_code(v: f32, params: LinearQuantParams) -> i8 {
    let q = (v as f64 / params.scale as f64).round_ties_even();
    q.clamp(-127.0, 127.0) as i8
}

pub fn dequantize_linear_i8(codes: &[i8], params: LinearQuantParams) -> Vec<f64> {
    codes.iter().map(|&c| params.dequantize(c)).collect()
}

/// Logarithmic Int8 for nonnegative gains, calibrated on the observed
/// positive range. Zero gains map to [`GAIN_ZERO_CODE`].
pub fn quantize_gains_log_i8(gains: &[f32]) -> Result<(Vec<i8>, LogQuantParams), QuantError> {
    check_finite(gains)?;
    if let Some(index) = gains.iter().position(|&g| g < 0.0) {
        return Err(QuantError::NegativeGain { index, value: gains[index] as f64 });
    }
    let positive = gains.iter().copied().filter(|&g| g > 0.0);
    let (min, max) = positive.fold((f32::INFINITY, 0.0f32), |(lo, hi), g| (lo.min(g), hi.max(g)));
    if max == 0.0 {
        let params = LogQuantParams { min_gain: 1.0, log_step: 1.0 };
        return Ok((vec![GAIN_ZERO_CODE; gains.len()], params));
    }
    let span = (max as f64).log2() - (min as f64).log2();
    let mut log_step = (span / GAIN_MAX_MAGNITUDE_CODE as f64) as f32;
    if !(log_step > 0.0) {
        log_step = 1.0;
    }
    let params = LogQuantParams { min_gain: min, log_step };
    let codes = gains.iter().map(|&g| log_code(g, params)).collect();
    Ok((codes, params))
}

#[inline]
fn log_code(g: f32, params: LogQuantParams) -> i8 {
    if g == 0.0 {
        return GAIN_ZERO_CODE;
    }
    let t = ((g as f64).log2() - params.log_min()) / params.log_step as f64;
    t.round_ties_even().clamp(0.0, GAIN_MAX_MAGNITUDE_CODE as f64) as i8
}

pub fn dequantize_gains_log_i8(codes: &[i8], params: LogQuantParams) -> Vec<f64> {
    codes.iter().map(|&c| params.decode(c)).collect()
}

/// Converts a float compressed layer to Int8: codebook and biases through
/// linear Int8 (one scale each), gains through log Int8. Indices are kept.
pub fn quantize_compressed_layer(layer: &CompressedLayer) -> Result<CompressedLayer, QuantError> {
    let CodebookEntries::Float(entries) = &layer.codebook.entries else {
        return Err(QuantError::AlreadyQuantized);
    };
    let GainTable::Float(gains) = &layer.gains else {
        return Err(QuantError::AlreadyQuantized);
    };
    let BiasTable::Float(biases) = &layer.biases else {
        return Err(QuantError::AlreadyQuantized);
    };
    let (cb_codes, cb_params) = quantize_linear_i8(entries)?;
    let (gain_codes, gain_params) = quantize_gains_log_i8(gains)?;
    let (bias_codes, bias_params) = quantize_linear_i8(biases)?;

    let mut out = layer.clone();
    out.codebook.entries = CodebookEntries::Int8 { codes: cb_codes, params: cb_params };
    out.gains = GainTable::LogInt8 { codes: gain_codes, params: gain_params };
    out.biases = BiasTable::Int8 { codes: bias_codes, params: bias_params };
    Ok(out)
}

/// Per-edge storage in bits after Int8 quantization: index bits plus one
/// byte each for gain and bias.
pub fn int8_edge_bits(k: u64) -> u64 {
    crate::lutham::index_bits(k) as u64 + 16
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_examples() {
        let (codes, p) = quantize_linear_i8(&[0.0]).unwrap();
        assert_eq!((codes, p.scale), (vec![0], 1.0));

        let (codes, p) = quantize_linear_i8(&[-1.27, 1.27]).unwrap();
        assert_eq!(codes, vec![-127, 127]);
        assert!((p.scale - 0.01).abs() < 1e-9);

        assert!((LinearQuantParams { scale: 0.01 }.dequantize(100) - 1.0).abs() < 1e-6);
        assert_eq!(LinearQuantParams { scale: 0.3 }.dequantize(0), 0.0);
        assert!(matches!(quantize_linear_i8(&[1.0, f32::NAN]), Err(QuantError::NonFinite { index: 1, .. })));
    }

    #[test]
    fn saturation_endpoint() {
        let v = [0.2f32, -3.5, 1.1];
        let (codes, _) = quantize_linear_i8(&v).unwrap();
        assert_eq!(codes[1], -127);
    }

    #[test]
    fn log_examples() {
        let (codes, p) = quantize_gains_log_i8(&[0.37; 5]).unwrap();
        assert_eq!(p.log_step, 1.0);
        assert!(codes.iter().all(|&c| c == 0));
        assert!(dequantize_gains_log_i8(&codes, p).iter().all(|&g| g == 0.37f32 as f64));

        let gains: Vec<f32> = (0..=126).map(|e| 2f32.powi(e)).collect();
        let (codes, p) = quantize_gains_log_i8(&gains).unwrap();
        assert_eq!(codes, (0..=126).collect::<Vec<i8>>());
        for (g, d) in gains.iter().zip(dequantize_gains_log_i8(&codes, p)) {
            assert_eq!(*g as f64, d);
        }

        let (codes, p) = quantize_gains_log_i8(&[0.0, 2.0, 0.5]).unwrap();
        assert_eq!(codes[0], GAIN_ZERO_CODE);
        assert_eq!(p.decode(codes[0]), 0.0);

        let (codes, _) = quantize_gains_log_i8(&[0.0, 0.0]).unwrap();
        assert_eq!(codes, vec![GAIN_ZERO_CODE; 2]);

        assert!(matches!(quantize_gains_log_i8(&[1.0, -0.1]), Err(QuantError::NegativeGain { index: 1, .. })));
    }

    #[test]
    fn sign_bit_decodes_negative() {
        let p = LogQuantParams { min_gain: 1.0, log_step: 1.0 };
        assert_eq!(p.decode((0x80u8 | 3) as i8), -8.0);
        let table = p.decode_table();
        assert_eq!(table[3], 8.0);
        assert_eq!(table[GAIN_ZERO_CODE as u8 as usize], 0.0);
    }

    #[test]
    fn storage_is_32_bits_at_64k() {
        assert_eq!(int8_edge_bits(65_536), 32);
    }

    proptest! {
        #[test]
        fn linear_is_monotone_and_idempotent(mut v in prop::collection::vec(-50.0f32..50.0, 1..64)) {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (codes, p) = quantize_linear_i8(&v).unwrap();
            prop_assert!(codes.windows(2).all(|w| w[0] <= w[1]));
            let back: Vec<f32> = dequantize_linear_i8(&codes, p).into_iter().map(|x| x as f32).collect();
            let (again, _) = quantize_linear_i8(&back).unwrap();
            prop_assert_eq!(codes, again);
        }

        #[test]
        fn log_is_monotone_and_idempotent(mut g in prop::collection::vec(0.0f32..10.0, 1..64)) {
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (codes, p) = quantize_gains_log_i8(&g).unwrap();
            let magnitudes: Vec<i32> =
                codes.iter().map(|&c| if c == GAIN_ZERO_CODE { -1 } else { c as i32 }).collect();
            prop_assert!(magnitudes.windows(2).all(|w| w[0] <= w[1]));
            let back: Vec<f32> = dequantize_gains_log_i8(&codes, p).into_iter().map(|x| x as f32).collect();
            let (again, _) = quantize_gains_log_i8(&back).unwrap();
            prop_assert_eq!(codes, again);
        }
    }
}
