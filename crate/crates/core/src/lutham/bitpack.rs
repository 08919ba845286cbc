//! Little-endian bit packing of codebook indices.
//!
//! Index `e` occupies bits `[e * width, (e + 1) * width)` of the stream, with
//! bit `n` stored in byte `n / 8` at position `n % 8` (LSB first).

/// Bytes needed for `count` values of `width` bits.
pub fn packed_len(count: u64, width: u32) -> Option<u64> {
    count.checked_mul(width as u64).map(|bits| bits.div_ceil(8))
}

/// Packs the low `width` bits of every value. `width` must be in `0..=32`.
pub fn pack(values: &[u32], width: u32) -> Vec<u8> {
    assert!(width <= 32, "bit width {width} exceeds 32");
    let len = packed_len(values.len() as u64, width).expect("packed size overflow") as usize;
    let mut out = vec![0u8; len];
    if width == 0 {
        return out;
    }
    let mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
    let mut bit = 0usize;
    for &v in values {
        let mut v = (v & mask) as u64;
        let mut remaining = width as usize;
        let mut pos = bit;
        while remaining > 0 {
            let byte = pos / 8;
            let shift = pos % 8;
            let take = (8 - shift).min(remaining);
            out[byte] |= ((v & ((1 << take) - 1)) as u8) << shift;
            v >>= take;
            pos += take;
            remaining -= take;
        }
        bit += width as usize;
    }
    out
}

/// Reads `out.len()` values of `width` bits from `bytes`. Returns `false`
/// when `bytes` is too short.
pub fn unpack_into<T: TryFrom<u32>>(bytes: &[u8], width: u32, out: &mut [T]) -> bool
where
    T::Error: std::fmt::Debug,
{
    assert!(width <= 32, "bit width {width} exceeds 32");
    let needed = packed_len(out.len() as u64, width).unwrap_or(u64::MAX);
    if (bytes.len() as u64) < needed {
        return false;
    }
    let mut bit = 0usize;
    for slot in out.iter_mut() {
        let mut v = 0u64;
        let mut got = 0usize;
        let mut pos = bit;
        while got < width as usize {
            let byte = pos / 8;
            let shift = pos % 8;
            let take = (8 - shift).min(width as usize - got);
            let chunk = (bytes[byte] as u64 >> shift) & ((1 << take) - 1);
            v |= chunk << got;
            got += take;
            pos += take;
        }
        *slot = T::try_from(v as u32).expect("value fits the table width");
        bit += width as usize;
    }
    true
}
