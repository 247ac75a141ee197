//! bfloat16 is the upper half of an IEEE-754 binary32 pattern.

/// Widening is exact: the 16 bits become the high half of the f32 pattern.
pub fn bf16_to_f32(h: u16) -> f32 {
    f32::from_bits((h as u32) << 16)
}

/// Narrowing with round-to-nearest-even on the dropped 16 bits.
/// NaN stays NaN (quiet bit forced so the payload cannot round to infinity).
pub fn f32_to_bf16(x: f32) -> u16 {
    let bits = x.to_bits();
    if x.is_nan() {
        return ((bits >> 16) as u16) | 0x0040;
    }
    let lsb = (bits >> 16) & 1;
    let rounded = bits.wrapping_add(0x7FFF + lsb);
    (rounded >> 16) as u16
}

pub fn round_trip(x: f32) -> f32 {
    bf16_to_f32(f32_to_bf16(x))
}
