//! Keyed, counter-addressable random streams.
//!
//! Every random quantity in this crate — a projection-matrix entry, a noise
//! coordinate, a synthetic wrong-class draw — is a pure function of a 64-bit
//! key and a 64-bit counter. There is no hidden generator state to thread
//! through call sites, so any single value can be regenerated in isolation,
//! work can be parallelized without coordination, and two runs with the same
//! key agree bit for bit on every platform.
//!
//! The construction is the splitmix64 finalizer applied to a Weyl sequence:
//! `mix64(key + (counter + 1) * GAMMA)`.

/// Weyl-sequence increment (2^64 / golden ratio, forced odd).
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; a full-avalanche bijection on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes; folds string identifiers (layer names, tags) into keys.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// The `counter`-th word of the stream identified by `key`.
#[inline]
pub fn stream_u64(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Uniform draw in the open interval (0, 1) with 53-bit resolution.
///
/// `(bits + 0.5) / 2^53` keeps both endpoints strictly out, so a logarithm
/// of the result is always finite.
#[inline]
pub fn stream_unit(key: u64, counter: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((stream_u64(key, counter) >> 11) as f64 + 0.5) * SCALE
}

/// Standard-normal draw at stream position `index`.
///
/// Box–Muller, cosine branch; consumes counters `2*index` and `2*index + 1`,
/// so a caller that wants `n` independent normals uses indices `0..n`.
#[inline]
pub fn stream_normal(key: u64, index: u64) -> f64 {
    let u1 = stream_unit(key, 2 * index);
    let u2 = stream_unit(key, 2 * index + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform integer in `[0, bound)` at stream position `counter`.
///
/// Multiply-high range reduction; the modulo bias is on the order of
/// `bound / 2^64` and irrelevant for the class counts used here.
pub fn stream_index(key: u64, counter: u64, bound: u64) -> u64 {
    debug_assert!(bound > 0, "stream_index requires a positive bound");
    ((u128::from(stream_u64(key, counter)) * u128::from(bound)) >> 64) as u64
}

/// Derive an independent sub-key for a labeled purpose and lane.
///
/// Distinct `(tag, lane)` pairs yield streams that never share counters with
/// the parent or with each other in practice.
pub fn derive_key(key: u64, tag: &str, lane: u64) -> u64 {
    mix64(key ^ fnv1a64(tag.as_bytes()) ^ mix64(lane.wrapping_mul(GAMMA)))
}
