//! Seeded random streams. All randomness in the crate flows from one user
//! seed through [`stream`], so two runs with the same seed are bit-identical.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math;

/// FNV-1a over the tag bytes; used to separate per-module streams.
fn fnv1a64(tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the random stream for a module: `seed XOR fnv1a64(tag)` seeds a
/// ChaCha8 generator. Different tags give independent streams from one seed.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(tag))
}

/// Standard-normal draw via the Marsaglia polar method (the spare value is
/// discarded to keep the stream position independent of call pairing).
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    loop {
        let u = unit_open(rng) * 2.0 - 1.0;
        let v = unit_open(rng) * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * math::sqrt(-2.0 * math::ln(s) / s);
        }
    }
}

/// Uniform draw in (0, 1) built from 53 random bits.
fn unit_open<R: RngCore>(rng: &mut R) -> f64 {
    loop {
        let x = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if x > 0.0 {
            return x;
        }
    }
}
