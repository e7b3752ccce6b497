//! Gray-coded 16-QAM with unit average symbol energy.

use rand::Rng;

use crate::scalar::{Cx, Real};

pub const BITS_PER_SYMBOL: usize = 4;

/// Gray-coded amplitude for a bit pair: 00 → −3, 01 → −1, 11 → +1, 10 → +3.
fn level(b0: u8, b1: u8) -> f64 {
    match (b0, b1) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

fn bits_of(amplitude: f64) -> (u8, u8) {
    if amplitude < -2.0 {
        (0, 0)
    } else if amplitude < 0.0 {
        (0, 1)
    } else if amplitude < 2.0 {
        (1, 1)
    } else {
        (1, 0)
    }
}

/// Average energy of the raw ±1/±3 grid is 10.
fn scale() -> f64 {
    1.0 / 10f64.sqrt()
}

/// Maps four bits (each 0 or 1) to a symbol.
pub fn modulate<T: Real>(bits: &[u8]) -> Cx<T> {
    debug_assert_eq!(bits.len(), BITS_PER_SYMBOL);
    let s = scale();
    Cx::new(T::lit(level(bits[0], bits[1]) * s), T::lit(level(bits[2], bits[3]) * s))
}

/// Hard-decision demapping into four bits.
pub fn demodulate<T: Real>(symbol: Cx<T>, out: &mut [u8]) {
    let inv = 1.0 / scale();
    let (a, b) = bits_of(symbol.re.to_f64_lossy() * inv);
    let (c, d) = bits_of(symbol.im.to_f64_lossy() * inv);
    out[..4].copy_from_slice(&[a, b, c, d]);
}

/// All sixteen constellation points.
pub fn alphabet<T: Real>() -> Vec<Cx<T>> {
    (0..16u8)
        .map(|i| modulate(&[(i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1]))
        .collect()
}

/// Uniformly random constellation point.
pub fn random_symbol<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Cx<T> {
    let i: u8 = rng.random_range(0..16);
    modulate(&[(i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1])
}

/// Maps a bit stream (length a multiple of four) to symbols.
pub fn modulate_stream<T: Real>(bits: &[u8]) -> Vec<Cx<T>> {
    bits.chunks_exact(BITS_PER_SYMBOL).map(modulate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_energy_and_round_trip() {
        let pts = alphabet::<f64>();
        let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
        let mut out = [0u8; 4];
        for i in 0..16u8 {
            let bits = [(i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1];
            demodulate(modulate::<f64>(&bits), &mut out);
            assert_eq!(out, bits);
        }
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        // adjacent in-phase amplitudes are one bit apart (Gray property)
        let seq = [(0, 0), (0, 1), (1, 1), (1, 0)];
        for w in seq.windows(2) {
            let diff = (w[0].0 ^ w[1].0) + (w[0].1 ^ w[1].1);
            assert_eq!(diff, 1);
        }
    }
}
