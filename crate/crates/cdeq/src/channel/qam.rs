//! Gray-coded 16-QAM mapping, demapping, and seeded symbol generation.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BITS_PER_SYMBOL: usize = 4;

/// 1/sqrt(10): scales the {±1, ±3} grid to unit average symbol power.
const AMP: f64 = 0.316_227_766_016_837_94;

/// Gray-coded 4-PAM level for two bits (msb, lsb):
/// 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
fn pam4_level(msb: u8, lsb: u8) -> f64 {
    match (msb, lsb) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        (1, 0) => 3.0,
        _ => panic!("bits must be 0 or 1"),
    }
}

fn pam4_bits(level: f64) -> (u8, u8) {
    // Hard decision thresholds at -2, 0, +2 on the unnormalized grid.
    if level < -2.0 {
        (0, 0)
    } else if level < 0.0 {
        (0, 1)
    } else if level < 2.0 {
        (1, 1)
    } else {
        (1, 0)
    }
}

/// Map four bits [i1, i0, q1, q0] to a unit-average-power 16-QAM symbol.
pub fn map_symbol(bits: &[u8]) -> Complex64 {
    assert_eq!(bits.len(), BITS_PER_SYMBOL);
    Complex64::new(
        pam4_level(bits[0], bits[1]) * AMP,
        pam4_level(bits[2], bits[3]) * AMP,
    )
}

/// Hard-decision demap back to four bits.
pub fn demap_symbol(s: Complex64) -> [u8; 4] {
    let (i1, i0) = pam4_bits(s.re / AMP);
    let (q1, q0) = pam4_bits(s.im / AMP);
    [i1, i0, q1, q0]
}

pub fn map_bits(bits: &[u8]) -> Vec<Complex64> {
    assert_eq!(bits.len() % BITS_PER_SYMBOL, 0);
    bits.chunks(BITS_PER_SYMBOL).map(map_symbol).collect()
}

/// Random bits and their symbols for one or two polarizations,
/// reproducible per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    /// Per polarization: 4·count bits, each 0 or 1.
    pub bits: Vec<Vec<u8>>,
    /// Per polarization: count symbols.
    pub symbols: Vec<Vec<Complex64>>,
}

impl SymbolStream {
    pub fn polarizations(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols[0].len()
    }
}

/// Draw `count` uniform Gray-coded 16-QAM symbols per polarization.
pub fn generate_symbols(count: usize, seed: u64, dual_pol: bool) -> SymbolStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pols = if dual_pol { 2 } else { 1 };
    let mut bits = Vec::with_capacity(pols);
    let mut symbols = Vec::with_capacity(pols);
    for _ in 0..pols {
        let b: Vec<u8> = (0..count * BITS_PER_SYMBOL)
            .map(|_| rng.gen_range(0..2u8))
            .collect();
        symbols.push(map_bits(&b));
        bits.push(b);
    }
    SymbolStream { bits, symbols }
}

/// The 16 constellation points in bit order (b3..b0 as index).
pub fn constellation() -> Vec<Complex64> {
    (0..16u8)
        .map(|v| map_symbol(&[(v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1]))
        .collect()
}
