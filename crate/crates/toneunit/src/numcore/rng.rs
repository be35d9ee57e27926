use super::Array2;

/// Portable counter-based pseudorandom generator (SplitMix64).
///
/// The update runs a 64-bit counter through a fixed avalanche mix, so an
/// identical seed plus an identical call sequence yields bitwise-identical
/// output on every platform. Constants follow the published SplitMix64
/// mixer: increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and
/// 0x94D049BB133111EB.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derives an independent generator for a named substream, so corpus
    /// splits and parameter initializers do not share a draw sequence.
    pub fn derive(&self, stream: u64) -> Rng {
        let mut r = Rng::new(self.state ^ mix(stream).wrapping_add(0xA076_1D64_78BD_642F));
        r.next_u64();
        r
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix(self.state)
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        // 53 mantissa bits, offset by half a ulp so 0.0 and 1.0 are unreachable.
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn sample_uniform(&mut self, rows: usize, cols: usize) -> Array2 {
        let mut a = Array2::zeros(rows, cols);
        for v in a.as_mut_slice() {
            *v = self.next_uniform();
        }
        a
    }

    pub fn sample_gumbel(&mut self, rows: usize, cols: usize) -> Array2 {
        let mut a = Array2::zeros(rows, cols);
        for v in a.as_mut_slice() {
            *v = gumbel_from_uniform(self.next_uniform());
        }
        a
    }
}

/// Gumbel(0,1) transform of a uniform sample, with the input clamped away
/// from 0 and 1 by 1e-12 so both logs stay finite.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(1e-12, 1.0 - 1e-12);
    -(-u.ln()).ln()
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
