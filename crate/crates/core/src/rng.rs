//! MT19937 pseudo-random generator.
//!
//! Implemented in-repo so every platform produces the same streams. Reals are
//! drawn with the 53-bit `genrand_res53` construction of the reference code.

use crate::error::{Error, Result};

const N: usize = 624;
const M: usize = 397;
const MATRIX_A: u32 = 0x9908_b0df;
const UPPER_MASK: u32 = 0x8000_0000;
const LOWER_MASK: u32 = 0x7fff_ffff;

/// Seeded Mersenne Twister stream. Single owner; clone to fork a copy.
#[derive(Clone)]
pub struct Prng {
    state: [u32; N],
    index: usize,
    seed: u32,
}

impl std::fmt::Debug for Prng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prng")
            .field("seed", &self.seed)
            .field("index", &self.index)
            .finish()
    }
}

impl Prng {
    pub fn new(seed: u32) -> Self {
        let mut state = [0u32; N];
        state[0] = seed;
        for i in 1..N {
            let prev = state[i - 1];
            state[i] = 1_812_433_253u32
                .wrapping_mul(prev ^ (prev >> 30))
                .wrapping_add(i as u32);
        }
        Prng {
            state,
            index: N,
            seed,
        }
    }

    pub fn seed(&self) -> u32 {
        self.seed
    }

    fn twist(&mut self) {
        for i in 0..N {
            let y = (self.state[i] & UPPER_MASK) | (self.state[(i + 1) % N] & LOWER_MASK);
            let mut next = self.state[(i + M) % N] ^ (y >> 1);
            if y & 1 != 0 {
                next ^= MATRIX_A;
            }
            self.state[i] = next;
        }
        self.index = 0;
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.index >= N {
            self.twist();
        }
        let mut y = self.state[self.index];
        self.index += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^= y >> 18;
        y
    }

    /// Uniform real in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        let a = (self.next_u32() >> 5) as f64;
        let b = (self.next_u32() >> 6) as f64;
        (a * 67_108_864.0 + b) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform real in [a, b).
    pub fn uniform(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uniform: empty interval [{a}, {b})"
            )));
        }
        Ok(self.uniform_unchecked(a, b))
    }

    pub(crate) fn uniform_unchecked(&mut self, a: f64, b: f64) -> f64 {
        let v = a + (b - a) * self.next_f64();
        // a + (b-a)*u can round up to b when u is within one ulp of 1
        if v >= b {
            b.next_down()
        } else {
            v
        }
    }

    /// Uniform integer in the closed range [lo, hi], without modulo bias.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> Result<u32> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "uniform_int: empty range [{lo}, {hi}]"
            )));
        }
        let span = (hi - lo) as u64 + 1;
        if span == 1 << 32 {
            return Ok(self.next_u32());
        }
        let limit = ((1u64 << 32) / span) * span;
        loop {
            let draw = self.next_u32() as u64;
            if draw < limit {
                return Ok(lo + (draw % span) as u32);
            }
        }
    }
}
