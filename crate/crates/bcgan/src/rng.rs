//! Seedable random number generation with documented, platform-independent
//! algorithms.
//!
//! The generator is xoshiro256++ (Blackman & Vigna), seeded through the
//! SplitMix64 finalizer. Independent streams are derived by absorbing a list
//! of indices into the base seed with SplitMix64 mixing, so every simulation,
//! training run, and evaluation batch gets its own reproducible stream.

/// SplitMix64 finalizer; also used as the stream-derivation mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// xoshiro256++ PRNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: [u64; 4],
}

impl Rng {
    /// Seed via four rounds of SplitMix64, as recommended by the xoshiro authors.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for s in &mut state {
            sm = sm.wrapping_add(0x9e3779b97f4a7c15);
            *s = mix64(sm);
        }
        // All-zero state is invalid for xoshiro; mix64 of distinct inputs
        // cannot produce four zeros, but guard anyway.
        if state == [0; 4] {
            state[0] = 1;
        }
        Rng { state }
    }

    /// Derive an independent stream from a base seed and a list of indices.
    pub fn derive(base_seed: u64, indices: &[u64]) -> Self {
        let mut h = mix64(base_seed);
        for &ix in indices {
            h = mix64(h ^ ix.wrapping_mul(0x9e3779b97f4a7c15));
        }
        Rng::seed_from_u64(h)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, 1) with 24 bits of precision.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform integer in [0, n) via 128-bit multiply-shift.
    /// Bias is O(n / 2^64), negligible for lattice-sized n.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Random sign, +1 or -1.
    #[inline]
    pub fn next_spin(&mut self) -> i8 {
        if self.next_u64() & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// Standard normal via Box-Muller (one draw per call, cosine branch).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    pub fn from_state(state: [u64; 4]) -> Self {
        Rng { state }
    }
}
