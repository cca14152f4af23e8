//! Seeded pseudo-random streams.
//!
//! Everything random in this crate (scenario data, corruptions, weight
//! initialization, mini-batch shuffling, mixup coefficients) is drawn from
//! [`SplitMix64`]. The algorithms below are fixed so that any other
//! implementation following them reproduces the same streams:
//!
//! * `next_u64`: SplitMix64 (Steele, Lea, Flood).
//! * `next_f64`: top 53 bits of `next_u64`, scaled by 2^-53, in `[0, 1)`.
//! * `next_gaussian`: Box–Muller cosine branch, `u1 = 1 - next_f64()`,
//!   `u2 = next_f64()`, `sqrt(-2 ln u1) * cos(2π u2)`. One normal per two
//!   uniforms; the sine branch is discarded.
//! * `below(n)`: multiply-shift `(next_u64() * n) >> 64`.
//! * `gamma(a)`: Marsaglia–Tsang, with the `U^(1/a)` boost for `a < 1`.
//! * `beta(a, b)`: `X / (X + Y)` for independent gammas, X drawn first.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// An independent stream keyed by `(seed, tag)`.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Self::new(mix64(seed ^ mix64(tag.wrapping_add(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let boost = self.next_f64().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_gaussian();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_f64();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }

    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a);
        let y = self.gamma(b);
        x / (x + y)
    }
}

/// Source of standard normal draws.
///
/// Corruptions take this rather than a concrete generator so a degenerate
/// source can stand in for it.
pub trait GaussianSource {
    fn next_gaussian(&mut self) -> f64;
}

impl GaussianSource for SplitMix64 {
    fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

impl SplitMix64 {
    pub fn next_gaussian(&mut self) -> f64 {
        GaussianSource::next_gaussian(self)
    }
}
