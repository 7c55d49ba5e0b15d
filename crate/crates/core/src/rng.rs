//! Reproducible random streams.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (the
//! `rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64` construction). Uniform
//! doubles take the top 53 bits of each output: `(u >> 11) · 2⁻⁵³ ∈ [0, 1)`.
//! Standard normals use the Box–Muller transform on consecutive uniform
//! pairs `(u₁, u₂)`:
//!
//! ```text
//! r  = sqrt(-2 ln(1 - u₁))
//! z₀ = r cos(2π u₂),  z₁ = r sin(2π u₂)
//! ```
//!
//! both values are used, `z₀` first. The transcendental functions come from
//! `libm`, so the stream is bit-identical on every platform.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct NoiseRng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NoiseRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(1.0 - u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    /// Uniform point in the Euclidean ball of the given radius.
    pub fn in_ball(&mut self, dim: usize, radius: f64) -> Vec<f64> {
        let mut v = self.normal_vec(dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = radius * libm::pow(self.uniform(), 1.0 / dim as f64);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x *= r / n);
        }
        v
    }
}

/// SplitMix64 finaliser, used to derive independent per-item seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of a stream rooted at `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = NoiseRng::new(7).normal_vec(100);
        let b = NoiseRng::new(7).normal_vec(100);
        assert_eq!(a, b);
        assert_ne!(a, NoiseRng::new(8).normal_vec(100));
    }

    #[test]
    fn uniform_range() {
        let mut r = NoiseRng::new(1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut r = NoiseRng::new(3);
        for _ in 0..1000 {
            let v = r.in_ball(3, 0.5);
            assert!(v.iter().map(|x| x * x).sum::<f64>().sqrt() <= 0.5 + 1e-15);
        }
    }
}
