//! Deterministic seeded sampling used by the verification sweeps.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rheology::{Mat2, StrainRate};
use crate::Real;

/// Seeded generator; identical seeds give identical sample streams.
#[derive(Debug, Clone)]
pub struct SampleRng {
    rng: ChaCha8Rng,
}

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform<T: Real>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * T::lit(self.unit())
    }

    /// Standard normal via Box–Muller.
    pub fn normal<T: Real>(&mut self) -> T {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        T::lit((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
    }

    /// Log-uniform on `[lo, hi]`, both positive.
    pub fn log_uniform<T: Real>(&mut self, lo: T, hi: T) -> T {
        (lo.ln() + (hi.ln() - lo.ln()) * T::lit(self.unit())).exp()
    }

    /// Symmetric strain with Gaussian entries of standard deviation `scale`.
    pub fn strain<T: Real>(&mut self, scale: T) -> StrainRate<T> {
        StrainRate::new(
            scale * self.normal::<T>(),
            scale * self.normal::<T>(),
            scale * self.normal::<T>(),
        )
    }

    /// General 2×2 matrix with Gaussian entries.
    pub fn mat2<T: Real>(&mut self, scale: T) -> Mat2<T> {
        Mat2([
            [scale * self.normal::<T>(), scale * self.normal::<T>()],
            [scale * self.normal::<T>(), scale * self.normal::<T>()],
        ])
    }

    /// Uniform point on the unit circle.
    pub fn unit2<T: Real>(&mut self) -> [T; 2] {
        let theta = T::lit(std::f64::consts::TAU * self.unit());
        [theta.cos(), theta.sin()]
    }

    /// Gaussian complex 2-vector (not normalised).
    pub fn complex2<T: Real>(&mut self) -> [Complex<T>; 2] {
        [
            Complex::new(self.normal(), self.normal()),
            Complex::new(self.normal(), self.normal()),
        ]
    }

    /// Uniform point on the unit sphere of ℂ².
    pub fn complex_unit2<T: Real>(&mut self) -> [Complex<T>; 2] {
        let v = self.complex2::<T>();
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        [v[0] / n, v[1] / n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SampleRng::new(42);
        let mut b = SampleRng::new(42);
        for _ in 0..10 {
            assert_eq!(a.normal::<f64>(), b.normal::<f64>());
        }
        let mut c = SampleRng::new(43);
        assert_ne!(a.unit(), c.unit());
    }

    #[test]
    fn unit_vectors_are_normalised() {
        let mut r = SampleRng::new(1);
        for _ in 0..20 {
            let u: [f64; 2] = r.unit2();
            assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-14);
            let z: [Complex<f64>; 2] = r.complex_unit2();
            assert!((z[0].norm_sqr() + z[1].norm_sqr() - 1.0).abs() < 1e-14);
        }
    }
}
