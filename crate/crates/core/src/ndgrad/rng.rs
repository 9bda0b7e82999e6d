use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Array2;
use crate::scalar::Scalar;

/// Seeded ChaCha8 stream. `(seed, stream)` pairs are independent and
/// reproduce the same sequence bit-for-bit on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "ChaCha8";

    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Bernoulli keep-mask with entries in {0, 1}; each unit kept with
    /// probability `1 - rate`.
    pub fn dropout_mask<T: Scalar>(&mut self, rows: usize, cols: usize, rate: f64) -> Array2<T> {
        let mut m = Array2::zeros(rows, cols);
        for v in m.data_mut() {
            if self.uniform() >= rate {
                *v = T::one();
            }
        }
        m
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform_array<T: Scalar>(&mut self, rows: usize, cols: usize, bound: f64) -> Array2<T> {
        let mut m = Array2::zeros(rows, cols);
        for v in m.data_mut() {
            *v = T::lit(self.uniform_in(-bound, bound));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn mask_with_zero_rate_keeps_everything() {
        let mut r = RngStream::new(1, 0);
        let m: Array2<f64> = r.dropout_mask(4, 8, 0.0);
        assert!(m.data().iter().all(|&v| v == 1.0));
    }
}
