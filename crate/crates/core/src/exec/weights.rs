use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::Real;

/// Deterministic per-layer weight draws keyed by `(seed, branch, layer)`.
pub(crate) struct WeightSource<'a> {
    seed: u64,
    branch: &'a str,
}

impl<'a> WeightSource<'a> {
    pub(crate) fn new(seed: u64, branch: &'a str) -> Self {
        Self { seed, branch }
    }

    /// `[kvol][cin][cout]` weights, uniform in `±1/sqrt(kvol * cin)`.
    pub(crate) fn draw<T: Real>(&self, layer: &str, kvol: usize, cin: usize, cout: usize) -> Vec<T> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.branch.as_bytes());
        h.update([0u8]);
        h.update(layer.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(key);
        let fan_in = (kvol * cin).max(1) as f64;
        let bound = 1.0 / fan_in.sqrt();
        (0..kvol * cin * cout).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
    }
}

#[inline]
pub(crate) fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// `x <- relu(x + r)`.
#[inline]
pub(crate) fn add_relu<T: Real>(x: &mut [T], r: &[T]) {
    for (a, &b) in x.iter_mut().zip(r) {
        let s = *a + b;
        *a = if s > T::zero() { s } else { T::zero() };
    }
}

/// `out += v * w` over a weight row.
#[inline]
pub(crate) fn axpy<T: Real>(out: &mut [T], v: T, w: &[T]) {
    for (a, &b) in out.iter_mut().zip(w) {
        *a += v * b;
    }
}

/// Row-wise concatenation of two `[n, ca]` and `[n, cb]` matrices.
pub(crate) fn concat_rows<T: Real>(a: &[T], ca: usize, b: &[T], cb: usize) -> Vec<T> {
    let n = a.len().checked_div(ca).unwrap_or_else(|| b.len() / cb.max(1));
    let mut out = Vec::with_capacity(n * (ca + cb));
    for i in 0..n {
        out.extend_from_slice(&a[i * ca..(i + 1) * ca]);
        out.extend_from_slice(&b[i * cb..(i + 1) * cb]);
    }
    out
}
