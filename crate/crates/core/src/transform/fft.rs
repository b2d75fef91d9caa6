//! Iterative in-place radix-2 FFT.

use num_complex::Complex;

use crate::scalar::Real;

/// Sign of the exponent: forward uses `e^{-2πi kn/N}`, inverse `e^{+2πi kn/N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Precomputed twiddles and bit-reversal table for one length.
#[derive(Debug, Clone)]
pub struct Fft<T> {
    n: usize,
    twiddles: Vec<Complex<T>>,
    rev: Vec<usize>,
}

impl<T: Real> Fft<T> {
    /// Plans a transform of length `n`, which must be a power of two.
    pub fn new(n: usize) -> Option<Self> {
        if n == 0 || !n.is_power_of_two() {
            return None;
        }
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        // twiddles e^{-2πi j/n}, evaluated in f64
        let twiddles = (0..n / 2)
            .map(|j| {
                let a = -2.0 * std::f64::consts::PI * j as f64 / n as f64;
                Complex::new(T::lit(a.cos()), T::lit(a.sin()))
            })
            .collect();
        Some(Self { n, twiddles, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized transform of `data` in place.
    pub fn process(&self, data: &mut [Complex<T>], dir: Direction) {
        assert_eq!(data.len(), self.n, "fft length mismatch");
        for i in 0..self.n {
            let j = self.rev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for j in 0..half {
                    let mut w = self.twiddles[j * stride];
                    if dir == Direction::Inverse {
                        w = w.conj();
                    }
                    let a = data[start + j];
                    let b = data[start + j + half] * w;
                    data[start + j] = a + b;
                    data[start + j + half] = a - b;
                }
            }
            len *= 2;
        }
    }
}

/// 2D transform of a full `n_v × n_u` row-major array; the inverse is scaled
/// by `1/(n_u·n_v)`.
pub fn fft2d<T: Real>(data: &mut [Complex<T>], n_u: usize, n_v: usize, dir: Direction) -> Option<()> {
    let row = Fft::<T>::new(n_u)?;
    let col = Fft::<T>::new(n_v)?;
    assert_eq!(data.len(), n_u * n_v);
    for r in data.chunks_exact_mut(n_u) {
        row.process(r, dir);
    }
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_v];
    for c in 0..n_u {
        for (v, b) in buf.iter_mut().enumerate() {
            *b = data[v * n_u + c];
        }
        col.process(&mut buf, dir);
        for (v, b) in buf.iter().enumerate() {
            data[v * n_u + c] = *b;
        }
    }
    if dir == Direction::Inverse {
        scale(data, n_u * n_v);
    }
    Some(())
}

pub(crate) fn scale<T: Real>(data: &mut [Complex<T>], n: usize) {
    let s = T::one() / T::lit(n as f64);
    for x in data {
        *x *= s;
    }
}
