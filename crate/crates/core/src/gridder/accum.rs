//! Cell accumulators: exact fixed-point sums for the deterministic mode and
//! lock-free atomic f64 sums for the concurrent mode.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex;

use crate::scalar::Real;

/// Fractional bits of the fixed-point representation.
pub const FIXED_FRAC_BITS: i32 = 64;
/// Largest magnitude a single value may have before conversion overflows.
pub const FIXED_MAX_ABS: f64 = 4.611_686_018_427_388e18; // 2^62

const SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Complex number in 64.64 fixed point. Addition is exact and associative,
/// so sums do not depend on the order contributions arrive in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct FixedComplex {
    pub re: i128,
    pub im: i128,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("value {0} cannot be represented in 64.64 fixed point")]
pub struct FixedOverflow(pub f64);

fn to_fixed(x: f64) -> Result<i128, FixedOverflow> {
    if !x.is_finite() || x.abs() >= FIXED_MAX_ABS {
        return Err(FixedOverflow(x));
    }
    Ok((x * SCALE).round() as i128)
}

impl FixedComplex {
    pub const ZERO: FixedComplex = FixedComplex { re: 0, im: 0 };

    pub fn from_complex<T: Real>(c: Complex<T>) -> Result<Self, FixedOverflow> {
        Ok(Self {
            re: to_fixed(c.re.to_f64_lossy())?,
            im: to_fixed(c.im.to_f64_lossy())?,
        })
    }

    pub fn to_complex<T: Real>(self) -> Complex<T> {
        Complex::new(
            T::lit(self.re as f64 / SCALE),
            T::lit(self.im as f64 / SCALE),
        )
    }

    #[inline]
    pub fn checked_add(self, o: Self) -> Option<Self> {
        Some(Self {
            re: self.re.checked_add(o.re)?,
            im: self.im.checked_add(o.im)?,
        })
    }
}

impl std::ops::Add for FixedComplex {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.checked_add(o).expect("fixed-point accumulator overflow")
    }
}

/// Slab of f64 complex cells updated concurrently with compare-and-swap adds.
pub struct AtomicComplexSlab {
    cells: Vec<AtomicU64>,
}

fn atomic_add_f64(cell: &AtomicU64, x: f64) {
    let _ = cell.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
        Some((f64::from_bits(bits) + x).to_bits())
    });
}

impl AtomicComplexSlab {
    pub fn zeros(len: usize) -> Self {
        Self {
            cells: (0..2 * len).map(|_| AtomicU64::new(0f64.to_bits())).collect(),
        }
    }

    #[inline]
    pub fn add(&self, index: usize, c: Complex<f64>) {
        atomic_add_f64(&self.cells[2 * index], c.re);
        atomic_add_f64(&self.cells[2 * index + 1], c.im);
    }

    pub fn into_complex<T: Real>(self) -> Vec<Complex<T>> {
        self.cells
            .chunks_exact(2)
            .map(|p| {
                Complex::new(
                    T::lit(f64::from_bits(p[0].load(Ordering::Relaxed))),
                    T::lit(f64::from_bits(p[1].load(Ordering::Relaxed))),
                )
            })
            .collect()
    }
}
