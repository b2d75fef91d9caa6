//! Gaussian and Kaiser-Bessel gridding kernels, unit peak.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Gaussian,
    KaiserBessel,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::KaiserBessel => "kaiser_bessel",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "kaiser_bessel" | "kb" => Ok(KernelKind::KaiserBessel),
            other => Err(format!("unknown kernel kind {other:?} (gaussian | kaiser_bessel)")),
        }
    }
}

/// `shape_param` is the Gaussian sigma in cells, or the Kaiser-Bessel beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub half_support: usize,
    pub shape_param: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian(3, 1.0)
    }
}

impl KernelSpec {
    pub fn gaussian(half_support: usize, sigma: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            half_support,
            shape_param: sigma,
        }
    }

    pub fn kaiser_bessel(half_support: usize, beta: f64) -> Self {
        Self {
            kind: KernelKind::KaiserBessel,
            half_support,
            shape_param: beta,
        }
    }

    /// Default shape parameter for a kind: sigma = 1 cell, or beta = 2.34 * S.
    pub fn default_shape(kind: KernelKind, half_support: usize) -> f64 {
        match kind {
            KernelKind::Gaussian => 1.0,
            KernelKind::KaiserBessel => 2.34 * half_support as f64,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.half_support < 1 {
            return Err("kernel half_support must be at least 1".into());
        }
        if !(self.shape_param > 0.0 && self.shape_param.is_finite()) {
            return Err(format!(
                "kernel shape_param {} must be positive",
                self.shape_param
            ));
        }
        Ok(())
    }
}

/// Modified Bessel function of the first kind, order zero, by its power
/// series `sum_k ((x/2)^k / k!)^2`, summed until terms stop contributing.
pub fn bessel_i0<T: Real>(x: T) -> T {
    let q = x * x / T::lit(4.0);
    let mut term = T::one();
    let mut sum = T::one();
    let mut k = T::one();
    loop {
        term *= q / (k * k);
        let next = sum + term;
        if next == sum {
            return sum;
        }
        sum = next;
        k += T::one();
    }
}

/// Per-axis Kaiser-Bessel numerator `I0(beta * sqrt(1 - (d/S)^2))`; zero
/// outside the support.
pub(crate) fn kb_axis<T: Real>(half_support: T, beta: T, d: T) -> T {
    let r = d / half_support;
    if r.abs() > T::one() {
        return T::zero();
    }
    bessel_i0(beta * (T::one() - r * r).sqrt())
}

/// Kernel weight at cell offset (du, dv); 1 at the origin, 0 outside
/// |offset| > half_support along either axis.
pub fn kernel_value<T: Real>(k: &KernelSpec, du: T, dv: T) -> T {
    let s = T::lit(k.half_support as f64);
    if du.abs() > s || dv.abs() > s {
        return T::zero();
    }
    let p = T::lit(k.shape_param);
    match k.kind {
        KernelKind::Gaussian => (-(du * du + dv * dv) / (T::lit(2.0) * p * p)).exp(),
        KernelKind::KaiserBessel => {
            let norm = bessel_i0(p);
            (kb_axis(s, p, du) * kb_axis(s, p, dv)) / (norm * norm)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// I0(x) = (1/pi) * integral_0^pi exp(x cos t) dt, composite Simpson.
    fn i0_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = PI / n as f64;
        let f = |t: f64| (x * t.cos()).exp();
        let mut s = f(0.0) + f(PI);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn i0_matches_quadrature() {
        for x in [0.0, 0.5, 1.0, 2.5, 6.0, 7.02, 12.0] {
            let a = bessel_i0(x);
            let b = i0_quadrature(x);
            assert!((a - b).abs() <= 1e-12 * b, "x={x}: {a} vs {b}");
        }
        assert_eq!(bessel_i0(0.0f64), 1.0);
    }

    #[test]
    fn unit_peak() {
        for k in [KernelSpec::gaussian(3, 1.0), KernelSpec::kaiser_bessel(3, 7.02)] {
            assert_eq!(kernel_value(&k, 0.0f64, 0.0), 1.0);
            assert_eq!(kernel_value(&k, 0.0f32, 0.0), 1.0);
        }
    }

    #[test]
    fn gaussian_closed_form() {
        let k = KernelSpec::gaussian(3, 1.0);
        assert!((kernel_value(&k, 1.0f64, 0.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((kernel_value(&k, 1.0f64, 0.0) - 0.606531).abs() < 1e-6);
        assert_eq!(kernel_value(&k, 3.5f64, 0.0), 0.0);
    }

    #[test]
    fn kaiser_bessel_edge() {
        let k = KernelSpec::kaiser_bessel(3, 6.0);
        let expected = 1.0 / i0_quadrature(6.0);
        let got = kernel_value(&k, 3.0f64, 0.0);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert_eq!(kernel_value(&k, 3.0001f64, 0.0), 0.0);
    }

    #[test]
    fn symmetry() {
        for k in [KernelSpec::gaussian(3, 1.3), KernelSpec::kaiser_bessel(4, 9.36)] {
            for (du, dv) in [(0.3, 1.7), (-2.2, 0.9), (2.9, -2.9), (0.0, 1.25)] {
                let a: f64 = kernel_value(&k, du, dv);
                assert_eq!(a, kernel_value(&k, -du, -dv));
                assert_eq!(a, kernel_value(&k, dv, du));
            }
        }
    }

    #[test]
    fn validation_and_defaults() {
        assert!(KernelSpec::gaussian(0, 1.0).validate().is_err());
        assert!(KernelSpec::kaiser_bessel(3, 0.0).validate().is_err());
        assert_eq!(KernelSpec::default(), KernelSpec::gaussian(3, 1.0));
        assert!((KernelSpec::default_shape(KernelKind::KaiserBessel, 3) - 7.02).abs() < 1e-12);
        assert_eq!("kb".parse::<KernelKind>().unwrap(), KernelKind::KaiserBessel);
    }
}
