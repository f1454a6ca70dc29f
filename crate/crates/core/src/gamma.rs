//! Gamma function on the complex plane.
//!
//! Lanczos approximation (g = 7, nine coefficients) in the right half-plane and
//! the reflection formula elsewhere. Everything is returned in log form so that
//! products of many Gamma factors can be accumulated without overflow.

use std::f64::consts::PI;

use num_complex::Complex64;

const LANCZOS_G: f64 = 7.0;

#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Principal-branch-agnostic `ln Γ(z)`.
///
/// The imaginary part is only defined modulo `2π`, which is all that matters
/// once the value is exponentiated. Poles return an infinite real part.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // Γ(z) Γ(1 − z) = π / sin(πz)
        Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma(Complex64::new(1.0, 0.0) - z)
    } else {
        let z = z - 1.0;
        let mut series = Complex64::new(LANCZOS_COEF[0], 0.0);
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            series += *c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (z + 0.5) * t.ln() - t + LN_SQRT_2PI + series.ln()
    }
}

/// `Γ(z)` for complex `z`.
pub fn gamma(z: Complex64) -> Complex64 {
    ln_gamma(z).exp()
}

/// `ln sin(πz)`, stable for large `|Im z|`.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    if z.im.abs() < 15.0 {
        return (z * PI).sin().ln();
    }
    if z.im < 0.0 {
        return ln_sin_pi(z.conj()).conj();
    }
    // sin(πz) = (i/2) e^{−iπz} (1 − e^{2iπz}); |e^{2iπz}| = e^{−2π Im z} is tiny here.
    let i = Complex64::new(0.0, 1.0);
    let small = (2.0 * PI * i * z).exp();
    -i * PI * z + Complex64::new(0.5f64.ln(), PI / 2.0) + (-small).ln_1p()
}

trait Ln1p {
    fn ln_1p(self) -> Self;
}

impl Ln1p for Complex64 {
    fn ln_1p(self) -> Self {
        if self.norm() < 1e-4 {
            self - self * self / 2.0 + self * self * self / 3.0
        } else {
            (self + 1.0).ln()
        }
    }
}

/// `Γ(x)` for real `x`, exact zero-free poles reported as infinity.
pub fn gamma_real(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    gamma(Complex64::new(x, 0.0)).re
}

/// `1/Γ(x)` for real `x`; zero at the poles of `Γ`.
pub fn rgamma_real(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    (-ln_gamma(Complex64::new(x, 0.0))).exp().re
}

/// Distance from `re` to the nearest pole of `Γ` along the real axis.
pub fn pole_distance(re: f64) -> f64 {
    if re > 0.0 {
        re
    } else {
        (re - re.floor()).min(re.ceil() - re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn real_values() {
        assert!((gamma_real(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma_real(5.0) - 24.0).abs() < 1e-12);
        assert!((gamma_real(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
        assert!((gamma_real(1e-3) - 999.423_772_484_595_5).abs() < 1e-9);
        assert_eq!(rgamma_real(-3.0), 0.0);
    }

    #[test]
    fn modulus_on_imaginary_line() {
        // |Γ(1 + iy)|² = πy / sinh(πy)
        for y in [0.3, 1.0, 4.0, 25.0, 120.0] {
            let lhs = 2.0 * ln_gamma(c(1.0, y)).re;
            let rhs = (PI * y).ln() - (PI * y).sinh().ln();
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "y = {y}");
        }
    }

    #[test]
    fn recurrence_and_reflection() {
        for z in [c(0.3, 0.7), c(-2.4, 3.1), c(4.2, -60.0), c(-7.7, -0.2), c(0.1, 300.0)] {
            let lhs = gamma(z + 1.0);
            let rhs = z * gamma(z);
            assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm(), "z = {z}");
            let refl = ln_gamma(z) + ln_gamma(1.0 - z) + ln_sin_pi(z) - PI.ln();
            let wrapped = refl.im - (2.0 * PI) * (refl.im / (2.0 * PI)).round();
            assert!(refl.re.abs() < 1e-11 && wrapped.abs() < 1e-10, "z = {z}: {refl}");
        }
    }

    #[test]
    fn large_imaginary_part_stays_finite() {
        let v = ln_gamma(c(-3.3, 800.0));
        assert!(v.re.is_finite() && v.im.is_finite());
        let w = ln_gamma(c(-3.3 + 1.0, 800.0)) - (c(-3.3, 800.0)).ln();
        let d = v - w;
        let wrapped = d.im - (2.0 * PI) * (d.im / (2.0 * PI)).round();
        assert!(d.re.abs() < 1e-9 && wrapped.abs() < 1e-8);
    }

    #[test]
    fn pole_distance_cases() {
        assert_eq!(pole_distance(0.25), 0.25);
        assert!((pole_distance(-0.3) - 0.3).abs() < 1e-15);
        assert!((pole_distance(-0.8) - 0.2).abs() < 1e-15);
    }
}
