//! Helmholtz fundamental solution, its gradient, and stabilized two-wavenumber
//! differences.
//!
//! The difference kernels `phi_diff` and `grad_phi_diff` are smooth across
//! x = y; near the diagonal they are computed by a power series to avoid the
//! catastrophic cancellation of subtracting two nearly equal singular values.

use nalgebra::{Point3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("wavenumber {0} lies on the negative real axis")]
    NegativeRealWavenumber(Complex64),
    #[error("refraction index must be positive and different from 1, got {0}")]
    InvalidIndex(f64),
}

/// Wavenumber pair (k, k1 = k sqrt(n)) for a constant index of refraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavenumbers {
    pub k: Complex64,
    pub k1: Complex64,
    pub n: f64,
}

impl Wavenumbers {
    pub fn new(k: Complex64, n: f64) -> Result<Self, KernelError> {
        if k.im == 0.0 && k.re <= 0.0 {
            return Err(KernelError::NegativeRealWavenumber(k));
        }
        if !(n > 0.0) || n == 1.0 {
            return Err(KernelError::InvalidIndex(n));
        }
        Ok(Self {
            k,
            k1: k * n.sqrt(),
            n,
        })
    }
}

/// Fundamental solution e^{ik|x-y|} / (4 pi |x-y|).
#[inline]
pub fn phi(k: Complex64, x: &Point3<f64>, y: &Point3<f64>) -> Complex64 {
    let r = (x - y).norm();
    (Complex64::i() * k * r).exp() / (FOUR_PI * r)
}

/// Stabilized difference Phi_{k1}(x, y) - Phi_k(x, y), smooth at x = y with
/// limit i (k1 - k) / (4 pi).
pub fn phi_diff(k1: Complex64, k: Complex64, x: &Point3<f64>, y: &Point3<f64>) -> Complex64 {
    let r = (x - y).norm();
    if k1.norm() * r < 0.5 && k.norm() * r < 0.5 {
        phi_diff_series(k1, k, r)
    } else {
        (phi_exp(k1, r) - phi_exp(k, r)) / (FOUR_PI * r)
    }
}

#[inline]
fn phi_exp(k: Complex64, r: f64) -> Complex64 {
    (Complex64::i() * k * r).exp()
}

/// (e^{i k1 r} - e^{i k r}) / (4 pi r) by termwise subtraction of the
/// exponential series: sum_{m >= 1} i^m (k1^m - k^m) r^{m-1} / (4 pi m!).
fn phi_diff_series(k1: Complex64, k: Complex64, r: f64) -> Complex64 {
    let i = Complex64::i();
    let mut p1 = Complex64::new(1.0, 0.0); // (i k1)^m / m!
    let mut p0 = Complex64::new(1.0, 0.0); // (i k)^m / m!
    let mut rpow = 1.0; // r^{m-1}
    let mut sum = Complex64::new(0.0, 0.0);
    for m in 1..=25 {
        let mf = m as f64;
        p1 *= i * k1 / mf;
        p0 *= i * k / mf;
        let term = (p1 - p0) * rpow;
        sum += term;
        if term.norm() < 1e-16 * sum.norm() {
            break;
        }
        rpow *= r;
    }
    sum / FOUR_PI
}

/// Gradient with respect to x: (ik - 1/r) Phi_k(x, y) (x - y) / r.
#[inline]
pub fn grad_phi(k: Complex64, x: &Point3<f64>, y: &Point3<f64>) -> Vector3<Complex64> {
    let d = x - y;
    let r = d.norm();
    let scalar = (Complex64::i() * k - Complex64::new(1.0 / r, 0.0)) * phi(k, x, y) / r;
    Vector3::new(scalar * d.x, scalar * d.y, scalar * d.z)
}

/// Stabilized difference grad_x Phi_{k1} - grad_x Phi_k; continuous across
/// x = y where it vanishes.
pub fn grad_phi_diff(
    k1: Complex64,
    k: Complex64,
    x: &Point3<f64>,
    y: &Point3<f64>,
) -> Vector3<Complex64> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Vector3::zeros();
    }
    let scalar = if k1.norm() * r < 0.5 && k.norm() * r < 0.5 {
        // With f(r) = 4 pi phi_diff = sum c_m r^{m-1}, c_m = i^m (k1^m - k^m)/m!,
        // the gradient is f'(r) (x-y)/r; f'(r) = sum (m-1) c_m r^{m-2}.
        let i = Complex64::i();
        let mut p1 = i * k1; // (i k1)^m / m!
        let mut p0 = i * k;
        let mut rpow = 1.0; // r^{m-2} for m = 2
        let mut sum = Complex64::new(0.0, 0.0);
        for m in 2..=25 {
            let mf = m as f64;
            p1 *= i * k1 / mf;
            p0 *= i * k / mf;
            let term = (mf - 1.0) * (p1 - p0) * rpow;
            sum += term;
            if term.norm() < 1e-16 * sum.norm() {
                break;
            }
            rpow *= r;
        }
        sum / (FOUR_PI * r)
    } else {
        let g1 = (Complex64::i() * k1 - Complex64::new(1.0 / r, 0.0)) * phi_exp(k1, r);
        let g0 = (Complex64::i() * k - Complex64::new(1.0 / r, 0.0)) * phi_exp(k, r);
        (g1 - g0) / (FOUR_PI * r * r)
    };
    Vector3::new(scalar * d.x, scalar * d.y, scalar * d.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn pt(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    #[test]
    fn wavenumber_validation() {
        assert!(Wavenumbers::new(Complex64::new(1.0, 0.0), 4.0).is_ok());
        assert!(Wavenumbers::new(Complex64::new(0.0, 1.0), 4.0).is_ok());
        assert!(matches!(
            Wavenumbers::new(Complex64::new(-1.0, 0.0), 4.0),
            Err(KernelError::NegativeRealWavenumber(_))
        ));
        assert!(matches!(
            Wavenumbers::new(Complex64::new(0.0, 0.0), 4.0),
            Err(KernelError::NegativeRealWavenumber(_))
        ));
        assert!(matches!(
            Wavenumbers::new(Complex64::new(1.0, 0.0), 1.0),
            Err(KernelError::InvalidIndex(_))
        ));
        assert!(matches!(
            Wavenumbers::new(Complex64::new(1.0, 0.0), -2.0),
            Err(KernelError::InvalidIndex(_))
        ));
        let w = Wavenumbers::new(Complex64::new(2.0, 0.0), 4.0).unwrap();
        assert!((w.k1 - Complex64::new(4.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phi_unit_distance_values() {
        // e^{i}/(4 pi) and e^{-1}/(4 pi) at |x - y| = 1.
        let x = pt(0.0, 0.0, 0.0);
        let y = pt(1.0, 0.0, 0.0);
        let v = phi(Complex64::new(1.0, 0.0), &x, &y);
        let expected = Complex64::new(1.0f64.cos(), 1.0f64.sin()) / (4.0 * std::f64::consts::PI);
        assert!((v - expected).norm() < 1e-15);
        assert!((v - Complex64::new(0.043_0, 0.066_96)).norm() < 1e-4);
        let v = phi(Complex64::new(0.0, 1.0), &x, &y);
        assert!((v - Complex64::new((-1.0f64).exp() / (4.0 * std::f64::consts::PI), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phi_diff_matches_direct_at_moderate_r() {
        let k = Complex64::new(2.0, 0.3);
        let k1 = Complex64::new(4.1, 0.6);
        let x = pt(0.0, 0.0, 0.0);
        let y = pt(0.7, 0.2, -0.4);
        let direct = phi(k1, &x, &y) - phi(k, &x, &y);
        let stab = phi_diff(k1, k, &x, &y);
        assert!((direct - stab).norm() < 1e-14 * direct.norm());
    }

    #[test]
    fn phi_diff_limit_at_coincidence() {
        let k = Complex64::new(3.0, 0.0);
        let k1 = Complex64::new(6.0, 0.0);
        let x = pt(0.3, 0.1, 0.2);
        let v = phi_diff(k1, k, &x, &x);
        let expected = Complex64::i() * (k1 - k) / (4.0 * std::f64::consts::PI);
        assert!((v - expected).norm() < 1e-15);
    }

    #[test]
    fn phi_diff_continuous_across_series_switch() {
        let k = Complex64::new(1.0, 0.2);
        let k1 = Complex64::new(2.0, 0.4);
        // Switch happens at |k1| r = 0.5 -> r = 0.5 / |k1|.
        let r_switch = 0.5 / k1.norm();
        let x = pt(0.0, 0.0, 0.0);
        let below = phi_diff(k1, k, &x, &pt(r_switch * (1.0 - 1e-12), 0.0, 0.0));
        let above = phi_diff(k1, k, &x, &pt(r_switch * (1.0 + 1e-12), 0.0, 0.0));
        assert!((below - above).norm() < 1e-11 * below.norm());

        let gb = grad_phi_diff(k1, k, &pt(r_switch * (1.0 - 1e-12), 0.0, 0.0), &x);
        let ga = grad_phi_diff(k1, k, &pt(r_switch * (1.0 + 1e-12), 0.0, 0.0), &x);
        let diff = (gb - ga).map(|c| c.norm()).norm();
        let scale = gb.map(|c| c.norm()).norm();
        assert!(diff < 1e-9 * scale.max(1e-30));
    }

    #[test]
    fn grad_phi_finite_difference() {
        let k = Complex64::new(1.7, 0.4);
        let x = pt(0.3, -0.2, 0.5);
        let y = pt(-0.4, 0.6, 0.1);
        let g = grad_phi(k, &x, &y);
        let h = 1e-6;
        for axis in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (phi(k, &xp, &y) - phi(k, &xm, &y)) / (2.0 * h);
            assert!((g[axis] - fd).norm() < 1e-6 * g[axis].norm().max(1.0), "axis {axis}");
        }
    }

    #[test]
    fn grad_phi_diff_finite_difference_and_origin() {
        let k = Complex64::new(1.3, 0.0);
        let k1 = Complex64::new(2.6, 0.0);
        let x = pt(0.05, 0.02, -0.03);
        let y = pt(0.0, 0.0, 0.0);
        let g = grad_phi_diff(k1, k, &x, &y);
        let h = 1e-6;
        for axis in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (phi_diff(k1, k, &xp, &y) - phi_diff(k1, k, &xm, &y)) / (2.0 * h);
            assert!((g[axis] - fd).norm() < 1e-6, "axis {axis}: {} vs {}", g[axis], fd);
        }
        assert_eq!(grad_phi_diff(k1, k, &y, &y), nalgebra::Vector3::zeros());
    }

    #[test]
    fn phi_is_holomorphic_in_k() {
        // Cauchy-Riemann via complex finite differences: df/dk along the real
        // and imaginary directions must agree.
        let x = pt(0.0, 0.0, 0.0);
        let y = pt(0.9, 0.1, 0.3);
        let k = Complex64::new(1.5, 0.7);
        let h = 1e-6;
        let d_re = (phi(k + h, &x, &y) - phi(k - h, &x, &y)) / (2.0 * h);
        let d_im = (phi(k + Complex64::new(0.0, h), &x, &y)
            - phi(k - Complex64::new(0.0, h), &x, &y))
            / Complex64::new(0.0, 2.0 * h);
        assert!((d_re - d_im).norm() < 1e-6 * d_re.norm());
    }

    #[test]
    fn phi_diff_small_r_cancelation_resistance() {
        // At tiny separations the direct subtraction loses most digits; the
        // series value must stay smooth and close to the r -> 0 limit.
        let k = Complex64::new(2.0, 0.0);
        let k1 = Complex64::new(4.0, 0.0);
        let x = pt(0.0, 0.0, 0.0);
        let limit = Complex64::i() * (k1 - k) / (4.0 * std::f64::consts::PI);
        let v = phi_diff(k1, k, &x, &pt(1e-10, 0.0, 0.0));
        assert!((v - limit).norm() < 1e-9 * limit.norm());
    }
}
