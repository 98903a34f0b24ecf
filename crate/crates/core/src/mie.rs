//! Separation-of-variables reference solution on spheres.
//!
//! For a ball of radius R with constant index n, the transmission eigenvalues
//! split into independent electric and magnetic multipole families, each
//! governed by a 2x2 matching determinant in spherical Bessel functions.
//! These roots serve as an oracle for the boundary-element solver.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MieError {
    #[error("invalid search interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("refraction index must be positive and different from 1, got {0}")]
    InvalidIndex(f64),
}

/// Multipole family of a spherical transmission eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Magnetic multipoles (electric field transverse to the radius).
    Te,
    /// Electric multipoles.
    Tm,
}

/// Spherical Bessel functions j_0..j_lmax at a complex argument, by Miller's
/// downward recurrence normalized against j_0 = sin(z)/z.
pub fn spherical_j(lmax: usize, z: Complex64) -> Vec<Complex64> {
    if z.norm() < 1e-30 {
        let mut out = vec![Complex64::new(0.0, 0.0); lmax + 1];
        out[0] = Complex64::new(1.0, 0.0);
        return out;
    }
    let start = lmax + 30 + (1.5 * z.norm()) as usize;
    let mut jp = Complex64::new(0.0, 0.0);
    // Seed magnitude keeps the unnormalized j_0 well inside the normal
    // range, so the final division does not underflow.
    let mut jc = Complex64::new(1e-30, 0.0);
    let mut out = vec![Complex64::new(0.0, 0.0); lmax + 1];
    for l in (0..start).rev() {
        let jm = Complex64::new(2.0 * l as f64 + 3.0, 0.0) / z * jc - jp;
        jp = jc;
        jc = jm;
        if l <= lmax {
            out[l] = jc;
        }
        // Rescale to dodge overflow; only ratios matter before normalizing.
        if jc.norm() > 1e250 {
            let s = 1e-250;
            jp *= s;
            jc *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    let norm = z.sin() / z / out[0];
    for v in out.iter_mut() {
        *v *= norm;
    }
    out
}

/// Spherical Bessel functions of the second kind y_0..y_lmax (upward
/// recurrence, stable in this direction).
pub fn spherical_y(lmax: usize, z: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(lmax + 1);
    let y0 = -z.cos() / z;
    out.push(y0);
    if lmax >= 1 {
        out.push(-z.cos() / (z * z) - z.sin() / z);
    }
    for l in 1..lmax {
        let next = Complex64::new(2.0 * l as f64 + 1.0, 0.0) / z * out[l] - out[l - 1];
        out.push(next);
    }
    out
}

/// Spherical Hankel functions of the first kind h_l = j_l + i y_l.
pub fn spherical_h1(lmax: usize, z: Complex64) -> Vec<Complex64> {
    let j = spherical_j(lmax, z);
    let y = spherical_y(lmax, z);
    j.iter()
        .zip(&y)
        .map(|(a, b)| a + Complex64::i() * b)
        .collect()
}

/// Derivative of the Riccati-Bessel function xi_l(z) = z j_l(z):
/// xi_l'(z) = z j_{l-1}(z) - l j_l(z) (for l >= 1; xi_0' = cos z).
fn riccati_j_derivative(l: usize, z: Complex64, j: &[Complex64]) -> Complex64 {
    if l == 0 {
        z.cos()
    } else {
        z * j[l - 1] - Complex64::new(l as f64, 0.0) * j[l]
    }
}

/// Matching determinant of the multipole `family` at order `l` for wavenumber
/// `k`, index `n`, ball radius `radius`. Transmission eigenvalues are its
/// roots in k.
pub fn determinant(family: Family, l: usize, n: f64, radius: f64, k: Complex64) -> Complex64 {
    let k1 = k * n.sqrt();
    let z0 = k * radius;
    let z1 = k1 * radius;
    let j0 = spherical_j(l, z0);
    let j1 = spherical_j(l, z1);
    let xi0 = riccati_j_derivative(l, z0, &j0);
    let xi1 = riccati_j_derivative(l, z1, &j1);
    match family {
        // Tangential-E continuity: j_l; tangential-curl continuity: xi_l'/r.
        Family::Te => j1[l] * xi0 - j0[l] * xi1,
        // Electric multipoles swap the roles and pick up 1/k factors.
        Family::Tm => (xi1 / k1) * (k * j0[l]) - (xi0 / k) * (k1 * j1[l]),
    }
}

/// A located transmission eigenvalue of the sphere.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MieRoot {
    pub k: f64,
    /// True when the determinant touches zero without a sign change, so the
    /// bracketing count is unreliable there.
    pub grazing: bool,
}

/// Root table for one multipole family, exported as JSON by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct RootTable {
    pub family: Family,
    pub l: usize,
    pub n: f64,
    pub radius: f64,
    pub roots: Vec<MieRoot>,
}

/// Finds roots of a real-valued function on (k_min, k_max): sign-change
/// bracketing on a grid of step <= 0.01 followed by bisection to 1e-10.
/// Local minima of |f| that reach (near) zero without a sign change are
/// reported as grazing (even-multiplicity) roots.
pub fn find_roots_of<F: Fn(f64) -> f64>(f: F, k_min: f64, k_max: f64) -> Vec<MieRoot> {
    let steps = ((k_max - k_min) / 0.01).ceil().max(2.0) as usize;
    let h = (k_max - k_min) / steps as f64;
    let values: Vec<f64> = (0..=steps).map(|i| f(k_min + i as f64 * h)).collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut roots = Vec::new();
    for i in 0..steps {
        let (a, b) = (k_min + i as f64 * h, k_min + (i + 1) as f64 * h);
        let (fa, fb) = (values[i], values[i + 1]);
        if fa == 0.0 {
            // Exact grid hit; even multiplicity shows as equal signs around.
            let grazing = i > 0 && values[i - 1] * values[i + 1] > 0.0;
            roots.push(MieRoot { k: a, grazing });
        } else if fa * fb < 0.0 {
            let mut lo = a;
            let mut hi = b;
            let mut flo = fa;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(MieRoot {
                k: 0.5 * (lo + hi),
                grazing: false,
            });
        } else if i > 0
            && values[i].abs() <= values[i - 1].abs()
            && values[i].abs() <= values[i + 1].abs()
            && values[i].abs() < 1e-2 * scale
            && values[i - 1] * values[i] > 0.0
            && values[i] * values[i + 1] > 0.0
        {
            // Candidate grazing root: refine the |f| minimum by golden
            // section and accept only if it touches zero.
            let (kmin_loc, fmin) =
                golden_min(|k| f(k).abs(), k_min + (i as f64 - 1.0) * h, b, 1e-10);
            if fmin < 1e-9 * scale {
                roots.push(MieRoot {
                    k: kmin_loc,
                    grazing: true,
                });
            }
        }
    }
    roots
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Finds the real transmission eigenvalues of `family` at order `l` in
/// (k_min, k_max).
pub fn find_roots(
    family: Family,
    l: usize,
    n: f64,
    radius: f64,
    k_min: f64,
    k_max: f64,
) -> Result<RootTable, MieError> {
    if !(k_min > 0.0 && k_max > k_min) {
        return Err(MieError::BadInterval(k_min, k_max));
    }
    if !(n > 0.0) || n == 1.0 {
        return Err(MieError::InvalidIndex(n));
    }
    let roots = find_roots_of(
        |k| determinant(family, l, n, radius, Complex64::new(k, 0.0)).re,
        k_min,
        k_max,
    );
    Ok(RootTable {
        family,
        l,
        n,
        radius,
        roots,
    })
}

/// Eigenvalue of the scalar acoustic single-layer operator on the unit
/// sphere for spherical-harmonic order l: i k j_l(k) h^(1)_l(k).
pub fn single_layer_eigenvalue(l: usize, k: Complex64) -> Complex64 {
    let j = spherical_j(l, k);
    let h = spherical_h1(l, k);
    Complex64::i() * k * j[l] * h[l]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_low_order_closed_forms() {
        let z = Complex64::new(1.0, 0.0);
        let j = spherical_j(2, z);
        assert!((j[0] - Complex64::new(0.841_470_984_807_897, 0.0)).norm() < 1e-14);
        assert!((j[1] - Complex64::new(0.301_168_678_939_757, 0.0)).norm() < 1e-14);
        // j_2 = (3/z^2 - 1) sin z / z - 3 cos z / z^2
        let j2 = (3.0f64 - 1.0) * 1.0f64.sin() - 3.0 * 1.0f64.cos();
        assert!((j[2].re - j2).abs() < 1e-14);
        let y = spherical_y(1, z);
        assert!((y[0] - Complex64::new(-0.540_302_305_868_140, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn bessel_complex_argument() {
        // j_0(i) = sin(i)/i = sinh(1).
        let j = spherical_j(0, Complex64::new(0.0, 1.0));
        assert!((j[0] - Complex64::new(1.0f64.sinh(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn wronskian_identity() {
        // j_l(z) y_l'(z) - j_l'(z) y_l(z) = 1/z^2, with
        // f_l' = f_{l-1} - (l+1)/z f_l.
        for &zr in &[0.7, 3.3, 12.9] {
            let z = Complex64::new(zr, 0.0);
            let lmax = 8;
            let j = spherical_j(lmax, z);
            let y = spherical_y(lmax, z);
            for l in 1..=lmax {
                let lp = Complex64::new((l + 1) as f64, 0.0);
                let jd = j[l - 1] - lp / z * j[l];
                let yd = y[l - 1] - lp / z * y[l];
                let w = j[l] * yd - jd * y[l];
                let exact = 1.0 / (z * z);
                assert!((w - exact).norm() < 1e-12 * exact.norm(), "l={l} z={zr}");
            }
        }
    }

    #[test]
    fn bessel_stable_at_high_order() {
        // Downward recurrence must survive orders far above |z|.
        let j = spherical_j(40, Complex64::new(2.0, 0.0));
        assert!(j.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        // j_l at l >> |z| is tiny but positive for real positive z.
        assert!(j[40].re > 0.0 && j[40].re < 1e-30);
    }

    #[test]
    fn single_layer_eigenvalue_frozen() {
        let v = single_layer_eigenvalue(0, Complex64::new(1.0, 0.0));
        assert!((v - Complex64::new(0.454_648_713, 0.708_073_418)).norm() < 1e-8, "{v}");
    }

    #[test]
    fn determinant_real_on_real_axis() {
        for &k in &[0.8, 2.1, 4.4] {
            for family in [Family::Te, Family::Tm] {
                let d = determinant(family, 1, 4.0, 1.0, Complex64::new(k, 0.0));
                assert!(d.im.abs() < 1e-13 * d.re.abs().max(1e-10));
            }
        }
    }

    #[test]
    fn roots_satisfy_matching_residual() {
        // Independent check of each root: the 2x2 matching system must be
        // solvable, i.e. substituting the amplitude ratio from the first
        // matching equation into the second leaves a tiny residual.
        for family in [Family::Te, Family::Tm] {
            for l in 1..=3 {
                let table = find_roots(family, l, 4.0, 1.0, 1.0, 8.0).unwrap();
                assert!(!table.roots.is_empty(), "{family:?} l={l}");
                for root in &table.roots {
                    if root.grazing {
                        continue;
                    }
                    let k = Complex64::new(root.k, 0.0);
                    let k1 = k * 2.0;
                    let j0 = spherical_j(l, k);
                    let j1 = spherical_j(l, k1);
                    let xi0 = riccati_j_derivative(l, k, &j0);
                    let xi1 = riccati_j_derivative(l, k1, &j1);
                    let (r1, r2) = match family {
                        Family::Te => (j1[l] / j0[l], xi1 / xi0),
                        Family::Tm => ((xi1 / k1) / (xi0 / k), (k1 * j1[l]) / (k * j0[l])),
                    };
                    let res = (r1 - r2).norm() / r1.norm().max(r2.norm());
                    assert!(res < 1e-8, "{family:?} l={l} k={}: residual {res}", root.k);
                }
            }
        }
    }

    #[test]
    fn hankel_closed_form() {
        // h1_0(z) = -i e^{iz} / z.
        for z in [Complex64::new(0.0, 1.0), Complex64::new(2.3, 0.4)] {
            let h = spherical_h1(0, z);
            let exact = -Complex64::i() * (Complex64::i() * z).exp() / z;
            assert!((h[0] - exact).norm() < 1e-13 * exact.norm(), "{z}");
        }
    }

    #[test]
    fn synthetic_roots_simple_and_grazing() {
        let simple = find_roots_of(|k| k - 2.0, 1.0, 3.0);
        assert_eq!(simple.len(), 1);
        assert!((simple[0].k - 2.0).abs() < 1e-10 && !simple[0].grazing);

        let grazing = find_roots_of(|k| (k - 2.0) * (k - 2.0), 1.0, 3.0);
        assert_eq!(grazing.len(), 1);
        assert!(grazing[0].grazing, "double root must be flagged");
        assert!((grazing[0].k - 2.0).abs() < 1e-5);

        // A positive function with a nonzero minimum yields nothing.
        assert!(find_roots_of(|k| (k - 2.0) * (k - 2.0) + 0.5, 1.0, 3.0).is_empty());
    }

    #[test]
    fn determinant_vanishes_in_unit_contrast_limit() {
        // n -> 1: both media coincide and every determinant degenerates.
        let scale = (0..=40)
            .map(|i| {
                determinant(Family::Te, 1, 4.0, 1.0, Complex64::new(1.0 + 0.1 * i as f64, 0.0))
                    .norm()
            })
            .fold(0.0f64, f64::max);
        let degenerate = (0..=40)
            .map(|i| {
                determinant(
                    Family::Te,
                    1,
                    1.0 + 1e-8,
                    1.0,
                    Complex64::new(1.0 + 0.1 * i as f64, 0.0),
                )
                .norm()
            })
            .fold(0.0f64, f64::max);
        assert!(degenerate < 1e-6 * scale, "{degenerate} vs scale {scale}");
    }

    #[test]
    fn single_layer_laplace_limit_and_conjugation() {
        // k -> 0: eigenvalue tends to the Laplace value 1/(2l+1).
        for l in 0..3 {
            let v = single_layer_eigenvalue(l, Complex64::new(1e-4, 0.0));
            let exact = 1.0 / (2.0 * l as f64 + 1.0);
            assert!((v.re - exact).abs() < 1e-3 * exact, "l={l}: {v}");
        }
        // Kernel conjugation: Phi_{-conj(k)} = conj(Phi_k), so the operator
        // eigenvalues satisfy lambda(-conj(k)) = conj(lambda(k)).
        let k = Complex64::new(1.3, 0.7);
        let a = single_layer_eigenvalue(2, -k.conj());
        let b = single_layer_eigenvalue(2, k).conj();
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn root_count_stable_under_interval_split() {
        let full = find_roots(Family::Te, 1, 4.0, 1.0, 1.0, 6.0).unwrap();
        let lo = find_roots(Family::Te, 1, 4.0, 1.0, 1.0, 3.5).unwrap();
        let hi = find_roots(Family::Te, 1, 4.0, 1.0, 3.5, 6.0).unwrap();
        assert_eq!(full.roots.len(), lo.roots.len() + hi.roots.len());
    }

    #[test]
    fn roots_scale_inversely_with_radius() {
        // k R is the dimensionless eigenparameter: halving R doubles k.
        let r1 = find_roots(Family::Tm, 1, 4.0, 1.0, 1.0, 4.0).unwrap();
        let r2 = find_roots(Family::Tm, 1, 4.0, 0.5, 2.0, 8.0).unwrap();
        assert_eq!(r1.roots.len(), r2.roots.len());
        for (a, b) in r1.roots.iter().zip(&r2.roots) {
            assert!((2.0 * a.k - b.k).abs() < 1e-7, "{} vs {}", a.k, b.k);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            find_roots(Family::Te, 1, 4.0, 1.0, 3.0, 2.0),
            Err(MieError::BadInterval(_, _))
        ));
        assert!(matches!(
            find_roots(Family::Te, 1, 1.0, 1.0, 1.0, 2.0),
            Err(MieError::InvalidIndex(_))
        ));
    }
}
