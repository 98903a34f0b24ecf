//! Off-surface potential evaluation, point-source fields, and far-field
//! patterns for discrete div-conforming surface densities.
//!
//! A density is a coefficient vector over the edge degrees of freedom of a
//! [`DivConformingSpace`]; all evaluators integrate it triangle by triangle
//! with a smooth-kernel Gauss rule, so observation points must stay off the
//! surface (offset-trace and radiation computations, not on-surface traces).

use nalgebra::{Point3, Vector3};
use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;

use crate::kernel::{grad_phi, phi};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{gauss_rule, TriangleRule};
use crate::space::DivConformingSpace;

/// Gauss order used for smooth off-surface integrals.
pub const FIELD_QUAD_ORDER: usize = 6;

fn cvec(v: Vector3<f64>) -> Vector3<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Visits every quadrature point of the density: calls
/// `f(x, w, value, divergence)` with the physical point, physical weight
/// (area-normalized), and the density value/surface divergence there.
fn for_each_sample<F>(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    coeffs: ArrayView1<Complex64>,
    rule: &TriangleRule,
    mut f: F,
) where
    F: FnMut(Point3<f64>, f64, Vector3<Complex64>, Complex64),
{
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let _ = tri;
        let verts = mesh.triangle_vertices(t);
        let area = mesh.areas[t];
        let mut div = Complex64::new(0.0, 0.0);
        for local in 0..3 {
            let dof = space.tri_dofs[t][local];
            div += coeffs[dof.edge] * space.basis_div(mesh, t, local);
        }
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = Point3::from(
                verts[0].coords * bary[0] + verts[1].coords * bary[1] + verts[2].coords * bary[2],
            );
            let mut val = Vector3::zeros();
            for local in 0..3 {
                let dof = space.tri_dofs[t][local];
                val += cvec(space.basis_value(mesh, t, local, &x)) * coeffs[dof.edge];
            }
            f(x, area * w, val, div);
        }
    }
}

/// Vector single-layer potential (∫ Φ_k u ds) at `x` off the surface.
pub fn vector_potential(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    coeffs: ArrayView1<Complex64>,
    k: Complex64,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    let rule = gauss_rule(FIELD_QUAD_ORDER).expect("fixed order");
    let mut out: Vector3<Complex64> = Vector3::zeros();
    for_each_sample(mesh, space, coeffs, &rule, |y, w, val, _| {
        out += val * (phi(k, x, &y) * w);
    });
    out
}

/// Curl of the vector single-layer potential (∫ ∇_xΦ_k × u ds) at `x`.
pub fn curl_potential(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    coeffs: ArrayView1<Complex64>,
    k: Complex64,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    let rule = gauss_rule(FIELD_QUAD_ORDER).expect("fixed order");
    let mut out: Vector3<Complex64> = Vector3::zeros();
    for_each_sample(mesh, space, coeffs, &rule, |y, w, val, _| {
        out += grad_phi(k, x, &y).cross(&val) * Complex64::new(w, 0.0);
    });
    out
}

/// Gradient of the scalar single-layer potential of the surface divergence
/// (∇ ∫ Φ_k div_Γ u ds) at `x`.
pub fn grad_div_potential(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    coeffs: ArrayView1<Complex64>,
    k: Complex64,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    let rule = gauss_rule(FIELD_QUAD_ORDER).expect("fixed order");
    let mut out: Vector3<Complex64> = Vector3::zeros();
    for_each_sample(mesh, space, coeffs, &rule, |y, w, _, div| {
        out += grad_phi(k, x, &y) * (div * w);
    });
    out
}

/// Stratton–Chu field of the tangential-trace pair (m, j):
/// E(x) = curl ∫ Φ m + ∫ Φ j + (1/k²) ∇ ∫ Φ div_Γ j.
pub fn electric_field(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    m: ArrayView1<Complex64>,
    j: ArrayView1<Complex64>,
    k: Complex64,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    curl_potential(mesh, space, m, k, x)
        + vector_potential(mesh, space, j, k, x)
        + grad_div_potential(mesh, space, j, k, x) / (k * k)
}

/// Field of an electric point dipole with moment `p` at `z0`:
/// E = curl curl (p Φ_k(·, z0)).
pub fn dipole_field(
    k: Complex64,
    z0: &Point3<f64>,
    p: &Vector3<f64>,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    let d = x - z0;
    let r = d.norm();
    let rhat = d / r;
    let ph = phi(k, x, z0);
    let pc = cvec(*p);
    let rc = cvec(rhat);
    let transverse = rc.cross(&pc).cross(&rc);
    let radialish = rc * (rc.dot(&pc) * 3.0) - pc;
    transverse * (k * k * ph) + radialish * (ph * (1.0 / (r * r) - Complex64::i() * k / r))
}

/// Curl of the dipole field: curl E = k² ∇Φ_k(·, z0) × p.
pub fn dipole_curl(
    k: Complex64,
    z0: &Point3<f64>,
    p: &Vector3<f64>,
    x: &Point3<f64>,
) -> Vector3<Complex64> {
    grad_phi(k, x, z0).cross(&cvec(*p)) * (k * k)
}

/// Far-field pattern of the Stratton–Chu field of (m, j) in direction `xhat`:
/// the tangential part of ik x̂ × I_m + I_j where I_u = ∫ u e^{−ik x̂·y} ds.
/// The ∇ div term is radial in the far zone and projected out; weighting is
/// uniform (the physical limit 4π|x| e^{−ik|x|} E(x), |x| → ∞).
pub fn far_field(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    m: ArrayView1<Complex64>,
    j: ArrayView1<Complex64>,
    k: Complex64,
    directions: &[Vector3<f64>],
) -> Vec<Vector3<Complex64>> {
    let rule = gauss_rule(FIELD_QUAD_ORDER).expect("fixed order");
    directions
        .iter()
        .map(|xhat| {
            let xc = cvec(*xhat);
            let mut im: Vector3<Complex64> = Vector3::zeros();
            let mut ij: Vector3<Complex64> = Vector3::zeros();
            for_each_sample(mesh, space, m, &rule, |y, w, val, _| {
                im += val * ((-Complex64::i() * k * xhat.dot(&y.coords)).exp() * w);
            });
            for_each_sample(mesh, space, j, &rule, |y, w, val, _| {
                ij += val * ((-Complex64::i() * k * xhat.dot(&y.coords)).exp() * w);
            });
            let inner = xc.cross(&im) * (Complex64::i() * k) + ij;
            xc.cross(&inner).cross(&xc)
        })
        .collect()
}

/// Maximum far-field magnitude over `directions`, normalized by the
/// Euclidean norm of the stacked (m, j) coefficient vector.
pub fn far_field_residual(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    m: ArrayView1<Complex64>,
    j: ArrayView1<Complex64>,
    k: Complex64,
    directions: &[Vector3<f64>],
) -> f64 {
    let norm = m
        .iter()
        .chain(j.iter())
        .map(|v| v.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let patterns = far_field(mesh, space, m, j, k, directions);
    let peak = patterns
        .iter()
        .map(|e| e.norm().into())
        .fold(0.0_f64, f64::max);
    peak / norm
}

/// Fibonacci-spiral unit directions for far-field sampling.
pub fn sphere_directions(count: usize) -> Vec<Vector3<f64>> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let theta = 2.0 * std::f64::consts::PI * i as f64 / golden;
            Vector3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

/// Galerkin right-hand side b_i = ∫ f(x)·φ_i(x) ds for a pointwise field
/// trace `f` (only the tangential part of `f` contributes).
pub fn project_onto_space<F>(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    f: F,
) -> Array1<Complex64>
where
    F: Fn(&Point3<f64>) -> Vector3<Complex64>,
{
    let rule = gauss_rule(FIELD_QUAD_ORDER).expect("fixed order");
    let mut out = Array1::zeros(space.dim);
    for t in 0..mesh.triangles.len() {
        let verts = mesh.triangle_vertices(t);
        let area = mesh.areas[t];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = Point3::from(
                verts[0].coords * bary[0] + verts[1].coords * bary[1] + verts[2].coords * bary[2],
            );
            let fx = f(&x);
            for local in 0..3 {
                let dof = space.tri_dofs[t][local];
                let basis = cvec(space.basis_value(mesh, t, local, &x));
                out[dof.edge] += fx.dot(&basis) * Complex64::new(area * w, 0.0);
            }
        }
    }
    out
}
