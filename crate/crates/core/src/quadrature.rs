//! Numerical integration on triangles and triangle pairs.
//!
//! Regular integrals use a collapsed Gauss-Legendre rule on the reference
//! triangle. Pairs sharing a vertex, an edge, or coinciding are handled with
//! the regularizing Sauter-Schwab substitutions, which turn the weakly
//! singular 4D integrand into a bounded one on [0,1]^4.

use nalgebra::Point3;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("unsupported quadrature order {0} (supported: 1..=10)")]
    UnsupportedOrder(usize),
    #[error("quadrature blow-up: non-finite kernel value at x={x:?}, y={y:?}")]
    BlowUp { x: [f64; 3], y: [f64; 3] },
}

/// Gauss-Legendre nodes/weights on [0, 1].
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on P_n; nodes on [-1, 1] then shifted.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = 0.5 * (1.0 - x); // descending cos order -> ascending node
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule on the reference triangle, stored in barycentric
/// coordinates with weights summing to one (the triangle measure is applied
/// at integration time).
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub order: usize,
    /// Barycentric coordinates (l0, l1, l2) per point.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Collapsed (Duffy) Gauss rule exact for bivariate polynomials of total
/// degree `order`.
pub fn gauss_rule(order: usize) -> Result<TriangleRule, QuadError> {
    if !(1..=10).contains(&order) {
        return Err(QuadError::UnsupportedOrder(order));
    }
    // x = u(1-v), y = uv on {x,y >= 0, x+y <= 1}; Jacobian u raises the
    // u-degree of a degree-d integrand to d+1.
    let nu = (order + 3) / 2;
    let nv = (order + 2) / 2;
    let (un, uw) = gauss_legendre_unit(nu);
    let (vn, vw) = gauss_legendre_unit(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (iu, &u) in un.iter().enumerate() {
        for (iv, &v) in vn.iter().enumerate() {
            let x = u * (1.0 - v);
            let y = u * v;
            points.push([1.0 - x - y, x, y]);
            // 2 * u * du * dv normalizes the weight sum to one.
            weights.push(2.0 * u * uw[iu] * vw[iv]);
        }
    }
    Ok(TriangleRule {
        order,
        points,
        weights,
    })
}

/// Integrates `f(l0, l1, l2)` over the reference triangle (area 1/2).
pub fn integrate_reference<F: Fn(f64, f64, f64) -> f64>(rule: &TriangleRule, f: F) -> f64 {
    0.5 * rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| w * f(p[0], p[1], p[2]))
        .sum::<f64>()
}

/// Adjacency class of a triangle pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCase {
    Identical,
    EdgeAdjacent,
    VertexAdjacent,
    Disjoint,
}

/// Classifies a pair by shared vertex count; triangles from different
/// surfaces never share vertices.
pub fn pair_case(tri_a: &[usize; 3], tri_b: &[usize; 3], same_mesh: bool) -> PairCase {
    if !same_mesh {
        return PairCase::Disjoint;
    }
    let shared = tri_a
        .iter()
        .filter(|v| tri_b.contains(v))
        .count();
    match shared {
        3 => PairCase::Identical,
        2 => PairCase::EdgeAdjacent,
        1 => PairCase::VertexAdjacent,
        _ => PairCase::Disjoint,
    }
}

/// A 4D point of a pair rule: reference coordinates on the test and trial
/// triangles (Sauter-Schwab "lower" parametrization 0 <= x2 <= x1 <= 1) and
/// a weight. Weights sum to 1/4 = (ref area)^2.
#[derive(Debug, Clone, Copy)]
pub struct PairPoint {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub w: f64,
}

/// Tensorized rule for a triangle pair after the regularizing substitution.
#[derive(Debug, Clone)]
pub struct SingularPairRule {
    pub case: PairCase,
    pub order: usize,
    pub points: Vec<PairPoint>,
}

/// Builds the pair rule for a given adjacency case with `order` Gauss points
/// per dimension (adjacent cases) or per triangle direction (disjoint).
pub fn pair_rule(case: PairCase, order: usize) -> SingularPairRule {
    let points = match case {
        PairCase::Identical => identical_points(order),
        PairCase::EdgeAdjacent => edge_adjacent_points(order),
        PairCase::VertexAdjacent => vertex_adjacent_points(order),
        PairCase::Disjoint => disjoint_points(order),
    };
    SingularPairRule {
        case,
        order,
        points,
    }
}

fn tensor4(order: usize) -> Vec<([f64; 4], f64)> {
    let (n, w) = gauss_legendre_unit(order);
    let mut out = Vec::with_capacity(order.pow(4));
    for (i0, &a) in n.iter().enumerate() {
        for (i1, &b) in n.iter().enumerate() {
            for (i2, &c) in n.iter().enumerate() {
                for (i3, &d) in n.iter().enumerate() {
                    out.push(([a, b, c, d], w[i0] * w[i1] * w[i2] * w[i3]));
                }
            }
        }
    }
    out
}

// The three adjacent-case substitutions below follow the standard
// Sauter-Schwab decomposition of the product of two reference triangles
// into relative-coordinate simplices, written over (eta1, eta2, eta3, xi)
// in [0,1]^4.

fn identical_points(order: usize) -> Vec<PairPoint> {
    let mut pts = Vec::with_capacity(6 * order.pow(4));
    for ([e1, e2, e3, xi], gw) in tensor4(order) {
        let w = gw * xi * xi * xi * e1 * e1 * e2;
        let regions = [
            (
                [xi, xi * (1.0 - e1 + e1 * e2)],
                [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)],
            ),
            (
                [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)],
                [xi, xi * (1.0 - e1 + e1 * e2)],
            ),
            (
                [xi, xi * e1 * (1.0 - e2 + e2 * e3)],
                [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
            ),
            (
                [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
                [xi, xi * e1 * (1.0 - e2 + e2 * e3)],
            ),
            (
                [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
                [xi, xi * e1 * (1.0 - e2)],
            ),
            (
                [xi, xi * e1 * (1.0 - e2)],
                [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
            ),
        ];
        for (x, y) in regions {
            pts.push(PairPoint { x, y, w });
        }
    }
    pts
}

fn edge_adjacent_points(order: usize) -> Vec<PairPoint> {
    let mut raw = Vec::with_capacity(5 * order.pow(4));
    for ([e1, e2, e3, xi], gw) in tensor4(order) {
        let base = gw * xi * xi * xi * e1 * e1;
        raw.push(PairPoint {
            x: [xi, xi * e1 * e3],
            y: [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
            w: base,
        });
        let w = base * e2;
        raw.push(PairPoint {
            x: [xi, xi * e1],
            y: [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
            w,
        });
        raw.push(PairPoint {
            x: [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
            y: [xi, xi * e1 * e2 * e3],
            w,
        });
        raw.push(PairPoint {
            x: [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
            y: [xi, xi * e1],
            w,
        });
        raw.push(PairPoint {
            x: [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
            y: [xi, xi * e1 * e2],
            w,
        });
    }
    // Symmetrize so that swapping test and trial roles maps the point set
    // onto itself; Galerkin symmetry then holds to rounding.
    let mut pts = Vec::with_capacity(2 * raw.len());
    for p in raw {
        pts.push(PairPoint {
            x: p.x,
            y: p.y,
            w: 0.5 * p.w,
        });
        pts.push(PairPoint {
            x: p.y,
            y: p.x,
            w: 0.5 * p.w,
        });
    }
    pts
}

fn vertex_adjacent_points(order: usize) -> Vec<PairPoint> {
    let mut pts = Vec::with_capacity(2 * order.pow(4));
    for ([e1, e2, e3, xi], gw) in tensor4(order) {
        let w = gw * xi * xi * xi * e2;
        pts.push(PairPoint {
            x: [xi, xi * e1],
            y: [xi * e2, xi * e2 * e3],
            w,
        });
        pts.push(PairPoint {
            x: [xi * e2, xi * e2 * e3],
            y: [xi, xi * e1],
            w,
        });
    }
    pts
}

fn disjoint_points(order: usize) -> Vec<PairPoint> {
    // Plain tensor product of two collapsed triangle rules, re-expressed in
    // the lower parametrization used by the adjacent cases.
    let rule = gauss_rule(order).expect("orders used internally are supported");
    let mut pts = Vec::with_capacity(rule.points.len().pow(2));
    for (pa, wa) in rule.points.iter().zip(&rule.weights) {
        for (pb, wb) in rule.points.iter().zip(&rule.weights) {
            // barycentric (l0, l1, l2) -> lower coords (x1, x2) = (l1+l2, l2)
            let x = [pa[1] + pa[2], pa[2]];
            let y = [pb[1] + pb[2], pb[2]];
            // each triangle rule has weight sum 1 over measure 1/2
            pts.push(PairPoint {
                x,
                y,
                w: 0.25 * wa * wb,
            });
        }
    }
    pts
}

/// Chart from lower reference coordinates to the physical triangle
/// (v0, v1, v2): x = v0 + x1 (v1 - v0) + x2 (v2 - v1).
#[inline]
pub fn chart(v: &[Point3<f64>; 3], u: &[f64; 2]) -> Point3<f64> {
    Point3::from(v[0].coords + u[0] * (v[1] - v[0]) + u[1] * (v[2] - v[1]))
}

fn tri_area(v: &[Point3<f64>; 3]) -> f64 {
    0.5 * (v[1] - v[0]).cross(&(v[2] - v[0])).norm()
}

/// Double surface integral of `kernel(x, y)` over a triangle pair.
///
/// The caller must pass vertex arrays permuted consistently with the rule's
/// case: shared edge first two vertices (in the same order on both), or the
/// shared vertex first. `kernel` receives physical points.
pub fn integrate_pair<F>(
    kernel: F,
    tri_a: &[Point3<f64>; 3],
    tri_b: &[Point3<f64>; 3],
    rule: &SingularPairRule,
) -> Result<Complex64, QuadError>
where
    F: Fn(&Point3<f64>, &Point3<f64>) -> Complex64,
{
    let jac = 4.0 * tri_area(tri_a) * tri_area(tri_b);
    let mut sum = Complex64::new(0.0, 0.0);
    for p in &rule.points {
        let x = chart(tri_a, &p.x);
        let y = chart(tri_b, &p.y);
        let k = kernel(&x, &y);
        if !k.re.is_finite() || !k.im.is_finite() {
            return Err(QuadError::BlowUp {
                x: [x.x, x.y, x.z],
                y: [y.x, y.y, y.z],
            });
        }
        sum += p.w * k;
    }
    Ok(jac * sum)
}
