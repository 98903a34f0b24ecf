//! Galerkin assembly of the boundary integral operator blocks and the
//! composite systems built from them.
//!
//! All matrices are dense and complex. Weighted differences of the
//! electric-field operator are re-expressed so that only one singular
//! single-k assembly is needed per (surface, wavenumber); everything else
//! uses the smooth difference kernels or smooth cross-surface kernels.
//!
//! Determinism: the pair loop is parallel over test triangles, but each
//! strip's contributions are accumulated into the global matrix sequentially
//! in ascending (test triangle, trial triangle) order, so results are
//! bit-identical for any worker count.

use crate::kernel::{self, Wavenumbers};
use crate::linalg::{self, LinalgError};
use crate::mesh::{MultiSurfaceScene, SurfaceMesh};
use crate::quadrature::{chart, pair_case, pair_rule, PairCase, QuadError, SingularPairRule};
use crate::space::{DivConformingSpace, LoopStarSplit};
use nalgebra::{Point3, Vector3};
use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("quadrature failure on triangle pair ({test}, {trial}): {source}")]
    Quadrature {
        test: usize,
        trial: usize,
        source: QuadError,
    },
    #[error("auxiliary system L21 is numerically singular (condition estimate {0:.3e})")]
    SingularAuxiliary(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Quadrature orders and the near-pair threshold used throughout assembly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadSettings {
    /// Gauss order per direction for well-separated pairs.
    pub regular_order: usize,
    /// Gauss order per dimension of the regularized 4D rules.
    pub singular_order: usize,
    /// Pairs closer than this multiple of the larger triangle diameter get
    /// the doubled-order regular rule.
    pub near_factor: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            regular_order: 4,
            singular_order: 4,
            near_factor: 0.3,
        }
    }
}

/// Kind tag of an assembled Galerkin block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    S,
    K,
    T,
    SDiff,
    KDiff,
    TWeightedDiff,
}

/// A dense Galerkin block: rows = test DOFs, columns = trial DOFs.
#[derive(Debug, Clone)]
pub struct OperatorBlock {
    pub matrix: Array2<Complex64>,
    pub kind: BlockKind,
    /// Wavenumber(s) the block was assembled at.
    pub k: Complex64,
    pub k_second: Option<Complex64>,
    pub test_surface: usize,
    pub trial_surface: usize,
    pub settings: QuadSettings,
}

/// The three singular single-k Galerkin matrices on one surface, produced by
/// a single sweep over triangle pairs (this is the cacheable unit).
#[derive(Debug, Clone)]
pub struct SingleKOps {
    /// Componentwise vector single layer: (i, j) = <Phi_k phi_j, phi_i>.
    pub svec: Array2<Complex64>,
    /// Divergence single layer: (i, j) = <Phi_k div phi_j, div phi_i>.
    pub sdiv: Array2<Complex64>,
    /// MFIE-type block: (i, j) = int int grad_x Phi_k . (phi_j(y) x phi_i(x)).
    pub kk: Array2<Complex64>,
    pub k: Complex64,
}

/// Smooth difference blocks for a wavenumber pair (k, k1).
#[derive(Debug, Clone)]
pub struct DiffOps {
    /// <(Phi_{k1} - Phi_k) phi_j, phi_i>.
    pub svec_diff: Array2<Complex64>,
    /// <(Phi_{k1} - Phi_k) div phi_j, div phi_i>.
    pub sdiv_diff: Array2<Complex64>,
    /// K_{k1} - K_k Galerkin block (smooth gradient-difference kernel).
    pub k_diff: Array2<Complex64>,
    pub w: Wavenumbers,
}

// ---------------------------------------------------------------------------
// Pair sweep engine
// ---------------------------------------------------------------------------

/// Scalar/vector kernel values shared by all nine DOF pairs at one
/// quadrature point.
trait PointKernel: Sync {
    /// Number of output matrices.
    const NOUT: usize;
    type Data: Copy + Send;
    fn kernel(&self, x: &Point3<f64>, y: &Point3<f64>) -> Self::Data;
    /// Contributions of one (test i, trial j) DOF pair for every output.
    fn combine(
        &self,
        data: &Self::Data,
        fi: &Vector3<f64>,
        fj: &Vector3<f64>,
        di: f64,
        dj: f64,
        out: &mut [Complex64],
    );
}

struct SingleKKernel {
    k: Complex64,
}

impl PointKernel for SingleKKernel {
    const NOUT: usize = 3;
    type Data = (Complex64, Vector3<Complex64>);
    fn kernel(&self, x: &Point3<f64>, y: &Point3<f64>) -> Self::Data {
        (kernel::phi(self.k, x, y), kernel::grad_phi(self.k, x, y))
    }
    fn combine(
        &self,
        (phi, grad): &Self::Data,
        fi: &Vector3<f64>,
        fj: &Vector3<f64>,
        di: f64,
        dj: f64,
        out: &mut [Complex64],
    ) {
        out[0] += phi * fi.dot(fj);
        out[1] += phi * (di * dj);
        let cx = fj.cross(fi);
        out[2] += grad.x * cx.x + grad.y * cx.y + grad.z * cx.z;
    }
}

struct DiffKernel {
    k1: Complex64,
    k: Complex64,
}

impl PointKernel for DiffKernel {
    const NOUT: usize = 3;
    type Data = (Complex64, Vector3<Complex64>);
    fn kernel(&self, x: &Point3<f64>, y: &Point3<f64>) -> Self::Data {
        (
            kernel::phi_diff(self.k1, self.k, x, y),
            kernel::grad_phi_diff(self.k1, self.k, x, y),
        )
    }
    fn combine(
        &self,
        (phi, grad): &Self::Data,
        fi: &Vector3<f64>,
        fj: &Vector3<f64>,
        di: f64,
        dj: f64,
        out: &mut [Complex64],
    ) {
        out[0] += phi * fi.dot(fj);
        out[1] += phi * (di * dj);
        let cx = fj.cross(fi);
        out[2] += grad.x * cx.x + grad.y * cx.y + grad.z * cx.z;
    }
}

/// Apply the vertex permutation required by a pair rule: shared edge first
/// (same direction on both) or shared vertex first. Returns permuted vertex
/// triples; basis evaluation is independent of local vertex order.
fn permuted_vertices(
    mesh_a: &SurfaceMesh,
    ta: usize,
    mesh_b: &SurfaceMesh,
    tb: usize,
    case: PairCase,
) -> ([Point3<f64>; 3], [Point3<f64>; 3]) {
    let ia = mesh_a.triangles[ta];
    let ib = mesh_b.triangles[tb];
    match case {
        PairCase::Identical | PairCase::Disjoint => {
            (mesh_a.triangle_vertices(ta), mesh_b.triangle_vertices(tb))
        }
        PairCase::EdgeAdjacent => {
            let shared: Vec<usize> = ia.iter().copied().filter(|v| ib.contains(v)).collect();
            let rest_a = ia.iter().copied().find(|v| !shared.contains(v)).unwrap();
            let rest_b = ib.iter().copied().find(|v| !shared.contains(v)).unwrap();
            let pa = [shared[0], shared[1], rest_a];
            let pb = [shared[0], shared[1], rest_b];
            (
                pa.map(|v| mesh_a.vertices[v]),
                pb.map(|v| mesh_b.vertices[v]),
            )
        }
        PairCase::VertexAdjacent => {
            let shared = ia.iter().copied().find(|v| ib.contains(v)).unwrap();
            let mut pa = [shared; 3];
            let mut pb = [shared; 3];
            for (slot, v) in pa.iter_mut().skip(1).zip(ia.iter().filter(|&&v| v != shared)) {
                *slot = *v;
            }
            for (slot, v) in pb.iter_mut().skip(1).zip(ib.iter().filter(|&&v| v != shared)) {
                *slot = *v;
            }
            (
                pa.map(|v| mesh_a.vertices[v]),
                pb.map(|v| mesh_b.vertices[v]),
            )
        }
    }
}

/// Rule set prebuilt for one sweep.
struct RuleSet {
    identical: SingularPairRule,
    edge: SingularPairRule,
    vertex: SingularPairRule,
    regular: SingularPairRule,
    near: SingularPairRule,
}

impl RuleSet {
    fn new(settings: &QuadSettings) -> Self {
        Self {
            identical: pair_rule(PairCase::Identical, settings.singular_order),
            edge: pair_rule(PairCase::EdgeAdjacent, settings.singular_order),
            vertex: pair_rule(PairCase::VertexAdjacent, settings.singular_order),
            regular: pair_rule(PairCase::Disjoint, settings.regular_order),
            near: pair_rule(PairCase::Disjoint, (2 * settings.regular_order).min(10)),
        }
    }
}

fn min_vertex_distance(va: &[Point3<f64>; 3], vb: &[Point3<f64>; 3]) -> f64 {
    let mut d = f64::INFINITY;
    for a in va {
        for b in vb {
            d = d.min((a - b).norm());
        }
    }
    d
}

/// Local 3x3 contribution of one triangle pair for each output matrix.
#[allow(clippy::too_many_arguments)]
fn pair_local<K: PointKernel>(
    kernel: &K,
    mesh_a: &SurfaceMesh,
    space_a: &DivConformingSpace,
    ta: usize,
    mesh_b: &SurfaceMesh,
    space_b: &DivConformingSpace,
    tb: usize,
    case: PairCase,
    rule: &SingularPairRule,
) -> Result<Vec<[[Complex64; 3]; 3]>, QuadError> {
    let (va, vb) = permuted_vertices(mesh_a, ta, mesh_b, tb, case);
    let jac = 4.0 * mesh_a.areas[ta] * mesh_b.areas[tb];
    let di: Vec<f64> = (0..3).map(|l| space_a.basis_div(mesh_a, ta, l)).collect();
    let dj: Vec<f64> = (0..3).map(|l| space_b.basis_div(mesh_b, tb, l)).collect();
    let mut acc = vec![[[Complex64::new(0.0, 0.0); 3]; 3]; K::NOUT];
    let mut point_out = vec![Complex64::new(0.0, 0.0); K::NOUT];
    for p in &rule.points {
        let x = chart(&va, &p.x);
        let y = chart(&vb, &p.y);
        let data = kernel.kernel(&x, &y);
        let fi: Vec<Vector3<f64>> = (0..3)
            .map(|l| space_a.basis_value(mesh_a, ta, l, &x))
            .collect();
        let fj: Vec<Vector3<f64>> = (0..3)
            .map(|l| space_b.basis_value(mesh_b, tb, l, &y))
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                point_out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                kernel.combine(&data, &fi[i], &fj[j], di[i], dj[j], &mut point_out);
                for (m, v) in point_out.iter().enumerate() {
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(QuadError::BlowUp {
                            x: [x.x, x.y, x.z],
                            y: [y.x, y.y, y.z],
                        });
                    }
                    acc[m][i][j] += p.w * v;
                }
            }
        }
    }
    for m in acc.iter_mut() {
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= jac;
            }
        }
    }
    Ok(acc)
}

/// Same-surface sweep exploiting the transpose symmetry of all assembled
/// kernels: pairs with trial >= test are integrated once and mirrored.
fn sweep_same_surface<K: PointKernel>(
    kernel: &K,
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    settings: &QuadSettings,
) -> Result<Vec<Array2<Complex64>>, AssemblyError> {
    let rules = RuleSet::new(settings);
    let nt = mesh.triangles.len();
    let diam: Vec<f64> = (0..nt).map(|t| mesh.triangle_diameter(t)).collect();

    type Strip = Vec<(usize, Vec<[[Complex64; 3]; 3]>)>;
    let strips: Vec<Result<Strip, AssemblyError>> = (0..nt)
        .into_par_iter()
        .map(|ta| {
            let va = mesh.triangle_vertices(ta);
            let mut strip: Strip = Vec::with_capacity(nt - ta);
            for tb in ta..nt {
                let case = pair_case(&mesh.triangles[ta], &mesh.triangles[tb], true);
                let rule = match case {
                    PairCase::Identical => &rules.identical,
                    PairCase::EdgeAdjacent => &rules.edge,
                    PairCase::VertexAdjacent => &rules.vertex,
                    PairCase::Disjoint => {
                        let vb = mesh.triangle_vertices(tb);
                        if min_vertex_distance(&va, &vb)
                            < settings.near_factor * diam[ta].max(diam[tb])
                        {
                            &rules.near
                        } else {
                            &rules.regular
                        }
                    }
                };
                let locals = pair_local(kernel, mesh, space, ta, mesh, space, tb, case, rule)
                    .map_err(|source| AssemblyError::Quadrature {
                        test: ta,
                        trial: tb,
                        source,
                    })?;
                strip.push((tb, locals));
            }
            Ok(strip)
        })
        .collect();

    let n = space.dim;
    let mut mats = vec![Array2::<Complex64>::zeros((n, n)); K::NOUT];
    for (ta, strip) in strips.into_iter().enumerate() {
        for (tb, locals) in strip? {
            for (m, local) in locals.iter().enumerate() {
                for i in 0..3 {
                    let gi = space.tri_dofs[ta][i].edge;
                    for j in 0..3 {
                        let gj = space.tri_dofs[tb][j].edge;
                        mats[m][[gi, gj]] += local[i][j];
                        if ta != tb {
                            mats[m][[gj, gi]] += local[i][j];
                        }
                    }
                }
            }
        }
    }
    Ok(mats)
}

/// Cross-surface sweep (always disjoint pairs, smooth kernels).
fn sweep_cross_surface<K: PointKernel>(
    kernel: &K,
    mesh_test: &SurfaceMesh,
    space_test: &DivConformingSpace,
    mesh_trial: &SurfaceMesh,
    space_trial: &DivConformingSpace,
    settings: &QuadSettings,
) -> Result<Vec<Array2<Complex64>>, AssemblyError> {
    let rules = RuleSet::new(settings);
    let nta = mesh_test.triangles.len();
    let ntb = mesh_trial.triangles.len();
    let diam_a: Vec<f64> = (0..nta).map(|t| mesh_test.triangle_diameter(t)).collect();
    let diam_b: Vec<f64> = (0..ntb).map(|t| mesh_trial.triangle_diameter(t)).collect();

    type Strip = Vec<Vec<[[Complex64; 3]; 3]>>;
    let strips: Vec<Result<Strip, AssemblyError>> = (0..nta)
        .into_par_iter()
        .map(|ta| {
            let va = mesh_test.triangle_vertices(ta);
            let mut strip: Strip = Vec::with_capacity(ntb);
            for tb in 0..ntb {
                let vb = mesh_trial.triangle_vertices(tb);
                let rule = if min_vertex_distance(&va, &vb)
                    < settings.near_factor * diam_a[ta].max(diam_b[tb])
                {
                    &rules.near
                } else {
                    &rules.regular
                };
                let locals = pair_local(
                    kernel,
                    mesh_test,
                    space_test,
                    ta,
                    mesh_trial,
                    space_trial,
                    tb,
                    PairCase::Disjoint,
                    rule,
                )
                .map_err(|source| AssemblyError::Quadrature {
                    test: ta,
                    trial: tb,
                    source,
                })?;
                strip.push(locals);
            }
            Ok(strip)
        })
        .collect();

    let mut mats = vec![Array2::<Complex64>::zeros((space_test.dim, space_trial.dim)); K::NOUT];
    for (ta, strip) in strips.into_iter().enumerate() {
        for (tb, locals) in strip?.into_iter().enumerate() {
            for (m, local) in locals.iter().enumerate() {
                for i in 0..3 {
                    let gi = space_test.tri_dofs[ta][i].edge;
                    for j in 0..3 {
                        let gj = space_trial.tri_dofs[tb][j].edge;
                        mats[m][[gi, gj]] += local[i][j];
                    }
                }
            }
        }
    }
    Ok(mats)
}

// ---------------------------------------------------------------------------
// Public assembly operations
// ---------------------------------------------------------------------------

/// Singular single-k sweep: S (vector and divergence variants) and K on one
/// surface. This is the unit that the cache stores.
pub fn assemble_single_k(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<SingleKOps, AssemblyError> {
    let mats = sweep_same_surface(&SingleKKernel { k }, mesh, space, settings)?;
    let mut it = mats.into_iter();
    Ok(SingleKOps {
        svec: it.next().unwrap(),
        sdiv: it.next().unwrap(),
        kk: it.next().unwrap(),
        k,
    })
}

/// Vector single-layer Galerkin block <S_k phi_j, phi_i>.
pub fn assemble_s(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<OperatorBlock, AssemblyError> {
    let ops = assemble_single_k(mesh, space, k, settings)?;
    Ok(OperatorBlock {
        matrix: ops.svec,
        kind: BlockKind::S,
        k,
        k_second: None,
        test_surface: 0,
        trial_surface: 0,
        settings: *settings,
    })
}

/// Electric-field operator block: k <S_k phi_j, phi_i>
/// - (1/k) <S_k div phi_j, div phi_i> (surface gradient moved onto the test
/// function).
pub fn assemble_t(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<OperatorBlock, AssemblyError> {
    let ops = assemble_single_k(mesh, space, k, settings)?;
    Ok(OperatorBlock {
        matrix: t_from_ops(&ops),
        kind: BlockKind::T,
        k,
        k_second: None,
        test_surface: 0,
        trial_surface: 0,
        settings: *settings,
    })
}

/// T_k Galerkin matrix from precomputed single-k sweeps.
pub fn t_from_ops(ops: &SingleKOps) -> Array2<Complex64> {
    let inv_k = Complex64::new(1.0, 0.0) / ops.k;
    &ops.svec * ops.k - &ops.sdiv * inv_k
}

/// Same-surface MFIE-type block (principal-value Galerkin form).
pub fn assemble_k_same(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<OperatorBlock, AssemblyError> {
    let ops = assemble_single_k(mesh, space, k, settings)?;
    Ok(OperatorBlock {
        matrix: ops.kk,
        kind: BlockKind::K,
        k,
        k_second: None,
        test_surface: 0,
        trial_surface: 0,
        settings: *settings,
    })
}

/// Cross-surface blocks: S (vector + divergence) and K with densities on the
/// trial surface, tested on the test surface. Kernels are smooth since the
/// surfaces are disjoint.
pub struct CrossOps {
    pub svec: Array2<Complex64>,
    pub sdiv: Array2<Complex64>,
    pub kk: Array2<Complex64>,
    pub k: Complex64,
}

pub fn assemble_cross(
    mesh_test: &SurfaceMesh,
    space_test: &DivConformingSpace,
    mesh_trial: &SurfaceMesh,
    space_trial: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<CrossOps, AssemblyError> {
    let mats = sweep_cross_surface(
        &SingleKKernel { k },
        mesh_test,
        space_test,
        mesh_trial,
        space_trial,
        settings,
    )?;
    let mut it = mats.into_iter();
    Ok(CrossOps {
        svec: it.next().unwrap(),
        sdiv: it.next().unwrap(),
        kk: it.next().unwrap(),
        k,
    })
}

/// Cross-surface K block alone.
pub fn assemble_k_cross(
    mesh_test: &SurfaceMesh,
    space_test: &DivConformingSpace,
    mesh_trial: &SurfaceMesh,
    space_trial: &DivConformingSpace,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<OperatorBlock, AssemblyError> {
    let ops = assemble_cross(mesh_test, space_test, mesh_trial, space_trial, k, settings)?;
    Ok(OperatorBlock {
        matrix: ops.kk,
        kind: BlockKind::K,
        k,
        k_second: None,
        test_surface: 0,
        trial_surface: 1,
        settings: *settings,
    })
}

/// Smooth difference blocks for the wavenumber pair of `w`.
pub fn assemble_diff_blocks(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    w: Wavenumbers,
    settings: &QuadSettings,
) -> Result<DiffOps, AssemblyError> {
    let mats = sweep_same_surface(&DiffKernel { k1: w.k1, k: w.k }, mesh, space, settings)?;
    let mut it = mats.into_iter();
    Ok(DiffOps {
        svec_diff: it.next().unwrap(),
        sdiv_diff: it.next().unwrap(),
        k_diff: it.next().unwrap(),
        w,
    })
}

/// Weighted difference alpha T_{k1} - beta T_k built from the singular
/// single-k1 sweep plus smooth difference blocks:
/// alpha k1 S_{k1} - beta k S_k = (alpha k1 - beta k) S_{k1}
///                                + beta k (S_{k1} - S_k), and likewise for
/// the divergence part with weights (alpha/k1, beta/k).
pub fn t_weighted_diff(
    single_k1: &SingleKOps,
    diff: &DiffOps,
    alpha: Complex64,
    beta: Complex64,
) -> Array2<Complex64> {
    let k1 = diff.w.k1;
    let k = diff.w.k;
    let cvec = alpha * k1 - beta * k;
    let cvec_diff = beta * k;
    let cdiv = alpha / k1 - beta / k;
    let cdiv_diff = beta / k;
    &single_k1.svec * cvec + &diff.svec_diff * cvec_diff
        - (&single_k1.sdiv * cdiv + &diff.sdiv_diff * cdiv_diff)
}

/// The 2x2 system of Eq-style weighted differences on a single surface. The
/// off-diagonal block is stored once; both positions refer to it.
#[derive(Debug, Clone)]
pub struct TwoByTwo {
    /// k1 T_{k1} - k T_k.
    pub diag1: Array2<Complex64>,
    /// K_{k1} - K_k (used in both off-diagonal positions).
    pub offdiag: Array2<Complex64>,
    /// (1/k1) T_{k1} - (1/k) T_k.
    pub diag2: Array2<Complex64>,
    pub w: Wavenumbers,
}

impl TwoByTwo {
    pub fn dim(&self) -> usize {
        2 * self.diag1.nrows()
    }

    /// Dense 2n x 2n matrix with the shared off-diagonal block in both
    /// positions.
    pub fn full(&self) -> Array2<Complex64> {
        let n = self.diag1.nrows();
        let mut out = Array2::zeros((2 * n, 2 * n));
        out.slice_mut(s![..n, ..n]).assign(&self.diag1);
        out.slice_mut(s![..n, n..]).assign(&self.offdiag);
        out.slice_mut(s![n.., ..n]).assign(&self.offdiag);
        out.slice_mut(s![n.., n..]).assign(&self.diag2);
        out
    }
}

/// Assembles the single-surface system
/// [[k1 T_{k1} - k T_k, K_{k1} - K_k], [K_{k1} - K_k, (1/k1)T_{k1} - (1/k)T_k]].
pub fn assemble_l(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    w: Wavenumbers,
    settings: &QuadSettings,
) -> Result<TwoByTwo, AssemblyError> {
    let single = assemble_single_k(mesh, space, w.k1, settings)?;
    let diff = assemble_diff_blocks(mesh, space, w, settings)?;
    Ok(assemble_l_from_parts(&single, &diff))
}

/// Combines a cached singular sweep at k1 with difference blocks into the
/// 2x2 system.
pub fn assemble_l_from_parts(single_k1: &SingleKOps, diff: &DiffOps) -> TwoByTwo {
    let one = Complex64::new(1.0, 0.0);
    let w = diff.w;
    TwoByTwo {
        diag1: t_weighted_diff(single_k1, diff, w.k1, w.k),
        offdiag: diff.k_diff.clone(),
        diag2: t_weighted_diff(single_k1, diff, one / w.k1, one / w.k),
        w,
    }
}

/// The 3x3 system over (M, Q, P) obtained from the loop-star congruence of
/// the 2x2 system: J = [loops | stars] (Q, P)^T.
#[derive(Debug, Clone)]
pub struct ThreeByThree {
    pub full: Array2<Complex64>,
    /// Column/row extents of the (M, Q, P) groups.
    pub dims: (usize, usize, usize),
    pub w: Wavenumbers,
}

impl ThreeByThree {
    /// The (i, j) block, i/j in {0 = M, 1 = Q, 2 = P}.
    pub fn block(&self, i: usize, j: usize) -> ndarray::ArrayView2<'_, Complex64> {
        let off = [0, self.dims.0, self.dims.0 + self.dims.1, self.dims.0 + self.dims.1 + self.dims.2];
        self.full.slice(s![off[i]..off[i + 1], off[j]..off[j + 1]])
    }
}

/// Congruence transform of the 2x2 system with blockdiag(I, [loops|stars]).
/// The divergence-divergence part of the (2,2) block lands exclusively in
/// the (P, P) position because loops are divergence-free.
pub fn assemble_tilde_l(system: &TwoByTwo, split: &LoopStarSplit) -> ThreeByThree {
    let n = system.diag1.nrows();
    let c = split.combined().mapv(|x| Complex64::new(x, 0.0));
    let nl = split.n_loops();
    let ns = split.n_stars();
    let mut full = Array2::zeros((n + nl + ns, n + nl + ns));
    // (M, M)
    full.slice_mut(s![..n, ..n]).assign(&system.diag1);
    // (M, [Q P]) and its transpose
    let kc = system.offdiag.dot(&c);
    full.slice_mut(s![..n, n..]).assign(&kc);
    full.slice_mut(s![n.., ..n]).assign(&kc.t());
    // ([Q P], [Q P])
    let dcc = c.t().dot(&system.diag2.dot(&c));
    full.slice_mut(s![n.., n..]).assign(&dcc);
    ThreeByThree {
        full,
        dims: (n, nl, ns),
        w: system.w,
    }
}

/// The two-layer Schur system on the outer surface.
#[derive(Debug, Clone)]
pub struct SchurSystem {
    /// L20 - cross * L21^{-1} * cross, dense on the outer-surface DOFs.
    pub matrix: Array2<Complex64>,
    /// Condition estimate of the auxiliary system L21.
    pub l21_condition: f64,
    pub k: Complex64,
    pub n1: f64,
    pub n2: f64,
}

/// Builds the 2x2 sum system L21 on the inner surface from two single-k
/// sweeps: [[k2 T_{k2} + k1 T_{k1}, K_{k2} + K_{k1}], [same, (1/k2)T + (1/k1)T]].
pub fn l21_from_parts(at_k1: &SingleKOps, at_k2: &SingleKOps) -> Array2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let t1 = t_from_ops(at_k1);
    let t2 = t_from_ops(at_k2);
    let n = t1.nrows();
    let mut out = Array2::zeros((2 * n, 2 * n));
    let ksum = &at_k1.kk + &at_k2.kk;
    out.slice_mut(s![..n, ..n]).assign(&(&t2 * at_k2.k + &t1 * at_k1.k));
    out.slice_mut(s![..n, n..]).assign(&ksum);
    out.slice_mut(s![n.., ..n]).assign(&ksum);
    out.slice_mut(s![n.., n..])
        .assign(&(&t2 * (one / at_k2.k) + &t1 * (one / at_k1.k)));
    out
}

/// Builds the 2x2 cross system with the wavenumber of the shell medium:
/// [[k2 T^{x}, K^{x}], [K^{x}, (1/k2) T^{x}]].
pub fn cross_system(ops: &CrossOps) -> Array2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let t = {
        let inv_k = one / ops.k;
        &ops.svec * ops.k - &ops.sdiv * inv_k
    };
    let (r, c) = ops.kk.dim();
    let mut out = Array2::zeros((2 * r, 2 * c));
    out.slice_mut(s![..r, ..c]).assign(&(&t * ops.k));
    out.slice_mut(s![..r, c..]).assign(&ops.kk);
    out.slice_mut(s![r.., ..c]).assign(&ops.kk);
    out.slice_mut(s![r.., c..]).assign(&(&t * (one / ops.k)));
    out
}

/// Assembles the two-layer Schur complement
/// L(k) = L20(k) - L^{Sigma,Gamma}(k) L21(k)^{-1} L^{Gamma,Sigma}(k)
/// for a scene with outer contrast n2 (shell) and inner contrast n1.
pub fn assemble_schur(
    scene: &MultiSurfaceScene,
    k: Complex64,
    n1: f64,
    n2: f64,
    settings: &QuadSettings,
) -> Result<SchurSystem, AssemblyError> {
    let gamma = &scene.outer;
    let sigma = &scene.inner;
    let space_g = DivConformingSpace::new(gamma);
    let space_s = DivConformingSpace::new(sigma);
    let k1 = k * n1.sqrt();
    let k2 = k * n2.sqrt();

    // Outer difference system with the shell wavenumber.
    let w2 = Wavenumbers { k, k1: k2, n: n2 };
    let l20 = assemble_l(gamma, &space_g, w2, settings)?.full();

    // Inner sum system.
    let s_at_k1 = assemble_single_k(sigma, &space_s, k1, settings)?;
    let s_at_k2 = assemble_single_k(sigma, &space_s, k2, settings)?;
    let l21 = l21_from_parts(&s_at_k1, &s_at_k2);
    let cond = linalg::condition_number(&l21)?;
    if cond > 1e12 {
        return Err(AssemblyError::SingularAuxiliary(cond));
    }

    // Cross blocks carry the shell wavenumber only.
    let sg = assemble_cross(gamma, &space_g, sigma, &space_s, k2, settings)?;
    let gs = assemble_cross(sigma, &space_s, gamma, &space_g, k2, settings)?;
    let l_sg = cross_system(&sg); // densities on Sigma, tested on Gamma
    let l_gs = cross_system(&gs); // densities on Gamma, tested on Sigma

    let solved = linalg::lu_solve_many(&l21, &l_gs)?;
    let matrix = l20 - l_sg.dot(&solved);
    Ok(SchurSystem {
        matrix,
        l21_condition: cond,
        k,
        n1,
        n2,
    })
}

/// Piecewise-constant scalar single-layer matrix (triangle basis), used to
/// validate the quadrature pipeline against the classical sphere identities.
pub fn scalar_single_layer(
    mesh: &SurfaceMesh,
    k: Complex64,
    settings: &QuadSettings,
) -> Result<Array2<Complex64>, AssemblyError> {
    struct ScalarKernel {
        k: Complex64,
    }
    impl PointKernel for ScalarKernel {
        const NOUT: usize = 1;
        type Data = Complex64;
        fn kernel(&self, x: &Point3<f64>, y: &Point3<f64>) -> Complex64 {
            kernel::phi(self.k, x, y)
        }
        fn combine(
            &self,
            data: &Complex64,
            _fi: &Vector3<f64>,
            _fj: &Vector3<f64>,
            _di: f64,
            _dj: f64,
            out: &mut [Complex64],
        ) {
            out[0] += *data;
        }
    }

    // Reuse the pair machinery with constant densities: each pair produces
    // nine identical samples; divide by nine and scatter per triangle.
    let rules = RuleSet::new(settings);
    let nt = mesh.triangles.len();
    let diam: Vec<f64> = (0..nt).map(|t| mesh.triangle_diameter(t)).collect();
    let kernel = ScalarKernel { k };

    let strips: Vec<Result<Vec<(usize, Complex64)>, AssemblyError>> = (0..nt)
        .into_par_iter()
        .map(|ta| {
            let va = mesh.triangle_vertices(ta);
            let mut strip = Vec::with_capacity(nt - ta);
            for tb in ta..nt {
                let case = pair_case(&mesh.triangles[ta], &mesh.triangles[tb], true);
                let rule = match case {
                    PairCase::Identical => &rules.identical,
                    PairCase::EdgeAdjacent => &rules.edge,
                    PairCase::VertexAdjacent => &rules.vertex,
                    PairCase::Disjoint => {
                        let vb = mesh.triangle_vertices(tb);
                        if min_vertex_distance(&va, &vb)
                            < settings.near_factor * diam[ta].max(diam[tb])
                        {
                            &rules.near
                        } else {
                            &rules.regular
                        }
                    }
                };
                let (pa, pb) = permuted_vertices(mesh, ta, mesh, tb, case);
                let jac = 4.0 * mesh.areas[ta] * mesh.areas[tb];
                let mut sum = Complex64::new(0.0, 0.0);
                for p in &rule.points {
                    let x = chart(&pa, &p.x);
                    let y = chart(&pb, &p.y);
                    let v = kernel.kernel(&x, &y);
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(AssemblyError::Quadrature {
                            test: ta,
                            trial: tb,
                            source: QuadError::BlowUp {
                                x: [x.x, x.y, x.z],
                                y: [y.x, y.y, y.z],
                            },
                        });
                    }
                    sum += p.w * v;
                }
                strip.push((tb, jac * sum));
            }
            Ok(strip)
        })
        .collect();

    let mut out = Array2::zeros((nt, nt));
    for (ta, strip) in strips.into_iter().enumerate() {
        for (tb, v) in strip? {
            out[[ta, tb]] += v;
            if ta != tb {
                out[[tb, ta]] += v;
            }
        }
    }
    Ok(out)
}
