//! Eigenvalue location for holomorphic matrix families k ↦ L(k): grid scans
//! of the smallest singular value, Beyn's contour-integral method, the
//! far-field spurious-mode filter, and the imaginary-axis sanity check.
//!
//! All routines take the system as a factory closure so synthetic families
//! and fully assembled boundary-element systems share one code path.

use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::far_field_residual;
use crate::linalg::{
    eigen, full_svd, lu_solve_many, min_singular_vector, sigma_min, LinalgError,
};
use crate::mesh::SurfaceMesh;
use crate::space::DivConformingSpace;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear algebra backend: {0}")]
    Linalg(#[from] LinalgError),
    #[error("system factory failed at k = {k}: {message}")]
    Factory { k: Complex64, message: String },
    #[error("contour touches spectrum (quadrature ill-conditioned after {0} retries)")]
    ContourTouchesSpectrum(usize),
    #[error("rank tolerance ambiguous: no gap >= 10x in contour moment singular values")]
    RankToleranceAmbiguous,
    #[error("contour leaves analyticity domain (crosses the negative real axis)")]
    ContourOutsideDomain,
    #[error("empty kernel vector")]
    EmptyKernel,
    #[error("invalid contour: {0}")]
    InvalidContour(String),
}

/// A located eigenvalue candidate with its verification data.
#[derive(Debug, Clone)]
pub struct EigenCandidate {
    pub k: Complex64,
    pub sigma_min: f64,
    /// Right singular vector of L(k) for the smallest singular value,
    /// interpreted as the stacked density coefficients (m, j).
    pub kernel_vec: Array1<Complex64>,
    /// Max far-field magnitude over sampled directions, normalized by the
    /// kernel-vector norm; None until the filter has run.
    pub farfield_residual: Option<f64>,
    pub accepted: bool,
}

/// Circular contour for Beyn's method.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ContourSpec {
    pub center: Complex64,
    pub radius: f64,
    /// Trapezoid node count on the circle.
    pub nodes: usize,
    /// Probe (random right-hand side) count; must exceed the expected
    /// eigenvalue count by at least 2.
    pub probes: usize,
    /// Relative cutoff separating rank from noise in the moment SVD.
    pub rank_tol: f64,
}

impl ContourSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.radius <= 0.0 {
            return Err(SolverError::InvalidContour("radius must be positive".into()));
        }
        if self.nodes < 16 {
            return Err(SolverError::InvalidContour("need at least 16 nodes".into()));
        }
        if self.probes < 3 {
            return Err(SolverError::InvalidContour("need at least 3 probes".into()));
        }
        // The enclosed disk must avoid the branch cut R_- (0 included).
        if self.center.im.abs() <= self.radius {
            let half = (self.radius * self.radius - self.center.im * self.center.im).sqrt();
            if self.center.re - half <= 0.0 {
                return Err(SolverError::ContourOutsideDomain);
            }
        }
        Ok(())
    }
}

/// One grid sample of a scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanPoint {
    pub k: f64,
    pub sigma_min: f64,
}

/// Result of [`sigma_scan`]: the sampled curve, refined dip locations, and
/// any per-k failures the scan skipped over.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Refined local minima below the dip threshold: (k, sigma_min).
    pub dips: Vec<(f64, f64)>,
    pub median_sigma: f64,
    pub failures: Vec<(f64, String)>,
}

/// Golden-section minimization of a unimodal scalar function on [a, b].
fn golden_min<F: FnMut(f64) -> Option<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<(f64, f64)> {
    let inv = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv * (b - a);
    let mut d = a + inv * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv * (b - a);
            fd = f(d)?;
        }
    }
    Some(if fc < fd { (c, fc) } else { (d, fd) })
}

/// σ_min of the preconditioned system P⁻¹·L(k), the scan's dip indicator.
///
/// The raw σ_min of L(k) is useless as a grid-level indicator: L discretizes
/// a compact-operator family, so its smallest singular values form a tail
/// that shrinks with refinement, and an eigenvalue dip only drops below that
/// tail in a neighborhood far narrower than any affordable grid. With
/// P = L(iκ) — provably invertible on the positive imaginary axis — the
/// family P⁻¹L(k) is a scalar multiple of the identity plus a compact
/// perturbation, so its σ_min has an O(1) background while still vanishing
/// exactly where L(k) is singular; the dips widen to a resolvable scale.
fn preconditioned_sigma(
    p: Option<&Array2<Complex64>>,
    m: &Array2<Complex64>,
) -> Result<f64, String> {
    match p {
        Some(p) => {
            let b = lu_solve_many(p, m).map_err(|e| e.to_string())?;
            sigma_min(&b).map_err(|e| e.to_string())
        }
        None => sigma_min(m).map_err(|e| e.to_string()),
    }
}

/// Refines an eigenvalue dip of L(k) inside [a, b] down to Δk ≤ `tol` by
/// golden-section minimization of the preconditioned indicator
/// σ_min(L(i·mid)⁻¹ L(k)) (see [`preconditioned_sigma`] for why the raw
/// σ_min cannot be searched directly). Returns the refined (k, indicator).
pub fn refine_dip<F, E>(factory: F, a: f64, b: f64, tol: f64) -> Option<(f64, f64)>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E>,
    E: ToString,
{
    let p = factory(Complex64::new(0.0, 0.5 * (a + b))).ok()?;
    refine_dip_with(&factory, Some(&p), a, b, tol)
}

fn refine_dip_with<F, E>(
    factory: F,
    p: Option<&Array2<Complex64>>,
    a: f64,
    b: f64,
    tol: f64,
) -> Option<(f64, f64)>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E>,
    E: ToString,
{
    golden_min(
        |k| {
            let m = factory(Complex64::new(k, 0.0)).ok()?;
            preconditioned_sigma(p, &m).ok()
        },
        a,
        b,
        tol,
    )
}

/// Scans the dip indicator σ_min(P⁻¹L(k)) over a real wavenumber grid, with
/// P = L(iκ_ref) assembled once at κ_ref = (kmin + kmax)/2, and refines every
/// interior local minimum by golden-section search to Δk ≤ 1e−4; a dip is
/// kept when its refined indicator falls below `dip_threshold` × the median
/// of the sampled curve.
///
/// Assembly failures at isolated grid points are recorded and skipped; the
/// scan continues with the remaining samples. If the preconditioner itself
/// cannot be assembled the scan falls back to the raw σ_min of L(k).
pub fn sigma_scan<F, E>(
    factory: F,
    kmin: f64,
    kmax: f64,
    steps: usize,
    dip_threshold: f64,
) -> ScanResult
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E> + Sync,
    E: ToString + Send,
{
    assert!(steps >= 2 && kmax > kmin && kmin > 0.0);
    let grid: Vec<f64> = (0..steps)
        .map(|i| kmin + (kmax - kmin) * i as f64 / (steps - 1) as f64)
        .collect();
    let mut failures: Vec<(f64, String)> = Vec::new();
    let kref = 0.5 * (kmin + kmax);
    let precond = match factory(Complex64::new(0.0, kref)) {
        Ok(p) => Some(p),
        Err(e) => {
            failures.push((kref, format!("preconditioner assembly failed: {}", e.to_string())));
            None
        }
    };
    let p = precond.as_ref();
    let eval = |k: f64| -> Result<f64, String> {
        let m = factory(Complex64::new(k, 0.0)).map_err(|e| e.to_string())?;
        preconditioned_sigma(p, &m)
    };
    let raw: Vec<(f64, Result<f64, String>)> = grid
        .par_iter()
        .map(|&k| (k, eval(k)))
        .collect();

    let mut points = Vec::new();
    for (k, r) in raw {
        match r {
            Ok(s) => points.push(ScanPoint { k, sigma_min: s }),
            Err(e) => failures.push((k, e)),
        }
    }
    let mut sorted: Vec<f64> = points.iter().map(|p| p.sigma_min).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median_sigma = if sorted.is_empty() {
        f64::NAN
    } else {
        sorted[sorted.len() / 2]
    };

    // Every interior local minimum is refined; the depth test against
    // `dip_threshold` is applied to the refined minimum, not the grid sample,
    // because the grid may only catch the shoulders of a genuine dip.
    let mut dips = Vec::new();
    let cutoff = dip_threshold * median_sigma;
    for i in 1..points.len().saturating_sub(1) {
        let here = points[i].sigma_min;
        if !(points[i - 1].sigma_min >= here && points[i + 1].sigma_min >= here) {
            continue;
        }
        let a = points[i - 1].k;
        let b = points[i + 1].k;
        match refine_dip_with(&factory, p, a, b, 1e-4) {
            Some((k, s)) => {
                if s < cutoff {
                    dips.push((k, s));
                }
            }
            None => failures.push((points[i].k, "refinement evaluation failed".into())),
        }
    }
    ScanResult {
        points,
        dips,
        median_sigma,
        failures,
    }
}

/// Builds a candidate record (kernel vector and σ_min) at a fixed k.
pub fn candidate_at<F, E>(factory: F, k: Complex64) -> Result<EigenCandidate, SolverError>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E>,
    E: ToString,
{
    candidate_at_with(factory, None, k)
}

/// Builds a candidate record from the preconditioned system P⁻¹L(k).
///
/// At a refined dip the raw smallest singular vector of L(k) is a tail mode
/// of the underlying compact operator unless k sits inside the (extremely
/// narrow) raw dip, so kernel extraction must use the same preconditioned
/// system the scan minimizes: its near-null right singular vector x satisfies
/// ‖L(k)x‖ ≤ ‖P‖·σ regardless of P, and is the actual eigenfunction.
pub fn candidate_at_with<F, E>(
    factory: F,
    p: Option<&Array2<Complex64>>,
    k: Complex64,
) -> Result<EigenCandidate, SolverError>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E>,
    E: ToString,
{
    let m = factory(k).map_err(|e| SolverError::Factory {
        k,
        message: e.to_string(),
    })?;
    let a = match p {
        Some(p) => lu_solve_many(p, &m)?,
        None => m,
    };
    let (_, s, vh) = full_svd(&a)?;
    let kernel_vec = vh.row(s.len() - 1).mapv(|c| c.conj());
    Ok(EigenCandidate {
        k,
        sigma_min: s[s.len() - 1],
        kernel_vec,
        farfield_residual: None,
        accepted: false,
    })
}

/// Beyn's contour-integral eigenvalue solver for the holomorphic family
/// `factory`, on the circle described by `contour`.
///
/// Two trapezoid moments of L(z)⁻¹V are formed, reduced by a rank-revealing
/// SVD (rank = count of singular values above `rank_tol` × largest, with a
/// mandatory ≥ 10× gap), and the small dense eigenproblem solved. Each
/// eigenvalue inside the circle is verified by σ_min(L(λ)) ≤ `verify_tol`.
/// If the contour quadrature is ill-conditioned the radius is re-randomized
/// by ±2%, at most 3 retries.
pub fn beyn_solve<F, E>(
    factory: F,
    contour: &ContourSpec,
    verify_tol: f64,
) -> Result<Vec<EigenCandidate>, SolverError>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E> + Sync,
    E: ToString + Send,
{
    contour.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_beef);
    let mut radius = contour.radius;
    for attempt in 0..=3 {
        match beyn_once(&factory, contour, radius, verify_tol, &mut rng) {
            Ok(c) => return Ok(c),
            Err(SolverError::ContourTouchesSpectrum(_)) if attempt < 3 => {
                let jitter: f64 = rng.gen_range(-0.02..0.02);
                radius = contour.radius * (1.0 + jitter);
            }
            Err(e) => return Err(e),
        }
    }
    Err(SolverError::ContourTouchesSpectrum(3))
}

fn beyn_once<F, E>(
    factory: &F,
    contour: &ContourSpec,
    radius: f64,
    verify_tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EigenCandidate>, SolverError>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E> + Sync,
    E: ToString + Send,
{
    let n_nodes = contour.nodes;
    let c = contour.center;
    let thetas: Vec<f64> = (0..n_nodes)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n_nodes as f64)
        .collect();

    // Node solves, parallel; reduction in index order below.
    let node_data: Vec<Result<(Complex64, Array2<Complex64>), SolverError>> = thetas
        .par_iter()
        .map(|&theta| {
            let w = Complex64::from_polar(radius, theta);
            let z = c + w;
            let a = factory(z).map_err(|e| SolverError::Factory {
                k: z,
                message: e.to_string(),
            })?;
            Ok((w, a))
        })
        .collect();

    let mut dim = 0;
    let mut nodes = Vec::with_capacity(n_nodes);
    for r in node_data {
        let (w, a) = r?;
        dim = a.nrows();
        nodes.push((w, a));
    }
    let ell = contour.probes.min(dim);
    let mut v = Array2::<Complex64>::zeros((dim, ell));
    for x in v.iter_mut() {
        *x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }

    let mut a0 = Array2::<Complex64>::zeros((dim, ell));
    let mut a1 = Array2::<Complex64>::zeros((dim, ell));
    for (w, a) in &nodes {
        let y = lu_solve_many(a, &v).map_err(|_| SolverError::ContourTouchesSpectrum(0))?;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::ContourTouchesSpectrum(0));
        }
        // dz = i w dθ; the i and 2π of Cauchy's formula cancel against the
        // trapezoid weights, leaving w/N and w²/N.
        let scale0 = *w / n_nodes as f64;
        let scale1 = *w * *w / n_nodes as f64;
        a0.zip_mut_with(&y, |acc, &yv| *acc += scale0 * yv);
        a1.zip_mut_with(&y, |acc, &yv| *acc += scale1 * yv);
    }

    let (u, s, wh) = full_svd(&a0)?;
    let solve_scale = nodes
        .iter()
        .map(|(_, a)| a.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    // No eigenvalue enclosed: both moments vanish to quadrature accuracy.
    let moment_scale = a1.iter().map(|x| x.norm()).sum::<f64>().max(s[0]);
    if moment_scale < 1e-12 * solve_scale.max(1.0) {
        return Ok(Vec::new());
    }
    let rank = s.iter().filter(|&&x| x >= contour.rank_tol * s[0]).count();
    if rank == 0 || rank == s.len() {
        return Err(SolverError::RankToleranceAmbiguous);
    }
    if s[rank - 1] / s[rank] < 10.0 {
        return Err(SolverError::RankToleranceAmbiguous);
    }

    // B = U₀ᴴ A₁ W₀ Σ₀⁻¹; its eigenvalues are the (shifted) eigenvalues.
    let u0 = u.slice(ndarray::s![.., ..rank]).to_owned();
    let w0 = wh.slice(ndarray::s![..rank, ..]).t().mapv(|x| x.conj());
    let mut b = u0.t().mapv(|x| x.conj()).dot(&a1).dot(&w0);
    for (jcol, mut col) in b.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x / s[jcol]);
    }
    let (eigs, _) = eigen(&b)?;

    let mut out = Vec::new();
    for lam in eigs.iter() {
        if lam.norm() > radius * (1.0 + 1e-8) {
            continue;
        }
        let k = c + lam;
        let a = factory(k).map_err(|e| SolverError::Factory {
            k,
            message: e.to_string(),
        })?;
        let sig = sigma_min(&a)?;
        if sig <= verify_tol {
            let kernel_vec = min_singular_vector(&a)?;
            out.push(EigenCandidate {
                k,
                sigma_min: sig,
                kernel_vec,
                farfield_residual: None,
                accepted: false,
            });
        }
    }
    out.sort_by(|a, b| a.k.re.total_cmp(&b.k.re).then(a.k.im.total_cmp(&b.k.im)));
    Ok(out)
}

/// Runs the far-field filter on a candidate: splits the kernel vector into
/// (m, j) halves, computes the normalized far-field residual at wavenumber
/// `k` over `directions`, and accepts iff residual ≤ `threshold` (the caller
/// multiplies the configured relative threshold by the random baseline).
pub fn filter_candidate(
    mut candidate: EigenCandidate,
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    directions: &[Vector3<f64>],
    threshold: f64,
) -> Result<EigenCandidate, SolverError> {
    let dim = candidate.kernel_vec.len();
    if dim == 0 || candidate.kernel_vec.iter().all(|v| v.norm() == 0.0) {
        return Err(SolverError::EmptyKernel);
    }
    let half = dim / 2;
    let m = candidate.kernel_vec.slice(ndarray::s![..half]).to_owned();
    let j = candidate.kernel_vec.slice(ndarray::s![half..]).to_owned();
    let residual = far_field_residual(mesh, space, m.view(), j.view(), candidate.k, directions);
    candidate.farfield_residual = Some(residual);
    candidate.accepted = residual <= threshold;
    Ok(candidate)
}

/// Random-density far-field baseline: mean residual over `samples` random
/// coefficient vectors (fixed seed, deterministic).
pub fn random_farfield_baseline(
    mesh: &SurfaceMesh,
    space: &DivConformingSpace,
    k: Complex64,
    directions: &[Vector3<f64>],
    samples: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0xba5e);
    let mut total = 0.0;
    for _ in 0..samples {
        let m = Array1::from_iter((0..space.dim).map(|_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
        let j = Array1::from_iter((0..space.dim).map(|_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
        total += far_field_residual(mesh, space, m.view(), j.view(), k, directions);
    }
    total / samples as f64
}

/// Report of [`imaginary_axis_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ImaginaryAxisReport {
    /// (κ, σ_min(L(iκ))) per requested κ.
    pub entries: Vec<(f64, f64)>,
    /// κ values whose σ_min fell below the floor.
    pub failing: Vec<f64>,
    pub floor: f64,
    pub passed: bool,
}

/// Evaluates σ_min(L(iκ)) for each κ and checks it stays above `floor`
/// (no transmission eigenvalues on the imaginary axis).
pub fn imaginary_axis_check<F, E>(
    factory: F,
    kappas: &[f64],
    floor: f64,
) -> Result<ImaginaryAxisReport, SolverError>
where
    F: Fn(Complex64) -> Result<Array2<Complex64>, E>,
    E: ToString,
{
    let mut entries = Vec::new();
    let mut failing = Vec::new();
    for &kappa in kappas {
        assert!(kappa > 0.0, "kappas must be positive");
        let k = Complex64::new(0.0, kappa);
        let a = factory(k).map_err(|e| SolverError::Factory {
            k,
            message: e.to_string(),
        })?;
        let s = sigma_min(&a)?;
        entries.push((kappa, s));
        if s < floor {
            failing.push(kappa);
        }
    }
    let passed = failing.is_empty();
    Ok(ImaginaryAxisReport {
        entries,
        failing,
        floor,
        passed,
    })
}

/// Serializable candidate record for JSON output.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct CandidateRecord {
    pub k_re: f64,
    pub k_im: f64,
    pub sigma_min: f64,
    pub farfield_residual: Option<f64>,
    pub accepted: bool,
    /// Kernel coefficients as (re, im) pairs.
    pub kernel_vec: Vec<(f64, f64)>,
}

impl From<&EigenCandidate> for CandidateRecord {
    fn from(c: &EigenCandidate) -> Self {
        CandidateRecord {
            k_re: c.k.re,
            k_im: c.k.im,
            sigma_min: c.sigma_min,
            farfield_residual: c.farfield_residual,
            accepted: c.accepted,
            kernel_vec: c.kernel_vec.iter().map(|v| (v.re, v.im)).collect(),
        }
    }
}

/// CSV lines (with header) for a candidate list.
pub fn candidates_csv(candidates: &[EigenCandidate]) -> String {
    let mut out = String::from("k_re,k_im,sigma_min,residual,accepted\n");
    for c in candidates {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{},{}\n",
            c.k.re,
            c.k.im,
            c.sigma_min,
            c.farfield_residual
                .map(|r| format!("{:.12e}", r))
                .unwrap_or_default(),
            c.accepted
        ));
    }
    out
}

/// Two-column scan curve suitable for external plotting.
pub fn scan_csv(result: &ScanResult) -> String {
    let mut out = String::from("k,sigma_min\n");
    for p in &result.points {
        out.push_str(&format!("{:.12e},{:.12e}\n", p.k, p.sigma_min));
    }
    out
}
