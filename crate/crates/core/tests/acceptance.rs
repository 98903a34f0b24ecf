//! Full-system acceptance suite.
//!
//! Runs ten end-to-end checks against the independent sphere oracle and the
//! solver's own invariants: oracle agreement for two contrasts, refinement
//! convergence, jump relations, operator structure, imaginary-axis
//! triviality, smoothing/compactness tails, two-layer consistency, far-field
//! filtering, contour/scan cross-validation, and bitwise determinism.
//!
//! Each criterion prints one PASS/FAIL line; the process exits nonzero if
//! any criterion fails. The full run performs two 200-point scans of the
//! level-2 sphere plus a level-3 refinement and takes a few hours on one
//! core; singular single-wavenumber sweeps are cached on disk under the
//! workspace target directory so reruns are cheaper.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tebem::assembly::{
    assemble_diff_blocks, assemble_l_from_parts, assemble_schur, assemble_single_k,
    t_weighted_diff, QuadSettings, TwoByTwo,
};
use tebem::cache::assemble_single_k_cached;
use tebem::config::RunConfig;
use tebem::fields::{curl_potential, far_field_residual, project_onto_space, sphere_directions};
use tebem::kernel::Wavenumbers;
use tebem::linalg::{lu_solve_many, sigma_min, singular_values};
use tebem::mesh::{make_icosphere, make_scene, SurfaceMesh};
use tebem::mie::{find_roots, Family};
use tebem::runner::cmd_scan;
use tebem::solver::{
    beyn_solve, candidate_at, candidate_at_with, filter_candidate, random_farfield_baseline,
    refine_dip, sigma_scan, ContourSpec, EigenCandidate,
};
use tebem::space::DivConformingSpace;

const WINDOW: (f64, f64) = (0.5, 5.0);
const SCAN_STEPS: usize = 200;
const MATCH_TOL: f64 = 0.02;
const FARFIELD_REL: f64 = 0.01;
const DIP_REL: f64 = 0.3;
const DIRECTIONS: usize = 26;

/// Frozen calibration values (level-2 unit sphere, default quadrature).
/// Imaginary-axis floors sit at roughly half the measured values
/// 3.25e-5 (kappa=2), 1.07e-4 (kappa=4), 2.43e-4 (kappa=8).
const AXIS_FLOORS: [(f64, f64); 3] = [(2.0, 1.6e-5), (4.0, 5.0e-5), (8.0, 1.2e-4)];
/// Measured 2.84e-2 at k=1 and 7.9e-4 at k=1.5; the regression bounds leave
/// ~40% headroom.
const KDIFF_TAIL_FROZEN: f64 = 0.04;
const COMPACT_TAIL_FROZEN: f64 = 2.0e-3;

fn cache_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache");
    std::fs::create_dir_all(&dir).expect("cache dir");
    dir
}

struct Level {
    mesh: SurfaceMesh,
    space: DivConformingSpace,
}

impl Level {
    fn unit_sphere(level: u32) -> Self {
        let mesh = make_icosphere(1.0, level);
        let space = DivConformingSpace::new(&mesh);
        Level { mesh, space }
    }

    /// L(k) with the singular single-wavenumber sweep cached on disk.
    fn assemble(&self, k: Complex64, n: f64, quad: &QuadSettings) -> Result<TwoByTwo, String> {
        let w = Wavenumbers::new(k, n).map_err(|e| e.to_string())?;
        let single = assemble_single_k_cached(&cache_dir(), &self.mesh, &self.space, w.k1, quad)
            .map_err(|e| e.to_string())?;
        let diff =
            assemble_diff_blocks(&self.mesh, &self.space, w, quad).map_err(|e| e.to_string())?;
        Ok(assemble_l_from_parts(&single, &diff))
    }

    fn factory<'a>(
        &'a self,
        n: f64,
        quad: &'a QuadSettings,
    ) -> impl Fn(Complex64) -> Result<Array2<Complex64>, String> + Sync + 'a {
        move |k| self.assemble(k, n, quad).map(|two| two.full())
    }
}

fn oracle_roots(n: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    for family in [Family::Te, Family::Tm] {
        for l in 1..=15 {
            let table = find_roots(family, l, n, 1.0, WINDOW.0, WINDOW.1).expect("oracle");
            roots.extend(table.roots.iter().map(|r| r.k));
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots
}

/// Scan + far-field filtering of the refined dips, mirroring the batch
/// pipeline but on a caller-supplied factory.
fn scan_and_filter(
    lvl: &Level,
    n: f64,
    quad: &QuadSettings,
    kmin: f64,
    kmax: f64,
    steps: usize,
) -> (Vec<(f64, f64)>, Vec<EigenCandidate>) {
    let factory = lvl.factory(n, quad);
    let result = sigma_scan(&factory, kmin, kmax, steps, DIP_REL);
    assert!(
        result.failures.is_empty(),
        "scan failures: {:?}",
        result.failures
    );
    let directions = sphere_directions(DIRECTIONS);
    let mut candidates = Vec::new();
    for &(k, _) in &result.dips {
        let kc = Complex64::new(k, 0.0);
        let p = factory(Complex64::new(0.0, k)).expect("preconditioner");
        let cand = candidate_at_with(&factory, Some(&p), kc).expect("candidate");
        let baseline = random_farfield_baseline(&lvl.mesh, &lvl.space, kc, &directions, 3);
        let cand = filter_candidate(
            cand,
            &lvl.mesh,
            &lvl.space,
            &directions,
            FARFIELD_REL * baseline,
        )
        .expect("filter");
        candidates.push(cand);
    }
    (result.dips, candidates)
}

fn report(num: usize, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {num:2} {name:<28} {}  {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    std::io::stdout().flush().ok();
    pass
}

struct ScanOutcome {
    roots: Vec<f64>,
    accepted: Vec<f64>,
    unmatched_roots: Vec<f64>,
    stray_candidates: Vec<f64>,
}

fn oracle_agreement(lvl: &Level, n: f64, quad: &QuadSettings) -> ScanOutcome {
    let roots = oracle_roots(n);
    let (_dips, candidates) = scan_and_filter(lvl, n, quad, WINDOW.0, WINDOW.1, SCAN_STEPS);
    let accepted: Vec<f64> = candidates
        .iter()
        .filter(|c| c.accepted)
        .map(|c| c.k.re)
        .collect();
    let unmatched_roots: Vec<f64> = roots
        .iter()
        .copied()
        .filter(|r| !accepted.iter().any(|c| (c - r).abs() <= MATCH_TOL * r))
        .collect();
    let stray_candidates: Vec<f64> = accepted
        .iter()
        .copied()
        .filter(|c| !roots.iter().any(|r| (c - r).abs() <= MATCH_TOL * r))
        .collect();
    ScanOutcome {
        roots,
        accepted,
        unmatched_roots,
        stray_candidates,
    }
}

fn main() {
    let t0 = Instant::now();
    let quad = QuadSettings::default();
    let mut all_pass = true;
    let lvl2 = Level::unit_sphere(2);

    // ----- criterion 1: oracle agreement for n = 4 and n = 0.25 -----------
    let out4 = oracle_agreement(&lvl2, 4.0, &quad);
    let out025 = oracle_agreement(&lvl2, 0.25, &quad);
    let c1 = out4.unmatched_roots.is_empty()
        && out4.stray_candidates.is_empty()
        && out025.unmatched_roots.is_empty()
        && out025.stray_candidates.is_empty()
        && !out4.roots.is_empty();
    all_pass &= report(
        1,
        "oracle agreement",
        c1,
        &format!(
            "n=4: {}/{} roots matched, {} accepted, stray {:?} unmatched {:?}; n=0.25: {}/{} matched, {} accepted, stray {:?} unmatched {:?}",
            out4.roots.len() - out4.unmatched_roots.len(),
            out4.roots.len(),
            out4.accepted.len(),
            out4.stray_candidates,
            out4.unmatched_roots,
            out025.roots.len() - out025.unmatched_roots.len(),
            out025.roots.len(),
            out025.accepted.len(),
            out025.stray_candidates,
            out025.unmatched_roots,
        ),
    );

    // ----- criterion 2: refinement convergence at the first eigenvalue ----
    let c2 = {
        let r0 = out4.roots[0];
        let gap = out4
            .roots
            .iter()
            .copied()
            .filter(|r| (r - r0).abs() > 1e-6)
            .map(|r| (r - r0).abs())
            .fold(f64::INFINITY, f64::min);
        let dip2 = out4
            .accepted
            .iter()
            .copied()
            .min_by(|a, b| (a - r0).abs().total_cmp(&(b - r0).abs()))
            .expect("matched candidate");
        let lvl1 = Level::unit_sphere(1);
        let half1 = (0.08 * r0).min(0.45 * gap);
        // The coarse mesh can shift the dip by several percent, so locate it
        // with a scan instead of assuming unimodality around the oracle root.
        let scan1 = sigma_scan(
            &lvl1.factory(4.0, &quad),
            r0 - half1,
            r0 + half1,
            50,
            DIP_REL,
        );
        let dip1 = scan1
            .dips
            .iter()
            .map(|&(k, _)| k)
            .min_by(|a, b| (a - r0).abs().total_cmp(&(b - r0).abs()))
            .unwrap_or_else(|| {
                refine_dip(&lvl1.factory(4.0, &quad), r0 - half1, r0 + half1, 1e-4)
                    .expect("level-1 refinement")
                    .0
            });
        drop(lvl1);
        let lvl3 = Level::unit_sphere(3);
        let center = 0.5 * (r0 + dip2);
        let half3 = (2.0 * (dip2 - r0).abs()).max(0.01).min(0.45 * gap);
        let dip3 = refine_dip(&lvl3.factory(4.0, &quad), center - half3, center + half3, 1e-4)
            .expect("level-3 refinement")
            .0;
        drop(lvl3);
        let (e1, e2, e3) = ((dip1 - r0).abs(), (dip2 - r0).abs(), (dip3 - r0).abs());
        all_pass &= report(
            2,
            "refinement convergence",
            e3 < e2 && e2 < e1,
            &format!("oracle {r0:.6}: |err| level1 {e1:.2e} > level2 {e2:.2e} > level3 {e3:.2e}"),
        );
        e3 < e2 && e2 < e1
    };
    let _ = c2;

    // ----- criterion 3: jump relations at offset points --------------------
    {
        let k = Complex64::new(1.5, 0.0);
        let err_at = |level: u32| -> f64 {
            let lvl = Level::unit_sphere(level);
            let (mesh, space) = (&lvl.mesh, &lvl.space);
            let delta = 2.0 * mesh.max_edge_length();
            let gram = rwg_gram(mesh, space);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let (mut num_p, mut num_m, mut den) = (0.0f64, 0.0f64, 0.0f64);
            for _ in 0..5 {
                let a = rand_vec3(&mut rng);
                let b = rand_vec3(&mut rng);
                let field = move |x: &Point3<f64>| -> Vector3<Complex64> {
                    (a + b.cross(&x.coords)).map(|v| Complex64::new(v, 0.0))
                };
                let rhs = project_onto_space(mesh, space, field);
                let coeffs = solve_vec(&gram, &rhs);
                let stride = (mesh.num_triangles() / 20).max(1);
                for t in (0..mesh.num_triangles()).step_by(stride) {
                    let x = mesh.centroid(t);
                    let nu = mesh.normals[t];
                    let xin = Point3::from(x.coords - nu * delta);
                    let xout = Point3::from(x.coords + nu * delta);
                    let jump_raw = curl_potential(mesh, space, coeffs.view(), k, &xin)
                        - curl_potential(mesh, space, coeffs.view(), k, &xout);
                    let nc = nu.map(|v| Complex64::new(v, 0.0));
                    let jump = jump_raw - nc * nc.dot(&jump_raw);
                    let mut val: Vector3<Complex64> = Vector3::zeros();
                    for local in 0..3 {
                        let dof = space.tri_dofs[t][local];
                        let bv = space.basis_value(mesh, t, local, &x);
                        val += bv.map(|c| Complex64::new(c, 0.0)) * coeffs[dof.edge];
                    }
                    let rot = nc.cross(&val);
                    num_p += (jump - rot).norm_squared();
                    num_m += (jump + rot).norm_squared();
                    den += rot.norm_squared();
                }
            }
            (num_p.min(num_m) / den).sqrt()
        };
        let (e1, e2) = (err_at(1), err_at(2));
        let ratio = e2 / e1;
        all_pass &= report(
            3,
            "jump relations",
            ratio < 0.7,
            &format!("offset-jump error level1 {e1:.3e} -> level2 {e2:.3e}, ratio {ratio:.3} < 0.7"),
        );
    }

    // ----- criterion 4: structure of L(k) ----------------------------------
    {
        let lvl1 = Level::unit_sphere(1);
        let two = lvl1
            .assemble(Complex64::new(1.3, 0.2), 4.0, &quad)
            .expect("assemble");
        let full = two.full();
        let nb = two.diag1.nrows();
        let off_equal = (0..nb).all(|i| {
            (0..nb).all(|j| {
                let a = full[[i, nb + j]];
                let b = full[[nb + i, j]];
                a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
            })
        });
        let sym = {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..full.nrows() {
                for j in 0..full.ncols() {
                    num += (full[[i, j]] - full[[j, i]]).norm_sqr();
                    den += full[[i, j]].norm_sqr();
                }
            }
            (num / den).sqrt()
        };
        // Unit contrast: every difference kernel vanishes identically.
        let w1 = Wavenumbers {
            k: Complex64::new(1.3, 0.0),
            k1: Complex64::new(1.3, 0.0),
            n: 1.0,
        };
        let single =
            assemble_single_k(&lvl1.mesh, &lvl1.space, w1.k1, &quad).expect("single");
        let diff = assemble_diff_blocks(&lvl1.mesh, &lvl1.space, w1, &quad).expect("diff");
        let zero1 = t_weighted_diff(&single, &diff, w1.k1, w1.k);
        let zero2 = diff.k_diff.clone();
        let max_zero = zero1
            .iter()
            .chain(zero2.iter())
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        // Cauchy-Riemann residual of the k -> L(k) map at three complex k.
        let e = 1e-4;
        let cr_worst = [
            Complex64::new(1.2, 0.3),
            Complex64::new(2.0, -0.4),
            Complex64::new(0.8, 0.1),
        ]
        .iter()
        .map(|&k| {
            let l = |k: Complex64| lvl1.factory(4.0, &quad)(k).expect("assemble");
            let d_re = (&l(k + Complex64::new(e, 0.0)) - &l(k - Complex64::new(e, 0.0)))
                .mapv(|v| v / (2.0 * e));
            let d_im = (&l(k + Complex64::new(0.0, e)) - &l(k - Complex64::new(0.0, e)))
                .mapv(|v| v / Complex64::new(0.0, 2.0 * e));
            let num: f64 = (&d_re - &d_im).iter().map(|v| v.norm_sqr()).sum();
            let den: f64 = d_re.iter().map(|v| v.norm_sqr()).sum();
            (num / den).sqrt()
        })
        .fold(0.0f64, f64::max);
        let pass = off_equal && sym <= 1e-10 && max_zero == 0.0 && cr_worst <= 1e-6;
        all_pass &= report(
            4,
            "operator structure",
            pass,
            &format!(
                "off-diagonal bitwise equal: {off_equal}; symmetry {sym:.2e} <= 1e-10; \
                 unit-contrast max |entry| {max_zero:.1e}; CR residual {cr_worst:.2e} <= 1e-6"
            ),
        );
    }

    // ----- criterion 5: imaginary-axis triviality ---------------------------
    {
        let factory = lvl2.factory(4.0, &quad);
        let directions = sphere_directions(DIRECTIONS);
        let mut detail = String::new();
        let mut pass = true;
        for (kappa, floor) in AXIS_FLOORS {
            let kc = Complex64::new(0.0, kappa);
            let a = factory(kc).expect("assemble");
            let s = sigma_min(&a).expect("svd");
            let cand = candidate_at(&factory, kc).expect("candidate");
            let baseline =
                random_farfield_baseline(&lvl2.mesh, &lvl2.space, kc, &directions, 3);
            let cand = filter_candidate(
                cand,
                &lvl2.mesh,
                &lvl2.space,
                &directions,
                FARFIELD_REL * baseline,
            )
            .expect("filter");
            pass &= s >= floor && !cand.accepted;
            detail.push_str(&format!(
                "kappa={kappa}: sigma={s:.2e}>={floor:.1e} rejected={}; ",
                !cand.accepted
            ));
        }
        all_pass &= report(5, "imaginary-axis triviality", pass, detail.trim_end());
    }

    // ----- criterion 6: smoothing/compactness tails -------------------------
    {
        let tail20 = |a: &Array2<Complex64>| {
            let s = singular_values(a).expect("svd");
            s[s.len() - 20]
        };
        // K-difference tail at k = 1 (calibration point of the 0.1 bound).
        let w = Wavenumbers::new(Complex64::new(1.0, 0.0), 4.0).expect("w");
        let single = assemble_single_k_cached(&cache_dir(), &lvl2.mesh, &lvl2.space, w.k1, &quad)
            .expect("single");
        let diff = assemble_diff_blocks(&lvl2.mesh, &lvl2.space, w, &quad).expect("diff");
        let kratio = tail20(&diff.k_diff) / tail20(&single.kk);
        // Compact combination L(k) + gamma L(i|k|) at k = 1.5.
        let k = Complex64::new(1.5, 0.0);
        let wc = Wavenumbers::new(k, 4.0).expect("w");
        let gamma = (wc.k1 * wc.k1 - wc.k * wc.k) / (wc.k1.norm_sqr() - wc.k.norm_sqr());
        let factory = lvl2.factory(4.0, &quad);
        let l_k = factory(k).expect("assemble");
        let l_i = factory(Complex64::new(0.0, k.norm())).expect("assemble");
        let comb = &l_k + &l_i.mapv(|v| gamma * v);
        let cratio = tail20(&comb) / tail20(&l_k);
        let pass = kratio < 0.1
            && kratio <= KDIFF_TAIL_FROZEN
            && cratio < 0.5
            && cratio <= COMPACT_TAIL_FROZEN;
        all_pass &= report(
            6,
            "smoothing/compactness tails",
            pass,
            &format!(
                "K-diff tail ratio {kratio:.3e} < 0.1 (frozen {KDIFF_TAIL_FROZEN}); \
                 compact-combination tail ratio {cratio:.3e} < 0.5 (frozen {COMPACT_TAIL_FROZEN})"
            ),
        );
    }

    // ----- criterion 7: two-layer consistency -------------------------------
    {
        let n = 4.0;
        let conditions = Mutex::new(Vec::<f64>::new());
        let scene = make_scene(make_icosphere(1.0, 2), make_icosphere(0.5, 2)).expect("scene");
        let schur_factory = |k: Complex64| -> Result<Array2<Complex64>, String> {
            let sys = assemble_schur(&scene, k, n, n, &quad).map_err(|e| e.to_string())?;
            conditions.lock().unwrap().push(sys.l21_condition);
            Ok(sys.matrix)
        };
        // Window around the first two accepted single-surface dips.
        let mut singles = out4.accepted.clone();
        singles.sort_by(|a, b| a.total_cmp(b));
        let (d1, d2) = (singles[0], singles[1]);
        let result = sigma_scan(&schur_factory, d1 - 0.05, d2 + 0.05, 40, DIP_REL);
        let scan_ok = result.failures.is_empty();
        let mut dip_detail = String::new();
        let mut dips_ok = true;
        for target in [d1, d2] {
            let best = result
                .dips
                .iter()
                .map(|&(k, _)| k)
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
            match best {
                Some(k) if (k - target).abs() <= 0.01 * target => {
                    dip_detail.push_str(&format!("{target:.4}->{k:.4} ok; "));
                }
                other => {
                    dips_ok = false;
                    dip_detail.push_str(&format!("{target:.4}->{other:?} MISS; "));
                }
            }
        }
        let max_cond = conditions
            .lock()
            .unwrap()
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
        let mms = manufactured_transmission_error(&quad);
        let pass = scan_ok && dips_ok && max_cond < 1e12 && mms <= 0.01;
        all_pass &= report(
            7,
            "two-layer consistency",
            pass,
            &format!(
                "{dip_detail}max L21 condition {max_cond:.2e} < 1e12; \
                 manufactured point-source error {mms:.2e} <= 1e-2"
            ),
        );
    }

    // ----- criterion 8: far-field filter discrimination ---------------------
    {
        let best = out4
            .accepted
            .iter()
            .copied()
            .min_by(|a, b| a.total_cmp(b))
            .expect("accepted candidate");
        let kc = Complex64::new(best, 0.0);
        let directions = sphere_directions(DIRECTIONS);
        let factory = lvl2.factory(4.0, &quad);
        let p = factory(Complex64::new(0.0, best)).expect("preconditioner");
        let cand = candidate_at_with(&factory, Some(&p), kc).expect("candidate");
        let baseline = random_farfield_baseline(&lvl2.mesh, &lvl2.space, kc, &directions, 3);
        let cand = filter_candidate(
            cand,
            &lvl2.mesh,
            &lvl2.space,
            &directions,
            FARFIELD_REL * baseline,
        )
        .expect("filter");
        let eig_resid = cand.farfield_residual.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xacc3);
        let dim = lvl2.space.dim;
        let rejected = (0..50)
            .filter(|_| {
                let m = Array1::from_iter(
                    (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
                );
                let j = Array1::from_iter(
                    (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
                );
                let r = far_field_residual(&lvl2.mesh, &lvl2.space, m.view(), j.view(), kc, &directions);
                r > FARFIELD_REL * baseline
            })
            .count();
        let pass = cand.accepted && eig_resid <= FARFIELD_REL * baseline && rejected == 50;
        all_pass &= report(
            8,
            "far-field discrimination",
            pass,
            &format!(
                "eigenpair residual {eig_resid:.2e} <= {:.2e} (1% of baseline {baseline:.2e}); \
                 random injections rejected {rejected}/50",
                FARFIELD_REL * baseline
            ),
        );
    }

    // ----- criterion 9: contour/scan cross-validation ------------------------
    {
        let r0 = out4.roots[0];
        let dip2 = out4
            .accepted
            .iter()
            .copied()
            .min_by(|a, b| (a - r0).abs().total_cmp(&(b - r0).abs()))
            .expect("matched candidate");
        let gap = out4
            .roots
            .iter()
            .copied()
            .filter(|r| (r - r0).abs() > 1e-6)
            .map(|r| (r - r0).abs())
            .fold(f64::INFINITY, f64::min);
        let radius = (4.0 * (dip2 - r0).abs())
            .max(0.02 * r0)
            .min(0.35 * gap);
        let contour = ContourSpec {
            center: Complex64::new(dip2, 0.0),
            radius,
            nodes: 24,
            probes: 8,
            rank_tol: 1e-6,
        };
        let factory = lvl2.factory(4.0, &quad);
        let found = beyn_solve(&factory, &contour, 1e-3);
        let (pass, detail) = match found {
            Ok(cands) => {
                let accepted: Vec<Complex64> =
                    cands.iter().filter(|c| c.accepted).map(|c| c.k).collect();
                // A sphere eigenvalue of multipole order l has multiplicity
                // 2l+1; the contour solver reports the full cluster. Distinct
                // locations are merged within 0.2% before counting.
                let mut distinct: Vec<Complex64> = Vec::new();
                for &k in &accepted {
                    if !distinct.iter().any(|d| (d - k).norm() <= 2e-3 * k.norm()) {
                        distinct.push(k);
                    }
                }
                let within = accepted
                    .iter()
                    .all(|k| (k - Complex64::new(dip2, 0.0)).norm() <= 0.005 * dip2);
                (
                    distinct.len() == 1 && !accepted.is_empty() && within,
                    format!(
                        "contour r={radius:.3} at {dip2:.5}: {} accepted in cluster(s) {:?}, all within 0.5% of dip: {within}",
                        accepted.len(),
                        distinct
                    ),
                )
            }
            Err(e) => (false, format!("solver error: {e}")),
        };
        all_pass &= report(9, "contour/scan cross-check", pass, &detail);
    }

    // ----- criterion 10: determinism across worker counts --------------------
    {
        let lvl1 = Level::unit_sphere(1);
        let k = Complex64::new(1.37, 0.0);
        let w = Wavenumbers::new(k, 4.0).expect("w");
        let assemble_bits = |workers: usize| -> Vec<u64> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("pool");
            pool.install(|| {
                let single =
                    assemble_single_k(&lvl1.mesh, &lvl1.space, w.k1, &quad).expect("single");
                let diff =
                    assemble_diff_blocks(&lvl1.mesh, &lvl1.space, w, &quad).expect("diff");
                let full = assemble_l_from_parts(&single, &diff).full();
                full.iter()
                    .flat_map(|v| [v.re.to_bits(), v.im.to_bits()])
                    .collect()
            })
        };
        let m1 = assemble_bits(1);
        let matrices_ok = assemble_bits(4) == m1 && assemble_bits(8) == m1;

        // Batch artifacts: identical bytes for 1/4/8-worker runs of one config.
        let root = tempfile::tempdir().expect("tempdir");
        let out_dir = root.path().join("out");
        let cache = root.path().join("cache");
        let config_path = root.path().join("run.toml");
        let r0 = out4.roots[0];
        std::fs::write(
            &config_path,
            format!(
                "n = 4.0\noutput_dir = {out:?}\ncache_dir = {cache:?}\n\n[geometry]\nradius = 1.0\nlevel = 1\n\n[scan]\nk_min = {0}\nk_max = {1}\nsteps = 12\n",
                r0 - 0.25,
                r0 + 0.25,
                out = out_dir,
                cache = cache
            ),
        )
        .expect("config");
        let config = RunConfig::from_path(&config_path).expect("config parse");
        let run_bytes = |workers: usize| -> Vec<Vec<u8>> {
            let _ = std::fs::remove_dir_all(&out_dir);
            let _ = std::fs::remove_dir_all(&cache);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("pool");
            let artifacts = pool.install(|| cmd_scan(&config).expect("scan"));
            [
                artifacts.scan_csv,
                artifacts.candidates_csv,
                artifacts.candidates_json,
            ]
            .iter()
            .map(|p| std::fs::read(p).expect("artifact"))
            .collect()
        };
        let b1 = run_bytes(1);
        let files_ok = run_bytes(4) == b1 && run_bytes(8) == b1;
        all_pass &= report(
            10,
            "determinism",
            matrices_ok && files_ok,
            &format!("matrices bit-identical: {matrices_ok}; artifact files byte-identical: {files_ok}"),
        );
    }

    println!(
        "acceptance suite {} in {:.0?}",
        if all_pass { "PASSED" } else { "FAILED" },
        t0.elapsed()
    );
    if !all_pass {
        std::process::exit(1);
    }
}

// --------------------------------------------------------------------------
// helpers
// --------------------------------------------------------------------------

fn rand_vec3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
    )
}

fn rwg_gram(mesh: &SurfaceMesh, space: &DivConformingSpace) -> Array2<Complex64> {
    let rule = tebem::quadrature::gauss_rule(6).expect("rule");
    let mut g = Array2::<Complex64>::zeros((space.dim, space.dim));
    for t in 0..mesh.num_triangles() {
        let verts = mesh.triangle_vertices(t);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = Point3::from(
                verts[0].coords * bary[0] + verts[1].coords * bary[1] + verts[2].coords * bary[2],
            );
            for la in 0..3 {
                let da = space.tri_dofs[t][la];
                let va = space.basis_value(mesh, t, la, &x);
                for lb in 0..3 {
                    let db = space.tri_dofs[t][lb];
                    let vb = space.basis_value(mesh, t, lb, &x);
                    g[[da.edge, db.edge]] += Complex64::new(va.dot(&vb) * mesh.areas[t] * w, 0.0);
                }
            }
        }
    }
    g
}

fn solve_vec(a: &Array2<Complex64>, b: &Array1<Complex64>) -> Array1<Complex64> {
    let mut rhs = Array2::<Complex64>::zeros((b.len(), 1));
    for i in 0..b.len() {
        rhs[[i, 0]] = b[i];
    }
    lu_solve_many(a, &rhs).expect("solve").column(0).to_owned()
}

/// Manufactured transmission solve across the inner interface: an interior
/// dipole pair with known exact fields defines the trace-jump data; the
/// solved densities must reproduce the exterior reference field at |x| = 2.
fn manufactured_transmission_error(quad: &QuadSettings) -> f64 {
    use tebem::assembly::l21_from_parts;
    use tebem::fields::{dipole_curl, dipole_field, electric_field};

    let k = Complex64::new(1.3, 0.0);
    let n1 = 4.0f64;
    let n2 = 4.0f64;
    let k1 = k * n1.sqrt();
    let k2 = k * n2.sqrt();
    let mesh = make_icosphere(0.5, 2);
    let space = DivConformingSpace::new(&mesh);
    let s1 = assemble_single_k(&mesh, &space, k1, quad).expect("single");
    let s2 = assemble_single_k(&mesh, &space, k2, quad).expect("single");
    let l21 = l21_from_parts(&s1, &s2);

    // Exact pair: interior solution from an exterior dipole, outgoing
    // exterior solution from an interior dipole.
    let z_out = Point3::new(0.0, 0.3, 1.1);
    let z_in = Point3::new(0.12, -0.05, 0.08);
    let p1 = Vector3::new(0.4, 1.0, -0.3);
    let p2 = Vector3::new(-0.7, 0.2, 1.0);
    let de = |x: &Point3<f64>| dipole_field(k2, &z_in, &p2, x) - dipole_field(k1, &z_out, &p1, x);
    let dc = |x: &Point3<f64>| dipole_curl(k2, &z_in, &p2, x) - dipole_curl(k1, &z_out, &p1, x);

    let rhs_curl = project_onto_space(&mesh, &space, dc);
    let rhs_e = project_onto_space(&mesh, &space, de);
    let nd = space.dim;
    let mut rhs = Array2::<Complex64>::zeros((2 * nd, 1));
    for i in 0..nd {
        rhs[[i, 0]] = rhs_curl[i];
        rhs[[nd + i, 0]] = rhs_e[i];
    }
    let sol = lu_solve_many(&l21, &rhs).expect("solve");
    let m = sol.slice(ndarray::s![..nd, 0]).to_owned();
    let j = sol.slice(ndarray::s![nd.., 0]).to_owned();

    let pts: Vec<Point3<f64>> = sphere_directions(8)
        .iter()
        .map(|d| Point3::from(d * 2.0))
        .collect();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for x in &pts {
        let reference = dipole_field(k2, &z_in, &p2, x);
        let field = electric_field(&mesh, &space, m.view(), j.view(), k2, x);
        num += (field - reference).norm_squared();
        den += reference.norm_squared();
    }
    (num / den).sqrt()
}
