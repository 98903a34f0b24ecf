//! Batch command implementations behind the CLI: mesh-info, scan, beyn,
//! oracle, verify, and cache management.
//!
//! Every command takes a validated [`RunConfig`], writes its artifacts
//! atomically (temp file + rename) with a config-hash stamp, and returns a
//! process exit code following the documented contract:
//! 0 ok, 2 config error, 3 mesh error, 4 partial scan failure, 5 verify
//! failure (1 is reserved for unexpected internal errors).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{
    assemble_diff_blocks, assemble_l_from_parts, assemble_schur, assemble_single_k,
    assemble_tilde_l, AssemblyError,
};
use crate::cache::{self, assemble_single_k_cached};
use crate::config::{ConfigError, RunConfig};
use crate::fields::sphere_directions;
use crate::kernel::Wavenumbers;
use crate::linalg::{sigma_min, singular_values};
use crate::mesh::{MeshError, SurfaceMesh};
use crate::mie::{find_roots, Family, MieError};
use crate::solver::{
    beyn_solve, candidate_at_with, filter_candidate, imaginary_axis_check, random_farfield_baseline,
    scan_csv, sigma_scan, CandidateRecord, EigenCandidate, SolverError,
};
use crate::space::{build_loop_star, DivConformingSpace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MESH: i32 = 3;
pub const EXIT_PARTIAL_SCAN: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] MieError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) | RunnerError::Usage(_) | RunnerError::Kernel(_) => {
                EXIT_CONFIG
            }
            RunnerError::Mesh(_) => EXIT_MESH,
            RunnerError::Solver(SolverError::ContourOutsideDomain)
            | RunnerError::Solver(SolverError::InvalidContour(_)) => EXIT_CONFIG,
            _ => EXIT_INTERNAL,
        }
    }
}

/// Atomic file write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunnerError> {
    let wrap = |source: std::io::Error| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(wrap)?;
        }
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(wrap)?;
        f.write_all(contents).map_err(wrap)?;
        f.flush().map_err(wrap)?;
    }
    std::fs::rename(&tmp, path).map_err(wrap)?;
    Ok(())
}

/// Metadata block stamped into every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactMeta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

impl ArtifactMeta {
    fn new(config: &RunConfig) -> Self {
        ArtifactMeta {
            tool: "tebem",
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config.config_hash(),
        }
    }
}

fn csv_stamp(config: &RunConfig) -> String {
    format!(
        "# tool: tebem {}\n# config_hash: {}\n",
        env!("CARGO_PKG_VERSION"),
        config.config_hash()
    )
}

/// The k ↦ dense-matrix factory for the configured geometry: single-surface
/// difference system or two-layer Schur complement. Single-wavenumber
/// sweeps go through the on-disk cache.
pub struct SystemFactory {
    config: RunConfig,
    mesh: SurfaceMesh,
    pub space: DivConformingSpace,
    scene: Option<crate::mesh::MultiSurfaceScene>,
    cache_dir: PathBuf,
}

impl SystemFactory {
    pub fn new(config: &RunConfig) -> Result<Self, RunnerError> {
        let cache_dir = cache::resolve_dir(config.cache_dir.as_deref());
        if config.is_two_layer() {
            let scene = config.load_scene()?;
            let space = DivConformingSpace::new(&scene.outer);
            let mesh = scene.outer.clone();
            Ok(SystemFactory {
                config: config.clone(),
                mesh,
                space,
                scene: Some(scene),
                cache_dir,
            })
        } else {
            let mesh = config.load_mesh()?;
            let space = DivConformingSpace::new(&mesh);
            Ok(SystemFactory {
                config: config.clone(),
                mesh,
                space,
                scene: None,
                cache_dir,
            })
        }
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn assemble(&self, k: Complex64) -> Result<Array2<Complex64>, RunnerError> {
        let quad = &self.config.quadrature;
        if let Some(scene) = &self.scene {
            let n2 = self.config.n2.expect("two-layer config");
            return Ok(assemble_schur(scene, k, self.config.n, n2, quad)?.matrix);
        }
        let w = Wavenumbers::new(k, self.config.n)?;
        let single =
            assemble_single_k_cached(&self.cache_dir, &self.mesh, &self.space, w.k1, quad)?;
        let diff = assemble_diff_blocks(&self.mesh, &self.space, w, quad)?;
        Ok(assemble_l_from_parts(&single, &diff).full())
    }
}

/// mesh-info: JSON summary of the configured geometry to stdout.
pub fn cmd_mesh_info(config: &RunConfig) -> Result<serde_json::Value, RunnerError> {
    let mut summary = if config.is_two_layer() {
        let scene = config.load_scene()?;
        serde_json::json!({
            "outer": scene.outer.summary(),
            "inner": scene.inner.summary(),
            "gap": scene.gap,
        })
    } else {
        config.load_mesh()?.summary()
    };
    summary["config_hash"] = serde_json::Value::String(config.config_hash());
    Ok(summary)
}

/// Artifacts written by [`cmd_scan`].
#[derive(Debug)]
pub struct ScanArtifacts {
    pub scan_csv: PathBuf,
    pub candidates_csv: PathBuf,
    pub candidates_json: PathBuf,
    pub exit_code: i32,
    pub candidates: Vec<EigenCandidate>,
}

fn filtered_candidates(
    factory: &SystemFactory,
    config: &RunConfig,
    raw: Vec<(Complex64, f64)>,
) -> Result<Vec<EigenCandidate>, RunnerError> {
    let directions = sphere_directions(26);
    let mut out = Vec::new();
    for (k, _) in raw {
        // Kernel extraction needs the same preconditioning as the scan; see
        // candidate_at_with.
        let p = factory.assemble(Complex64::new(0.0, k.norm())).ok();
        let cand = candidate_at_with(|k| factory.assemble(k), p.as_ref(), k)?;
        let baseline =
            random_farfield_baseline(&factory.mesh, &factory.space, k, &directions, 3);
        let threshold = config.thresholds.farfield_rel * baseline;
        out.push(filter_candidate(
            cand,
            &factory.mesh,
            &factory.space,
            &directions,
            threshold,
        )?);
    }
    Ok(out)
}

/// scan: σ_min sweep over the configured window, dip refinement, far-field
/// filtering, CSV + JSON artifacts. Exit 4 when any grid point failed.
pub fn cmd_scan(config: &RunConfig) -> Result<ScanArtifacts, RunnerError> {
    let scan = config
        .scan
        .as_ref()
        .ok_or_else(|| RunnerError::Usage("config has no [scan] section".into()))?
        .clone();
    let factory = SystemFactory::new(config)?;
    let result = sigma_scan(
        |k| factory.assemble(k),
        scan.k_min,
        scan.k_max,
        scan.steps,
        config.thresholds.dip_rel,
    );
    let raw: Vec<(Complex64, f64)> = result
        .dips
        .iter()
        .map(|&(k, s)| (Complex64::new(k, 0.0), s))
        .collect();
    let candidates = filtered_candidates(&factory, config, raw)?;

    let out_dir = &config.output_dir;
    let stamp = csv_stamp(config);
    let scan_path = out_dir.join("scan.csv");
    write_atomic(&scan_path, (stamp.clone() + &scan_csv(&result)).as_bytes())?;
    let cand_csv_path = out_dir.join("candidates.csv");
    write_atomic(
        &cand_csv_path,
        (stamp + &crate::solver::candidates_csv(&candidates)).as_bytes(),
    )?;
    let cand_json_path = out_dir.join("candidates.json");
    let records: Vec<CandidateRecord> = candidates.iter().map(CandidateRecord::from).collect();
    let json = serde_json::json!({
        "meta": ArtifactMeta::new(config),
        "median_sigma": result.median_sigma,
        "failures": result.failures,
        "candidates": records,
    });
    write_atomic(
        &cand_json_path,
        serde_json::to_string_pretty(&json).unwrap().as_bytes(),
    )?;

    Ok(ScanArtifacts {
        scan_csv: scan_path,
        candidates_csv: cand_csv_path,
        candidates_json: cand_json_path,
        exit_code: if result.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL_SCAN
        },
        candidates,
    })
}

/// beyn: contour-integral eigenvalue search with far-field filtering.
pub fn cmd_beyn(config: &RunConfig) -> Result<ScanArtifacts, RunnerError> {
    let contour = config
        .contour
        .as_ref()
        .ok_or_else(|| RunnerError::Usage("config has no [contour] section".into()))?
        .clone();
    let factory = SystemFactory::new(config)?;
    let found = beyn_solve(
        |k| factory.assemble(k),
        &contour,
        config.thresholds.verify_sigma,
    )?;
    let raw: Vec<(Complex64, f64)> = found.iter().map(|c| (c.k, c.sigma_min)).collect();
    let candidates = filtered_candidates(&factory, config, raw)?;

    let out_dir = &config.output_dir;
    let cand_csv_path = out_dir.join("beyn_candidates.csv");
    write_atomic(
        &cand_csv_path,
        (csv_stamp(config) + &crate::solver::candidates_csv(&candidates)).as_bytes(),
    )?;
    let cand_json_path = out_dir.join("beyn_candidates.json");
    let records: Vec<CandidateRecord> = candidates.iter().map(CandidateRecord::from).collect();
    let json = serde_json::json!({
        "meta": ArtifactMeta::new(config),
        "contour": contour,
        "candidates": records,
    });
    write_atomic(
        &cand_json_path,
        serde_json::to_string_pretty(&json).unwrap().as_bytes(),
    )?;

    Ok(ScanArtifacts {
        scan_csv: cand_csv_path.clone(),
        candidates_csv: cand_csv_path,
        candidates_json: cand_json_path,
        exit_code: EXIT_OK,
        candidates,
    })
}

/// oracle: Mie determinant roots for both families, exported as JSON.
pub fn cmd_oracle(config: &RunConfig) -> Result<PathBuf, RunnerError> {
    let radius = config.geometry.radius.ok_or_else(|| {
        RunnerError::Usage("oracle runs need generator geometry (sphere radius)".into())
    })?;
    let o = &config.oracle;
    let mut tables = Vec::new();
    for family in [Family::Te, Family::Tm] {
        for l in 1..=o.l_max {
            tables.push(find_roots(family, l, config.n, radius, o.k_min, o.k_max)?);
        }
    }
    let json = serde_json::json!({
        "meta": ArtifactMeta::new(config),
        "tables": tables,
    });
    let path = config.output_dir.join("oracle_roots.json");
    write_atomic(&path, serde_json::to_string_pretty(&json).unwrap().as_bytes())?;
    Ok(path)
}

/// One named property measured by [`cmd_verify`].
#[derive(Debug, Clone, Serialize)]
pub struct VerifyProperty {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// "below" = measured must be < bound; "above" = measured must be > bound.
    pub direction: &'static str,
    pub passed: bool,
}

fn prop_below(name: &str, measured: f64, bound: f64) -> VerifyProperty {
    VerifyProperty {
        name: name.into(),
        measured,
        bound,
        direction: "below",
        passed: measured < bound,
    }
}

fn prop_above(name: &str, measured: f64, bound: f64) -> VerifyProperty {
    VerifyProperty {
        name: name.into(),
        measured,
        bound,
        direction: "above",
        passed: measured > bound,
    }
}

/// The `idx`-th smallest singular value (1-based from the tail, clamped);
/// probes the compact tail of the discretized operator.
fn sigma_from_tail(a: &Array2<Complex64>, idx: usize) -> Result<f64, RunnerError> {
    let s = singular_values(a).map_err(|e| RunnerError::Solver(e.into()))?;
    Ok(s[s.len() - idx.min(s.len())])
}

/// verify: imaginary-axis floors, far-field calibration, and the
/// compactness/coercivity property checks; JSON report, exit 5 on failure.
pub fn cmd_verify(config: &RunConfig) -> Result<(PathBuf, i32), RunnerError> {
    let factory = SystemFactory::new(config)?;
    let quad = &config.quadrature;
    let mut props: Vec<VerifyProperty> = Vec::new();

    // Imaginary axis: no transmission eigenvalues at k = i kappa.
    let report = imaginary_axis_check(
        |k| factory.assemble(k),
        &[2.0, 4.0, 8.0],
        config.thresholds.axis_floor,
    )?;
    for (kappa, s) in &report.entries {
        props.push(prop_above(
            &format!("imaginary_axis_sigma_min_kappa_{kappa}"),
            *s,
            config.thresholds.axis_floor,
        ));
    }

    // Far-field calibration: the random-density baseline is an O(1) number.
    let k_ref = Complex64::new(1.5, 0.0);
    let directions = sphere_directions(26);
    let baseline =
        random_farfield_baseline(&factory.mesh, &factory.space, k_ref, &directions, 3);
    props.push(prop_above("farfield_random_baseline", baseline, 1e-6));
    props.push(prop_below("farfield_random_baseline", baseline, 1e6));

    // Compactness: adding the weighted positive-wavenumber system cancels
    // the shared principal part, collapsing the singular-value tail.
    let w = Wavenumbers::new(k_ref, config.n)?;
    let gamma = (w.k1 * w.k1 - w.k * w.k)
        / (w.k1.norm_sqr() - w.k.norm_sqr());
    let l_k = factory.assemble(k_ref)?;
    let l_i = factory.assemble(Complex64::new(0.0, k_ref.norm()))?;
    let combined = &l_k + &l_i.mapv(|v| gamma * v);
    let ratio = sigma_from_tail(&combined, 20)? / sigma_from_tail(&l_k, 20)?;
    props.push(prop_below("compact_perturbation_tail_ratio", ratio, 0.5));

    // K-difference compactness: the off-diagonal difference block has a
    // much faster-decaying spectrum than a single-wavenumber K block.
    // Probed at k = 1 where the tail index sits past the propagating band.
    let mesh = &factory.mesh;
    let space = &factory.space;
    let w_kd = Wavenumbers::new(Complex64::new(1.0, 0.0), config.n)?;
    let single = assemble_single_k(mesh, space, w_kd.k1, quad)?;
    let diff = assemble_diff_blocks(mesh, space, w_kd, quad)?;
    let kratio = sigma_from_tail(&diff.k_diff, 20)? / sigma_from_tail(&single.kk, 20)?;
    props.push(prop_below("k_difference_tail_ratio", kratio, 0.1));

    // Coercivity surrogate: on the imaginary axis the reduced 3x3 system
    // restricted to its (M, Q) unknowns stays uniformly invertible.
    let kappa = Complex64::new(0.0, 2.0);
    let w_axis = Wavenumbers::new(kappa, config.n)?;
    let single_axis = assemble_single_k(mesh, space, w_axis.k1, quad)?;
    let diff_axis = assemble_diff_blocks(mesh, space, w_axis, quad)?;
    let two = assemble_l_from_parts(&single_axis, &diff_axis);
    let split = build_loop_star(mesh);
    let tilde = assemble_tilde_l(&two, &split);
    let (m, q, _) = tilde.dims;
    let sub = tilde.full.slice(ndarray::s![..m + q, ..m + q]).to_owned();
    let floor = sigma_min(&sub).map_err(|e| RunnerError::Solver(e.into()))?;
    props.push(prop_above("coercive_restricted_sigma_min", floor, 0.0));

    let passed = props.iter().all(|p| p.passed);
    let json = serde_json::json!({
        "meta": ArtifactMeta::new(config),
        "properties": props,
        "passed": passed,
    });
    let path = config.output_dir.join("verify_report.json");
    write_atomic(&path, serde_json::to_string_pretty(&json).unwrap().as_bytes())?;
    Ok((path, if passed { EXIT_OK } else { EXIT_VERIFY }))
}

/// cache list: entries as JSON.
pub fn cmd_cache_list(dir: &Path) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = cache::list(dir)
        .iter()
        .map(|e| {
            serde_json::json!({
                "path": e.path.display().to_string(),
                "k": [e.header.k.re, e.header.k.im],
                "mesh_hash": e.header.mesh_hash,
                "regular_order": e.header.regular_order,
                "singular_order": e.header.singular_order,
                "bytes": e.bytes,
            })
        })
        .collect();
    serde_json::json!({ "dir": dir.display().to_string(), "entries": entries })
}

/// cache clear: removes entries, reports the count.
pub fn cmd_cache_clear(dir: &Path) -> Result<usize, RunnerError> {
    cache::clear(dir).map_err(|source| RunnerError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_config(out: &Path, cache: &Path) -> RunConfig {
        let text = format!(
            r#"
                n = 4.0
                output_dir = "{}"
                cache_dir = "{}"
                [geometry]
                radius = 1.0
                level = 0
                [scan]
                k_min = 1.0
                k_max = 2.0
                steps = 5
            "#,
            out.display(),
            cache.display()
        );
        let config: RunConfig = toml::from_str(&text).unwrap();
        config.validate().unwrap();
        config
    }

    #[test]
    fn mesh_info_reports_combinatorics() {
        let tmp = TempDir::new().unwrap();
        let mut config = small_config(tmp.path(), tmp.path());
        config.geometry.level = Some(1);
        let info = cmd_mesh_info(&config).unwrap();
        assert_eq!(info["vertices"], 42);
        assert_eq!(info["edges"], 120);
        assert_eq!(info["triangles"], 80);
        assert!(info["config_hash"].as_str().unwrap().len() == 64);
    }

    #[test]
    fn mesh_info_two_layer_has_gap() {
        let tmp = TempDir::new().unwrap();
        let mut config = small_config(tmp.path(), tmp.path());
        config.geometry.inner_radius = Some(0.6);
        config.n2 = Some(2.0);
        let info = cmd_mesh_info(&config).unwrap();
        assert!(info["gap"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn scan_writes_stamped_artifacts() {
        let tmp = TempDir::new().unwrap();
        let cache_tmp = TempDir::new().unwrap();
        let config = small_config(tmp.path(), cache_tmp.path());
        let artifacts = cmd_scan(&config).unwrap();
        assert_eq!(artifacts.exit_code, EXIT_OK);
        let csv = std::fs::read_to_string(&artifacts.scan_csv).unwrap();
        assert!(csv.starts_with("# tool: tebem"));
        assert!(csv.contains("k,sigma_min"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 6);

        // Warm-cache rerun reproduces the bytes exactly.
        let again = cmd_scan(&config).unwrap();
        let csv2 = std::fs::read_to_string(&again.scan_csv).unwrap();
        assert_eq!(csv, csv2);
        assert!(!cache::list(cache_tmp.path()).is_empty());
    }

    #[test]
    fn beyn_requires_valid_contour() {
        let tmp = TempDir::new().unwrap();
        let mut config = small_config(tmp.path(), tmp.path());
        config.contour = Some(crate::solver::ContourSpec {
            center: Complex64::new(-1.0, 0.0),
            radius: 0.5,
            nodes: 16,
            probes: 4,
            rank_tol: 1e-8,
        });
        let err = cmd_beyn(&config).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("analyticity"), "{err}");
    }

    #[test]
    fn oracle_writes_root_tables() {
        let tmp = TempDir::new().unwrap();
        let mut config = small_config(tmp.path(), tmp.path());
        config.oracle.l_max = 2;
        config.oracle.k_min = 0.5;
        config.oracle.k_max = 6.0;
        let path = cmd_oracle(&config).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let tables = json["tables"].as_array().unwrap();
        assert_eq!(tables.len(), 4);
        let total_roots: usize = tables
            .iter()
            .map(|t| t["roots"].as_array().unwrap().len())
            .sum();
        assert!(total_roots >= 1);
    }

    #[test]
    fn cache_commands_round_trip() {
        let tmp = TempDir::new().unwrap();
        let cache_tmp = TempDir::new().unwrap();
        let config = small_config(tmp.path(), cache_tmp.path());
        cmd_scan(&config).unwrap();
        let listed = cmd_cache_list(cache_tmp.path());
        assert!(!listed["entries"].as_array().unwrap().is_empty());
        let removed = cmd_cache_clear(cache_tmp.path()).unwrap();
        assert!(removed > 0);
        assert!(cmd_cache_list(cache_tmp.path())["entries"]
            .as_array()
            .unwrap()
            .is_empty());
    }
}
