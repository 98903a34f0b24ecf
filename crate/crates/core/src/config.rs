//! Run configuration: TOML schema, validation, and config hashing.
//!
//! A run is described by one TOML file; command-line flags may override
//! individual fields (flags win). Output artifacts are stamped with the
//! SHA-256 of the fully resolved configuration so reruns are verifiable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::QuadSettings;
use crate::mesh::{make_scene, MeshError, MultiSurfaceScene, SurfaceMesh};
use crate::solver::ContourSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
}

/// Geometry source: a mesh file on disk or the built-in sphere generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Path to an OFF or Gmsh v2 surface mesh; mutually exclusive with the
    /// generator fields.
    pub mesh_path: Option<PathBuf>,
    /// Icosphere radius (generator).
    pub radius: Option<f64>,
    /// Icosphere subdivision level (generator).
    pub level: Option<u32>,
    /// Optional inner-surface offset for two-layer runs: the inner sphere
    /// radius (generator geometries only).
    pub inner_radius: Option<f64>,
}

/// Scan window on the positive real axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub steps: usize,
}

/// Acceptance thresholds for candidate detection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Dip cutoff as a fraction of the median scan sigma_min.
    pub dip_rel: f64,
    /// Far-field filter cutoff as a fraction of the random baseline.
    pub farfield_rel: f64,
    /// sigma_min verification cutoff for Beyn candidates.
    pub verify_sigma: f64,
    /// Imaginary-axis sigma_min floor for cmd_verify.
    pub axis_floor: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            dip_rel: 0.1,
            farfield_rel: 0.01,
            verify_sigma: 1e-2,
            axis_floor: 1e-6,
        }
    }
}

/// Oracle settings for sphere reference runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub l_max: usize,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            l_max: 6,
            k_min: 0.5,
            k_max: 6.0,
        }
    }
}

/// Full run configuration (TOML root).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    /// Contrast n for single-surface runs; n2 additionally for two-layer.
    pub n: f64,
    pub n2: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadSettings,
    pub scan: Option<ScanConfig>,
    pub contour: Option<ContourSpec>,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Worker-pool size; 0 means "let the runtime decide".
    #[serde(default)]
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        match (&g.mesh_path, g.radius, g.level) {
            (Some(p), None, None) => {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!(
                        "mesh file {} does not exist",
                        p.display()
                    )));
                }
            }
            (None, Some(r), Some(_)) => {
                if r <= 0.0 {
                    return Err(ConfigError::Invalid("radius must be positive".into()));
                }
                if let Some(ri) = g.inner_radius {
                    if ri <= 0.0 || ri >= r {
                        return Err(ConfigError::Invalid(
                            "inner_radius must lie in (0, radius)".into(),
                        ));
                    }
                }
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "geometry needs either mesh_path or radius+level".into(),
                ))
            }
        }
        if self.n <= 0.0 || self.n == 1.0 {
            return Err(ConfigError::Invalid(
                "contrast must differ from 1 and be positive".into(),
            ));
        }
        if let Some(n2) = self.n2 {
            if n2 <= 0.0 || n2 == 1.0 {
                return Err(ConfigError::Invalid(
                    "contrast must differ from 1 and be positive".into(),
                ));
            }
        }
        if let Some(s) = &self.scan {
            if !(s.k_min > 0.0 && s.k_max > s.k_min && s.steps >= 2) {
                return Err(ConfigError::Invalid(
                    "scan needs 0 < k_min < k_max and steps >= 2".into(),
                ));
            }
        }
        let t = &self.thresholds;
        if t.dip_rel <= 0.0 || t.farfield_rel <= 0.0 || t.verify_sigma <= 0.0 {
            return Err(ConfigError::Invalid("thresholds must be positive".into()));
        }
        if self.oracle.l_max == 0 || self.oracle.k_min <= 0.0 || self.oracle.k_max <= self.oracle.k_min
        {
            return Err(ConfigError::Invalid("oracle range invalid".into()));
        }
        Ok(())
    }

    /// Loads the outer surface (file or generator).
    pub fn load_mesh(&self) -> Result<SurfaceMesh, ConfigError> {
        let g = &self.geometry;
        if let Some(path) = &g.mesh_path {
            let format = crate::mesh::format_from_path(path).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "cannot infer mesh format from {} (expected .off or .msh)",
                    path.display()
                ))
            })?;
            Ok(crate::mesh::load_mesh(path, format)?)
        } else {
            Ok(crate::mesh::make_icosphere(
                g.radius.expect("validated"),
                g.level.expect("validated"),
            ))
        }
    }

    /// Loads the two-surface scene for §-style two-layer runs.
    pub fn load_scene(&self) -> Result<MultiSurfaceScene, ConfigError> {
        let g = &self.geometry;
        let (Some(radius), Some(level), Some(inner)) = (g.radius, g.level, g.inner_radius) else {
            return Err(ConfigError::Invalid(
                "two-layer runs need generator geometry with inner_radius".into(),
            ));
        };
        let outer = crate::mesh::make_icosphere(radius, level);
        let inner = crate::mesh::make_icosphere(inner, level);
        Ok(make_scene(outer, inner)?)
    }

    pub fn is_two_layer(&self) -> bool {
        self.n2.is_some() && self.geometry.inner_radius.is_some()
    }

    /// Hex SHA-256 of the canonical serialized configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = toml::to_string(self).expect("serializable config");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> String {
        r#"
            n = 4.0
            [geometry]
            radius = 1.0
            level = 1
            [scan]
            k_min = 0.5
            k_max = 5.0
            steps = 200
        "#
        .to_string()
    }

    #[test]
    fn parses_and_validates_generator_config() {
        let config: RunConfig = toml::from_str(&base_toml()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.thresholds.dip_rel, 0.1);
        assert_eq!(config.output_dir, PathBuf::from("out"));
        let mesh = config.load_mesh().unwrap();
        assert_eq!(mesh.vertices.len(), 42);
    }

    #[test]
    fn rejects_unit_contrast() {
        let text = base_toml().replace("n = 4.0", "n = 1.0");
        let config: RunConfig = toml::from_str(&text).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("differ from 1"), "{err}");
    }

    #[test]
    fn rejects_missing_geometry_and_bad_scan() {
        let text = "n = 4.0\n[geometry]\nradius = 1.0\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        assert!(config.validate().is_err());

        let text = base_toml().replace("steps = 200", "steps = 1");
        let config: RunConfig = toml::from_str(&text).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = base_toml() + "\nunknown_key = 3\n";
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn two_layer_scene_has_positive_gap() {
        let text = base_toml()
            .replace("level = 1", "level = 1\ninner_radius = 0.7")
            .replace("n = 4.0", "n = 4.0\nn2 = 4.0");
        let config: RunConfig = toml::from_str(&text).unwrap();
        config.validate().unwrap();
        assert!(config.is_two_layer());
        let scene = config.load_scene().unwrap();
        assert!(scene.gap > 0.0);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a: RunConfig = toml::from_str(&base_toml()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.n = 2.0;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
