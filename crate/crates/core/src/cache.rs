//! On-disk cache for assembled operator matrices.
//!
//! File layout: magic + header {format version, kind, k (re, im), n, mesh
//! content hash, quadrature orders} followed by row-major complex doubles,
//! little-endian. A load with any header mismatch is treated as a miss and
//! the stale file is ignored. Writes go through a temp file + rename so a
//! crashed run never leaves a partial file behind.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use crate::assembly::{QuadSettings, SingleKOps};

const MAGIC: &[u8; 8] = b"TBEMCACH";
const FORMAT_VERSION: u32 = 1;

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "TEBEM_CACHE_DIR";

/// Matrix kinds stored in cache headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheKind {
    /// The three single-wavenumber sweeps (svec, sdiv, kk) in one file.
    SingleK = 1,
}

/// Identifying header of a cache entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub kind: u8,
    pub k: Complex64,
    /// Contrast tag; single-k sweeps do not depend on n and store 0.
    pub n: f64,
    /// Hex SHA-256 of the mesh geometry/topology.
    pub mesh_hash: String,
    pub regular_order: u32,
    pub singular_order: u32,
}

impl CacheHeader {
    pub fn single_k(mesh_hash: &str, k: Complex64, quad: &QuadSettings) -> Self {
        CacheHeader {
            kind: CacheKind::SingleK as u8,
            k,
            n: 0.0,
            mesh_hash: mesh_hash.to_string(),
            regular_order: quad.regular_order as u32,
            singular_order: quad.singular_order as u32,
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.kind])?;
        w.write_all(&self.k.re.to_le_bytes())?;
        w.write_all(&self.k.im.to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        let hash = self.mesh_hash.as_bytes();
        w.write_all(&(hash.len() as u32).to_le_bytes())?;
        w.write_all(hash)?;
        w.write_all(&self.regular_order.to_le_bytes())?;
        w.write_all(&self.singular_order.to_le_bytes())?;
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "format version"));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let k = Complex64::new(read_f64(r)?, read_f64(r)?);
        let n = read_f64(r)?;
        let hash_len = read_u32(r)? as usize;
        if hash_len > 1024 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "hash length"));
        }
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let mesh_hash = String::from_utf8(hash)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "hash utf8"))?;
        Ok(CacheHeader {
            kind: kind[0],
            k,
            n,
            mesh_hash,
            regular_order: read_u32(r)?,
            singular_order: read_u32(r)?,
        })
    }

    /// Deterministic file name derived from the header bytes.
    fn file_name(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("in-memory write");
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("{}.tbc", &hex[..32])
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<Complex64>) -> io::Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> io::Result<Array2<Complex64>> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    if rows.saturating_mul(cols) > 1 << 28 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "matrix size"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(Complex64::new(read_f64(r)?, read_f64(r)?));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "matrix shape"))
}

/// Resolves the effective cache directory: the env override wins, then the
/// configured path, then `.tebem-cache` under the current directory.
pub fn resolve_dir(configured: Option<&Path>) -> PathBuf {
    if let Ok(dir) = std::env::var(CACHE_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    configured
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(".tebem-cache"))
}

/// Stores the single-k sweep triple, atomically. Returns the file path.
pub fn store_single_k(
    dir: &Path,
    mesh_hash: &str,
    quad: &QuadSettings,
    ops: &SingleKOps,
) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let header = CacheHeader::single_k(mesh_hash, ops.k, quad);
    let path = dir.join(header.file_name());
    let tmp = dir.join(format!("{}.tmp.{}", header.file_name(), std::process::id()));
    {
        let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
        header.write_to(&mut w)?;
        write_matrix(&mut w, &ops.svec)?;
        write_matrix(&mut w, &ops.sdiv)?;
        write_matrix(&mut w, &ops.kk)?;
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads a single-k sweep triple; returns None on a miss or any header
/// mismatch (stale format, different mesh, wavenumber, or orders).
pub fn load_single_k(
    dir: &Path,
    mesh_hash: &str,
    k: Complex64,
    quad: &QuadSettings,
) -> Option<SingleKOps> {
    let want = CacheHeader::single_k(mesh_hash, k, quad);
    let path = dir.join(want.file_name());
    let mut r = io::BufReader::new(fs::File::open(&path).ok()?);
    let got = CacheHeader::read_from(&mut r).ok()?;
    if got != want {
        return None;
    }
    let svec = read_matrix(&mut r).ok()?;
    let sdiv = read_matrix(&mut r).ok()?;
    let kk = read_matrix(&mut r).ok()?;
    Some(SingleKOps { svec, sdiv, kk, k })
}

/// One entry of [`list`].
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub header: CacheHeader,
    pub bytes: u64,
}

/// Lists readable cache entries in the directory (unreadable files skipped).
pub fn list(dir: &Path) -> Vec<CacheEntry> {
    let mut out = Vec::new();
    let Ok(entries) = fs::read_dir(dir) else {
        return out;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("tbc") {
            continue;
        }
        let Ok(file) = fs::File::open(&path) else {
            continue;
        };
        let mut r = io::BufReader::new(file);
        if let Ok(header) = CacheHeader::read_from(&mut r) {
            let bytes = entry.metadata().map(|m| m.len()).unwrap_or(0);
            out.push(CacheEntry {
                path,
                header,
                bytes,
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out
}

/// Removes all cache files; returns the number deleted.
pub fn clear(dir: &Path) -> io::Result<usize> {
    let mut removed = 0;
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(0);
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("tbc") {
            fs::remove_file(&path)?;
            removed += 1;
        }
    }
    Ok(removed)
}

/// Cache-aware single-k assembly: load on hit, assemble and store on miss.
pub fn assemble_single_k_cached(
    dir: &Path,
    mesh: &crate::mesh::SurfaceMesh,
    space: &crate::space::DivConformingSpace,
    k: Complex64,
    quad: &QuadSettings,
) -> Result<SingleKOps, crate::assembly::AssemblyError> {
    let hash = mesh.content_hash();
    if let Some(ops) = load_single_k(dir, &hash, k, quad) {
        return Ok(ops);
    }
    let ops = crate::assembly::assemble_single_k(mesh, space, k, quad)?;
    // A failed store must not fail the computation; the result is returned
    // either way and the next run recomputes.
    let _ = store_single_k(dir, &hash, quad, &ops);
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_single_k;
    use crate::mesh::make_icosphere;
    use crate::space::DivConformingSpace;
    use tempfile::TempDir;

    fn sample_ops() -> (crate::mesh::SurfaceMesh, DivConformingSpace, SingleKOps) {
        let mesh = make_icosphere(1.0, 0);
        let space = DivConformingSpace::new(&mesh);
        let ops = assemble_single_k(
            &mesh,
            &space,
            Complex64::new(1.5, 0.2),
            &QuadSettings::default(),
        )
        .unwrap();
        (mesh, space, ops)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (mesh, _, ops) = sample_ops();
        let dir = TempDir::new().unwrap();
        let quad = QuadSettings::default();
        let hash = mesh.content_hash();
        store_single_k(dir.path(), &hash, &quad, &ops).unwrap();
        let back = load_single_k(dir.path(), &hash, ops.k, &quad).unwrap();
        assert_eq!(ops.svec, back.svec);
        assert_eq!(ops.sdiv, back.sdiv);
        assert_eq!(ops.kk, back.kk);
    }

    #[test]
    fn header_mismatch_is_a_miss() {
        let (mesh, _, ops) = sample_ops();
        let dir = TempDir::new().unwrap();
        let quad = QuadSettings::default();
        let hash = mesh.content_hash();
        store_single_k(dir.path(), &hash, &quad, &ops).unwrap();

        // Different wavenumber, mesh hash, or orders: all misses.
        assert!(load_single_k(dir.path(), &hash, Complex64::new(1.5, 0.3), &quad).is_none());
        assert!(load_single_k(dir.path(), "deadbeef", ops.k, &quad).is_none());
        let mut other = quad.clone();
        other.singular_order += 1;
        assert!(load_single_k(dir.path(), &hash, ops.k, &other).is_none());
    }

    #[test]
    fn list_and_clear() {
        let (mesh, _, ops) = sample_ops();
        let dir = TempDir::new().unwrap();
        let quad = QuadSettings::default();
        let hash = mesh.content_hash();
        store_single_k(dir.path(), &hash, &quad, &ops).unwrap();
        let entries = list(dir.path());
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].header.mesh_hash, hash);
        assert!(entries[0].bytes > 0);
        assert_eq!(clear(dir.path()).unwrap(), 1);
        assert!(list(dir.path()).is_empty());
    }

    #[test]
    fn cached_assembly_hits_after_first_call() {
        let mesh = make_icosphere(1.0, 0);
        let space = DivConformingSpace::new(&mesh);
        let dir = TempDir::new().unwrap();
        let quad = QuadSettings::default();
        let k = Complex64::new(2.0, 0.0);
        let first = assemble_single_k_cached(dir.path(), &mesh, &space, k, &quad).unwrap();
        assert_eq!(list(dir.path()).len(), 1);
        let second = assemble_single_k_cached(dir.path(), &mesh, &space, k, &quad).unwrap();
        assert_eq!(first.svec, second.svec);
    }

    #[test]
    fn env_override_wins() {
        // Serialized by running in one test; std::env mutation is process
        // global, so restore immediately.
        std::env::set_var(CACHE_DIR_ENV, "/tmp/tebem-env-cache");
        let dir = resolve_dir(Some(Path::new("/tmp/other")));
        std::env::remove_var(CACHE_DIR_ENV);
        assert_eq!(dir, PathBuf::from("/tmp/tebem-env-cache"));
        assert_eq!(
            resolve_dir(Some(Path::new("/tmp/other"))),
            PathBuf::from("/tmp/other")
        );
        assert_eq!(resolve_dir(None), PathBuf::from(".tebem-cache"));
    }
}
