//! Closed oriented triangulated surfaces with edge topology.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("edge ({a},{b}) has {count} adjacent triangles (closed surface requires 2)")]
    OpenSurface { a: usize, b: usize, count: usize },
    #[error("negative signed volume {volume:.6e}: surface orientation is inward")]
    NegativeVolume { volume: f64 },
    #[error("degenerate triangle {index} (area {area:.3e})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("triangle {index} references vertex {vertex} out of range ({nverts} vertices)")]
    VertexOutOfRange {
        index: usize,
        vertex: usize,
        nverts: usize,
    },
    #[error("surfaces intersect or touch (gap {gap:.3e})")]
    SurfacesTouch { gap: f64 },
    #[error("inner not contained: vertex {vertex} of the inner surface lies outside the outer surface")]
    InnerNotContained { vertex: usize },
}

/// An edge of the surface mesh with its two adjacent triangles.
///
/// Vertices are stored sorted (`a < b`); the edge is oriented `a -> b`.
/// `tri_plus` is the triangle whose boundary cycle traverses the edge in the
/// `a -> b` direction, `tri_minus` the one traversing `b -> a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub tri_plus: usize,
    pub tri_minus: usize,
}

/// Closed, consistently oriented triangulated surface.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges sorted by (min vertex, max vertex); DOF order follows this.
    pub edges: Vec<Edge>,
    /// Per-triangle unit outward normals.
    pub normals: Vec<Vector3<f64>>,
    /// Per-triangle areas.
    pub areas: Vec<f64>,
}

impl SurfaceMesh {
    /// Builds the edge topology and validates all invariants.
    pub fn from_raw(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let nverts = vertices.len();
        for (index, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nverts {
                    return Err(MeshError::VertexOutOfRange {
                        index,
                        vertex: v,
                        nverts,
                    });
                }
            }
        }

        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (index, tri) in triangles.iter().enumerate() {
            let p0 = vertices[tri[0]];
            let p1 = vertices[tri[1]];
            let p2 = vertices[tri[2]];
            let cross = (p1 - p0).cross(&(p2 - p0));
            let area = 0.5 * cross.norm();
            if !(area > 1e-300) {
                return Err(MeshError::DegenerateTriangle { index, area });
            }
            areas.push(area);
            normals.push(cross / cross.norm());
        }

        // Edge map keyed by sorted vertex pair; the sign slot records which
        // side of the oriented edge each triangle sits on.
        let mut edge_map: HashMap<(usize, usize), (Option<usize>, Option<usize>)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let u = tri[i];
                let v = tri[(i + 1) % 3];
                let key = (u.min(v), u.max(v));
                let entry = edge_map.entry(key).or_insert((None, None));
                let slot = if u < v { &mut entry.0 } else { &mut entry.1 };
                if slot.is_some() {
                    // Same directed edge twice: inconsistent orientation shows
                    // up as an edge with one adjacent triangle elsewhere, so
                    // report it as a closedness failure on this edge.
                    return Err(MeshError::OpenSurface {
                        a: key.0,
                        b: key.1,
                        count: 1,
                    });
                }
                *slot = Some(t);
            }
        }

        let mut keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        let mut edges = Vec::with_capacity(keys.len());
        for key in keys {
            let (plus, minus) = edge_map[&key];
            match (plus, minus) {
                (Some(tp), Some(tm)) => edges.push(Edge {
                    a: key.0,
                    b: key.1,
                    tri_plus: tp,
                    tri_minus: tm,
                }),
                _ => {
                    return Err(MeshError::OpenSurface {
                        a: key.0,
                        b: key.1,
                        count: 1,
                    })
                }
            }
        }

        let mesh = SurfaceMesh {
            vertices,
            triangles,
            edges,
            normals,
            areas,
        };

        let volume = mesh.signed_volume();
        if volume <= 0.0 {
            return Err(MeshError::NegativeVolume { volume });
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Genus from the Euler characteristic V - E + F = 2 - 2g.
    pub fn genus(&self) -> i64 {
        let chi =
            self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64;
        (2 - chi) / 2
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Signed enclosed volume (1/6) sum x . n dA; positive for outward
    /// orientation.
    pub fn signed_volume(&self) -> f64 {
        let mut vol = 0.0;
        for tri in &self.triangles {
            let p0 = self.vertices[tri[0]].coords;
            let p1 = self.vertices[tri[1]].coords;
            let p2 = self.vertices[tri[2]].coords;
            vol += p0.dot(&p1.cross(&p2)) / 6.0;
        }
        vol
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point3<f64>; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn centroid(&self, t: usize) -> Point3<f64> {
        let [p0, p1, p2] = self.triangle_vertices(t);
        Point3::from((p0.coords + p1.coords + p2.coords) / 3.0)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let edge = &self.edges[e];
        (self.vertices[edge.b] - self.vertices[edge.a]).norm()
    }

    pub fn max_edge_length(&self) -> f64 {
        (0..self.num_edges())
            .map(|e| self.edge_length(e))
            .fold(0.0, f64::max)
    }

    pub fn min_edge_length(&self) -> f64 {
        (0..self.num_edges())
            .map(|e| self.edge_length(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_vertices(t);
        (p1 - p0)
            .norm()
            .max((p2 - p1).norm())
            .max((p0 - p2).norm())
    }

    /// Content hash over vertex coordinates and connectivity, used to key
    /// cached matrices.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for p in &self.vertices {
            for c in p.coords.iter() {
                hasher.update(c.to_le_bytes());
            }
        }
        for tri in &self.triangles {
            for &v in tri {
                hasher.update((v as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    /// Mesh summary as a JSON value (used by the mesh-info command).
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "vertices": self.num_vertices(),
            "edges": self.num_edges(),
            "triangles": self.num_triangles(),
            "genus": self.genus(),
            "area": self.total_area(),
            "volume": self.signed_volume(),
            "min_edge_length": self.min_edge_length(),
            "max_edge_length": self.max_edge_length(),
            "content_hash": self.content_hash(),
        })
    }

    /// Parity test: is the point inside the surface?  Ray-crossing with a
    /// fixed pseudo-random direction, re-drawn on degenerate hits.
    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        // Deterministic direction sequence; only advanced on degenerate hits.
        let mut dirs = [
            Vector3::new(0.57735026, 0.51449576, 0.63245553),
            Vector3::new(-0.26726124, 0.80178373, 0.53452248),
            Vector3::new(0.12309149, -0.49236596, 0.86164044),
            Vector3::new(0.90453403, 0.30151134, -0.30151134),
        ];
        for d in dirs.iter_mut() {
            d.normalize_mut();
        }
        'dirs: for dir in &dirs {
            let mut crossings = 0usize;
            for t in 0..self.num_triangles() {
                match ray_triangle(p, dir, &self.triangle_vertices(t)) {
                    RayHit::Miss => {}
                    RayHit::Hit => crossings += 1,
                    RayHit::Degenerate => continue 'dirs,
                }
            }
            return crossings % 2 == 1;
        }
        // All directions degenerate: point effectively on the surface.
        false
    }

    /// Minimum distance from any vertex of `other` to this surface, and vice
    /// versa.
    pub fn surface_gap(&self, other: &SurfaceMesh) -> f64 {
        let mut gap = f64::INFINITY;
        for p in &other.vertices {
            for t in 0..self.num_triangles() {
                gap = gap.min(point_triangle_distance(p, &self.triangle_vertices(t)));
            }
        }
        for p in &self.vertices {
            for t in 0..other.num_triangles() {
                gap = gap.min(point_triangle_distance(p, &other.triangle_vertices(t)));
            }
        }
        gap
    }
}

enum RayHit {
    Miss,
    Hit,
    Degenerate,
}

/// Moller-Trumbore with degeneracy reporting for the parity test.
fn ray_triangle(origin: &Point3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> RayHit {
    let eps = 1e-12;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < eps * e1.norm() * e2.norm() {
        return RayHit::Miss; // ray parallel to the plane
    }
    let inv_det = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    let t = e2.dot(&qvec) * inv_det;
    let edge_tol = 1e-10;
    if u < -edge_tol || v < -edge_tol || u + v > 1.0 + edge_tol {
        return RayHit::Miss;
    }
    if t <= eps {
        return RayHit::Miss;
    }
    // Hits too close to an edge or vertex are ambiguous for parity counting.
    if u < edge_tol || v < edge_tol || u + v > 1.0 - edge_tol {
        return RayHit::Degenerate;
    }
    RayHit::Hit
}

/// Exact point-to-triangle distance.
pub fn point_triangle_distance(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    // Ericson, Real-Time Collision Detection, closest point on triangle.
    let a = tri[0];
    let b = tri[1];
    let c = tri[2];
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm()
}

/// Two-surface scene: outer boundary and a strictly interior surface.
#[derive(Debug, Clone)]
pub struct MultiSurfaceScene {
    pub outer: SurfaceMesh,
    pub inner: SurfaceMesh,
    pub gap: f64,
}

/// Builds the two-surface scene, rejecting touching or non-nested surfaces.
pub fn make_scene(outer: SurfaceMesh, inner: SurfaceMesh) -> Result<MultiSurfaceScene, MeshError> {
    let gap = outer.surface_gap(&inner);
    if gap <= 1e-12 {
        return Err(MeshError::SurfacesTouch { gap });
    }
    for (vertex, p) in inner.vertices.iter().enumerate() {
        if !outer.contains_point(p) {
            return Err(MeshError::InnerNotContained { vertex });
        }
    }
    Ok(MultiSurfaceScene { outer, inner, gap })
}

/// Icosphere: subdivided icosahedron projected to the sphere of given radius.
pub fn make_icosphere(radius: f64, level: u32) -> SurfaceMesh {
    assert!(radius > 0.0, "radius must be positive");
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::new(x, y, z))
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_tris = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for i in 0..3 {
                let u = tri[i];
                let v = tri[(i + 1) % 3];
                let key = (u.min(v), u.max(v));
                mids[i] = *midpoint.entry(key).or_insert_with(|| {
                    let m = Point3::from((vertices[u].coords + vertices[v].coords) / 2.0);
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            new_tris.push([tri[0], mids[0], mids[2]]);
            new_tris.push([tri[1], mids[1], mids[0]]);
            new_tris.push([tri[2], mids[2], mids[1]]);
            new_tris.push([mids[0], mids[1], mids[2]]);
        }
        triangles = new_tris;
    }

    for p in vertices.iter_mut() {
        let r = p.coords.norm();
        p.coords *= radius / r;
    }

    SurfaceMesh::from_raw(vertices, triangles).expect("icosphere construction is always valid")
}

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    GmshAsciiV2,
}

/// Loads and validates a mesh file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.display().to_string();
    let (vertices, triangles) = match format {
        MeshFormat::Off => parse_off(&text, &name)?,
        MeshFormat::GmshAsciiV2 => parse_gmsh_v2(&text, &name)?,
    };
    SurfaceMesh::from_raw(vertices, triangles)
}

/// Guesses the format from the file extension (`.off` / `.msh`).
pub fn format_from_path(path: &Path) -> Option<MeshFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("off") | Some("OFF") => Some(MeshFormat::Off),
        Some("msh") => Some(MeshFormat::GmshAsciiV2),
        _ => None,
    }
}

fn parse_off(text: &str, path: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>), MeshError> {
    let err = |line: usize, msg: &str| MeshError::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lno, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    if header != "OFF" {
        return Err(err(lno, "expected OFF header"));
    }
    let (lno, counts) = lines.next().ok_or_else(|| err(lno, "missing count line"))?;
    let mut it = counts.split_whitespace();
    let nv: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(lno, "bad vertex count"))?;
    let nf: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(lno, "bad face count"))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (lno, line) = lines.next().ok_or_else(|| err(lno, "truncated vertices"))?;
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(lno, "bad vertex coordinate"))?;
        if coords.len() != 3 {
            return Err(err(lno, "vertex line must have 3 coordinates"));
        }
        vertices.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (lno, line) = lines.next().ok_or_else(|| err(lno, "truncated faces"))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(lno, "bad face index"))?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(err(lno, "only triangular faces are supported"));
        }
        triangles.push([idx[1], idx[2], idx[3]]);
    }
    Ok((vertices, triangles))
}

fn parse_gmsh_v2(text: &str, path: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>), MeshError> {
    let err = |line: usize, msg: &str| MeshError::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    };
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).collect();
    let mut i = 0usize;
    let mut node_ids: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut seen_nodes = false;
    let mut seen_elements = false;
    while i < lines.len() {
        let (lno, line) = lines[i];
        match line {
            "$MeshFormat" => {
                let (lno2, ver) = *lines.get(i + 1).ok_or_else(|| err(lno, "truncated header"))?;
                if !ver.starts_with("2.") {
                    return Err(err(lno2, "only Gmsh ASCII v2 is supported"));
                }
                i += 3;
            }
            "$Nodes" => {
                seen_nodes = true;
                let (lno2, cnt) = *lines.get(i + 1).ok_or_else(|| err(lno, "truncated nodes"))?;
                let n: usize = cnt.parse().map_err(|_| err(lno2, "bad node count"))?;
                for j in 0..n {
                    let (lno3, l) = *lines
                        .get(i + 2 + j)
                        .ok_or_else(|| err(lno2, "truncated node list"))?;
                    let parts: Vec<&str> = l.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(err(lno3, "node line must be: id x y z"));
                    }
                    let id: usize = parts[0].parse().map_err(|_| err(lno3, "bad node id"))?;
                    let xyz: Vec<f64> = parts[1..]
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(lno3, "bad node coordinate"))?;
                    node_ids.insert(id, vertices.len());
                    vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
                }
                i += n + 3;
            }
            "$Elements" => {
                seen_elements = true;
                let (lno2, cnt) = *lines.get(i + 1).ok_or_else(|| err(lno, "truncated elements"))?;
                let n: usize = cnt.parse().map_err(|_| err(lno2, "bad element count"))?;
                for j in 0..n {
                    let (lno3, l) = *lines
                        .get(i + 2 + j)
                        .ok_or_else(|| err(lno2, "truncated element list"))?;
                    let parts: Vec<usize> = l
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(lno3, "bad element field"))?;
                    if parts.len() < 3 {
                        return Err(err(lno3, "short element line"));
                    }
                    let etype = parts[1];
                    if etype != 2 {
                        continue; // keep only 3-node triangles
                    }
                    let ntags = parts[2];
                    if parts.len() != 3 + ntags + 3 {
                        return Err(err(lno3, "triangle element must have 3 node ids"));
                    }
                    let mut tri = [0usize; 3];
                    for (slot, &id) in tri.iter_mut().zip(&parts[3 + ntags..]) {
                        *slot = *node_ids
                            .get(&id)
                            .ok_or_else(|| err(lno3, "element references unknown node"))?;
                    }
                    triangles.push(tri);
                }
                i += n + 3;
            }
            _ => i += 1,
        }
    }
    if !seen_nodes || !seen_elements {
        return Err(err(lines.len(), "missing $Nodes or $Elements section"));
    }
    Ok((vertices, triangles))
}
