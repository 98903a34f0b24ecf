//! Div-conforming (Rao-Wilton-Glisson) boundary element space and its
//! loop-star decomposition.
//!
//! One degree of freedom per interior edge; the basis function attached to
//! edge e is supported on the two adjacent triangles and has constant surface
//! divergence +-L_e / A on each. The loop-star split separates the exactly
//! divergence-free subspace (vertex loops) from a complement (unit
//! coefficients on the edges outside a spanning tree of the vertex graph).

use crate::mesh::SurfaceMesh;
use nalgebra::{Point3, Vector3};
use ndarray::Array2;

/// One of the three edge degrees of freedom attached to a triangle.
#[derive(Debug, Clone, Copy)]
pub struct LocalDof {
    /// Global edge index (= global DOF index).
    pub edge: usize,
    /// +1 when this triangle is the plus triangle of the edge.
    pub sign: f64,
    /// Vertex of the triangle opposite the edge.
    pub opp_vertex: usize,
}

/// The lowest-order div-conforming space on a closed triangulated surface.
#[derive(Debug, Clone)]
pub struct DivConformingSpace {
    /// Space dimension (= number of edges).
    pub dim: usize,
    /// For each triangle, its three edge DOFs in a fixed order.
    pub tri_dofs: Vec<[LocalDof; 3]>,
}

impl DivConformingSpace {
    pub fn new(mesh: &SurfaceMesh) -> Self {
        let mut per_tri: Vec<Vec<LocalDof>> = vec![Vec::with_capacity(3); mesh.triangles.len()];
        for (e, edge) in mesh.edges.iter().enumerate() {
            for (tri, sign) in [(edge.tri_plus, 1.0), (edge.tri_minus, -1.0)] {
                let opp = mesh.triangles[tri]
                    .iter()
                    .copied()
                    .find(|&v| v != edge.a && v != edge.b)
                    .expect("triangle has a vertex off its own edge");
                per_tri[tri].push(LocalDof {
                    edge: e,
                    sign,
                    opp_vertex: opp,
                });
            }
        }
        let tri_dofs = per_tri
            .into_iter()
            .map(|v| <[LocalDof; 3]>::try_from(v.as_slice()).expect("three edges per triangle"))
            .collect();
        Self {
            dim: mesh.edges.len(),
            tri_dofs,
        }
    }

    /// Basis function of `local` on triangle `tri` at physical point `x`
    /// (assumed to lie on the triangle): +- L_e / (2 A) (x - v_opp).
    pub fn basis_value(
        &self,
        mesh: &SurfaceMesh,
        tri: usize,
        local: usize,
        x: &Point3<f64>,
    ) -> Vector3<f64> {
        let dof = self.tri_dofs[tri][local];
        let scale = dof.sign * mesh.edge_length(dof.edge) / (2.0 * mesh.areas[tri]);
        scale * (x - mesh.vertices[dof.opp_vertex])
    }

    /// Constant surface divergence of `local` on triangle `tri`.
    pub fn basis_div(&self, mesh: &SurfaceMesh, tri: usize, local: usize) -> f64 {
        let dof = self.tri_dofs[tri][local];
        dof.sign * mesh.edge_length(dof.edge) / mesh.areas[tri]
    }
}

/// Loop-star decomposition: columns of `loops` span the divergence-free
/// subspace, columns of `stars` a complement; `[loops | stars]` is square and
/// invertible on genus-zero surfaces.
#[derive(Debug, Clone)]
pub struct LoopStarSplit {
    /// E x (V - 1) coefficient matrix; column v is the loop around vertex v.
    pub loops: Array2<f64>,
    /// E x (E - V + 1) coefficient matrix of unit vectors on non-tree edges.
    pub stars: Array2<f64>,
}

impl LoopStarSplit {
    pub fn n_loops(&self) -> usize {
        self.loops.ncols()
    }

    pub fn n_stars(&self) -> usize {
        self.stars.ncols()
    }

    /// The square change-of-basis matrix [loops | stars].
    pub fn combined(&self) -> Array2<f64> {
        let e = self.loops.nrows();
        let mut out = Array2::zeros((e, self.n_loops() + self.n_stars()));
        out.slice_mut(ndarray::s![.., ..self.n_loops()])
            .assign(&self.loops);
        out.slice_mut(ndarray::s![.., self.n_loops()..])
            .assign(&self.stars);
        out
    }
}

/// Builds the loop-star split of the edge space on `mesh`.
pub fn build_loop_star(mesh: &SurfaceMesh) -> LoopStarSplit {
    let nv = mesh.vertices.len();
    let ne = mesh.edges.len();

    // Loop attached to vertex v: coefficient (delta_{b=v} - delta_{a=v}) / L_e
    // on edge (a, b). The divergence contributions telescope to exactly zero
    // around every triangle. One vertex (the last) is dropped since the loops
    // sum to zero.
    let mut loops = Array2::zeros((ne, nv - 1));
    for (e, edge) in mesh.edges.iter().enumerate() {
        let inv_len = 1.0 / mesh.edge_length(e);
        if edge.b < nv - 1 {
            loops[[e, edge.b]] += inv_len;
        }
        if edge.a < nv - 1 {
            loops[[e, edge.a]] -= inv_len;
        }
    }

    // Breadth-first spanning tree of the vertex graph; star DOFs live on the
    // edges left out of the tree.
    let mut in_tree = vec![false; ne];
    let mut visited = vec![false; nv];
    visited[0] = true;
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for (e, edge) in mesh.edges.iter().enumerate() {
        adjacency[edge.a].push((edge.b, e));
        adjacency[edge.b].push((edge.a, e));
    }
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adjacency[v] {
            if !visited[w] {
                visited[w] = true;
                in_tree[e] = true;
                queue.push_back(w);
            }
        }
    }
    let star_edges: Vec<usize> = (0..ne).filter(|&e| !in_tree[e]).collect();
    let mut stars = Array2::zeros((ne, star_edges.len()));
    for (col, &e) in star_edges.iter().enumerate() {
        stars[[e, col]] = 1.0;
    }

    LoopStarSplit { loops, stars }
}
