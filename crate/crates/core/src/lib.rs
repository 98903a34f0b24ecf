//! Boundary-element solver for the Maxwell interior transmission eigenvalue
//! problem.
//!
//! The solver assembles the boundary-integral operator family `L(k)` built
//! from weighted differences of the electric- and magnetic-field boundary
//! operators on a closed triangulated surface, and locates transmission
//! eigenvalues as the wavenumbers where the discretized system becomes
//! singular. Candidates are screened with the far-field criterion and, on
//! spheres, validated against an independent separation-of-variables oracle.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`] — closed oriented triangle surfaces, generators and readers
//! * [`quadrature`] — triangle rules and regularized rules for singular pairs
//! * [`kernel`] — Helmholtz fundamental solution and difference kernels
//! * [`space`] — div-conforming edge (RWG) space and the loop-star split
//! * [`assembly`] — dense Galerkin blocks and the composite systems
//! * [`fields`] — off-surface potentials and far-field patterns
//! * [`mie`] — separation-of-variables reference for spheres
//! * [`solver`] — singular-value scans, contour eigensolver, filtering
//! * [`config`], [`runner`], [`cache`] — batch front end support

pub mod assembly;
pub mod cache;
pub mod config;
pub mod fields;
pub mod kernel;
pub mod linalg;
pub mod mesh;
pub mod mie;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod space;

pub use kernel::Wavenumbers;
pub use mesh::{MultiSurfaceScene, SurfaceMesh};
pub use space::{DivConformingSpace, LoopStarSplit};
