//! Locates the lowest sphere transmission eigenvalue with Beyn's
//! contour-integral method and verifies it against the reference root.
//!
//! Run with: cargo run --example beyn_contour

use num_complex::Complex64;
use tebem::assembly::{assemble_l, QuadSettings};
use tebem::kernel::Wavenumbers;
use tebem::mesh::make_icosphere;
use tebem::mie::{find_roots, Family};
use tebem::solver::{beyn_solve, ContourSpec};
use tebem::space::DivConformingSpace;

fn main() {
    let n = 4.0;
    let mesh = make_icosphere(1.0, 1);
    let space = DivConformingSpace::new(&mesh);
    let quad = QuadSettings::default();

    // Independent reference: lowest root over both families.
    let mut reference = f64::INFINITY;
    for family in [Family::Te, Family::Tm] {
        for l in 1..=4 {
            for root in find_roots(family, l, n, 1.0, 1.0, 4.0).unwrap().roots {
                reference = reference.min(root.k);
            }
        }
    }
    println!("lowest reference root: k = {reference:.6}");

    let contour = ContourSpec {
        center: Complex64::new(reference, 0.0),
        radius: 0.2,
        nodes: 32,
        probes: 6,
        rank_tol: 1e-6,
    };
    let factory = |k: Complex64| {
        let w = Wavenumbers::new(k, n)?;
        Ok::<_, tebem::kernel::KernelError>(assemble_l(&mesh, &space, w, &quad).unwrap().full())
    };
    let candidates = beyn_solve(factory, &contour, 1e-2).expect("contour solve");
    for c in &candidates {
        println!(
            "beyn: k = {:.6} + {:.2e}i, sigma_min = {:.3e}, rel. error vs reference = {:.3e}",
            c.k.re,
            c.k.im,
            c.sigma_min,
            (c.k.re - reference).abs() / reference
        );
    }
    if candidates.is_empty() {
        println!("no eigenvalue found inside the contour");
    }
}
