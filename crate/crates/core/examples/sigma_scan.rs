//! Scans the smallest singular value of the boundary system L(k) over a
//! real wavenumber window on a coarse sphere and reports the dips, next to
//! the independent sphere reference roots.
//!
//! Run with: cargo run --example sigma_scan

use num_complex::Complex64;
use tebem::assembly::{assemble_l, QuadSettings};
use tebem::kernel::Wavenumbers;
use tebem::mesh::make_icosphere;
use tebem::mie::{find_roots, Family};
use tebem::solver::sigma_scan;
use tebem::space::DivConformingSpace;

fn main() {
    let n = 4.0;
    let mesh = make_icosphere(1.0, 1);
    let space = DivConformingSpace::new(&mesh);
    let quad = QuadSettings::default();
    println!(
        "scanning L(k) on a level-1 sphere ({} edges, {} unknowns), n = {n}",
        mesh.num_edges(),
        2 * mesh.num_edges()
    );

    let factory = |k: Complex64| {
        let w = Wavenumbers::new(k, n)?;
        Ok::<_, tebem::kernel::KernelError>(assemble_l(&mesh, &space, w, &quad).unwrap().full())
    };
    let result = sigma_scan(factory, 1.5, 3.0, 40, 0.1);
    println!("median sigma_min = {:.4e}", result.median_sigma);
    for p in result.points.iter().step_by(4) {
        println!("  k = {:.3}  sigma_min = {:.4e}", p.k, p.sigma_min);
    }
    println!("\nrefined dips:");
    for (k, s) in &result.dips {
        println!("  k = {k:.5}  sigma_min = {s:.4e}");
    }

    println!("\nreference roots in the window:");
    for family in [Family::Te, Family::Tm] {
        for l in 1..=4 {
            for root in find_roots(family, l, n, 1.0, 1.5, 3.0).unwrap().roots {
                println!("  k = {:.5}  [{family:?} l={l}]", root.k);
            }
        }
    }
}
