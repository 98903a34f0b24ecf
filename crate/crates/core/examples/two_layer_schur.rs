//! Assembles the two-layer Schur-complement system (outer boundary plus an
//! interior auxiliary sphere) and compares its sigma_min profile with the
//! single-surface system when the two shells share one contrast.
//!
//! Run with: cargo run --example two_layer_schur

use num_complex::Complex64;
use tebem::assembly::{assemble_l, assemble_schur, QuadSettings};
use tebem::kernel::Wavenumbers;
use tebem::linalg::sigma_min;
use tebem::mesh::{make_icosphere, make_scene};
use tebem::space::DivConformingSpace;

fn main() {
    let n = 4.0;
    let level = 0;
    let outer = make_icosphere(1.0, level);
    let inner = make_icosphere(0.5, level);
    let scene = make_scene(outer.clone(), inner).expect("nested spheres");
    let space = DivConformingSpace::new(&outer);
    let quad = QuadSettings::default();
    println!(
        "outer: {} edges, inner: {} edges, gap = {:.4}\n",
        scene.outer.num_edges(),
        scene.inner.num_edges(),
        scene.gap
    );
    println!("   k      single-surface    two-layer (n1 = n2)   L21 cond");
    for i in 0..8 {
        let k = Complex64::new(1.2 + 0.2 * i as f64, 0.0);
        let w = Wavenumbers::new(k, n).unwrap();
        let single = sigma_min(&assemble_l(&outer, &space, w, &quad).unwrap().full()).unwrap();
        let schur = assemble_schur(&scene, k, n, n, &quad).unwrap();
        let two = sigma_min(&schur.matrix).unwrap();
        println!(
            "  {:.2}     {single:.6e}      {two:.6e}      {:.3e}",
            k.re, schur.l21_condition
        );
    }
    println!("\nwith equal contrasts the two systems share their kernels, so");
    println!("their sigma_min dips line up even on this coarse mesh.");
}
