//! Computes the sphere transmission-eigenvalue reference roots from the
//! TE/TM matching determinants and prints them per multipole order.
//!
//! Run with: cargo run --example mie_roots

use tebem::mie::{find_roots, Family};

fn main() {
    let n = 4.0;
    let radius = 1.0;
    println!("unit sphere, contrast n = {n}, k in (0.5, 5):\n");
    let mut all: Vec<(f64, &str, usize)> = Vec::new();
    for family in [Family::Te, Family::Tm] {
        let tag = match family {
            Family::Te => "TE",
            Family::Tm => "TM",
        };
        for l in 1..=6 {
            let table = find_roots(family, l, n, radius, 0.5, 5.0).expect("valid range");
            for root in &table.roots {
                let marker = if root.grazing { " (grazing)" } else { "" };
                println!("{tag} l={l}: k = {:.6}{marker}", root.k);
                all.push((root.k, tag, l));
            }
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("\nsorted union ({} roots):", all.len());
    for (k, tag, l) in &all {
        println!("  {k:.6}  [{tag} l={l}]");
    }
}
