//! Scratch diagnostic: windowed scan + filter at level 2, n = 4.
use ndarray::Array2;
use num_complex::Complex64;
use std::path::PathBuf;
use tebem::assembly::{assemble_diff_blocks, assemble_l_from_parts, QuadSettings};
use tebem::cache::assemble_single_k_cached;
use tebem::fields::sphere_directions;
use tebem::kernel::Wavenumbers;
use tebem::mesh::make_icosphere;
use tebem::solver::{candidate_at, filter_candidate, random_farfield_baseline, sigma_scan};
use tebem::space::DivConformingSpace;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let a: f64 = args[1].parse().unwrap();
    let b: f64 = args[2].parse().unwrap();
    let m: usize = args[3].parse().unwrap();
    let quad = QuadSettings::default();
    let mesh = make_icosphere(1.0, 2);
    let space = DivConformingSpace::new(&mesh);
    let cache = PathBuf::from("target/acceptance-cache");
    let factory = |k: Complex64| -> Result<Array2<Complex64>, String> {
        let w = Wavenumbers::new(k, 4.0).map_err(|e| e.to_string())?;
        let single = assemble_single_k_cached(&cache, &mesh, &space, w.k1, &quad)
            .map_err(|e| e.to_string())?;
        let diff = assemble_diff_blocks(&mesh, &space, w, &quad).map_err(|e| e.to_string())?;
        Ok(assemble_l_from_parts(&single, &diff).full())
    };
    let res = sigma_scan(&factory, a, b, m, 0.3);
    println!("median {:.3e}, failures {}", res.median_sigma, res.failures.len());
    let dirs = sphere_directions(26);
    for &(k, s) in &res.dips {
        let kc = Complex64::new(k, 0.0);
        let cand = candidate_at(&factory, kc).unwrap();
        let baseline = random_farfield_baseline(&mesh, &space, kc, &dirs, 3);
        let cand = filter_candidate(cand, &mesh, &space, &dirs, 0.01 * baseline).unwrap();
        println!(
            "dip k={k:.6} sigma={s:.3e} ff={:.3e} base={baseline:.3e} accepted={}",
            cand.farfield_residual.unwrap(),
            cand.accepted
        );
        use std::io::Write;
        std::io::stdout().flush().ok();
    }
}
