//! Builds icospheres at a few subdivision levels and prints their topology
//! and geometry summaries.
//!
//! Run with: cargo run --example mesh_info

use tebem::mesh::make_icosphere;

fn main() {
    for level in 0..=3 {
        let mesh = make_icosphere(1.0, level);
        println!(
            "level {level}: V={:3} E={:4} F={:4} genus={} area={:.6} volume={:.6} h_max={:.4}",
            mesh.num_vertices(),
            mesh.num_edges(),
            mesh.num_triangles(),
            mesh.genus(),
            mesh.total_area(),
            mesh.signed_volume(),
            mesh.max_edge_length(),
        );
    }
    println!("\n(sphere reference: area = 4π ≈ 12.566, volume = 4π/3 ≈ 4.189)");
}
