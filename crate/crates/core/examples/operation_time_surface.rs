//! Operation time for a pi conditional phase over the hopping/offset plane,
//! printed as a coarse table in ns.
//!
//! `cargo run --release --example operation_time_surface`

use std::f64::consts::PI;

use ccgate::experiment::preset;
use ccgate::phases::operation_time_surface;

fn main() -> ccgate::Result<()> {
    let p = preset("fig2")?.params;
    let g_a = p.dot_a.g;
    let grid: Vec<f64> = (1..=10).map(|i| 2.5 * i as f64 * g_a).collect();
    let surface = operation_time_surface(&p, &grid, &grid, PI);

    print!("{:>10}", "delta\\nu");
    for nu in &grid {
        print!("{:>9.1}", nu / g_a);
    }
    println!();
    for (i, delta) in grid.iter().enumerate() {
        print!("{:>10.1}", delta / g_a);
        for j in 0..grid.len() {
            let t0 = surface.at(i, j);
            if t0.is_nan() {
                print!("{:>9}", "res");
            } else {
                print!("{:>9.2}", t0 / 1000.0);
            }
        }
        println!();
    }
    println!("{} resonant grid points (delta = nu)", surface.resonant.len());
    Ok(())
}
