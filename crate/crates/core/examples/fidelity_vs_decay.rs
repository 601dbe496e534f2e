//! Gate fidelity under cavity loss for one fig3 curve tuned to a
//! controlled-Z gate. Each lossy point is a density-matrix run of a few
//! seconds in release mode.
//!
//! `cargo run --release --example fidelity_vs_decay`

use ccgate::dynamics::{run_gate_simulation, ModelLevel};
use ccgate::experiment::preset;
use ccgate::phases::{tune_for_pi_phase, TuneOptions, TuningKnob};

fn main() -> ccgate::Result<()> {
    let pr = preset("fig3")?;
    let g_a = pr.params.dot_a.g;
    let mut p = pr.params.clone();
    p.set_mode_detunings(1.2 * g_a, 0.3 * g_a);
    let tuned = tune_for_pi_phase(&p, 0, TuningKnob::OmegaScale, &TuneOptions::default())?;
    println!("t0 = {:.3} ns over {} loops", tuned.schedule.t0_ps / 1000.0, tuned.schedule.loops);

    for gamma in [0.0, 0.005, 0.01] {
        let mut q = tuned.params.clone();
        q.set_gamma(gamma * g_a);
        let r = run_gate_simulation(&q, &tuned.schedule, ModelLevel::Effective, gamma > 0.0)?;
        println!(
            "gamma = {gamma:.3} g_A: F = {:.4}, worst basis input {:.4}, trace drift {:.1e}",
            r.final_fidelity, r.worst_basis_fidelity, r.drift.trace_drift
        );
    }
    Ok(())
}
