//! Tunes each fig3 curve to a controlled-Z gate by scaling the drives, then
//! shows the corrected logical gate.
//!
//! `cargo run --release --example tune_cz`

use ccgate::dynamics::{correction_gate, ideal_gate};
use ccgate::experiment::preset;
use ccgate::phases::{tune_for_pi_phase, BranchLabel, TuneOptions, TuningKnob};

fn main() -> ccgate::Result<()> {
    let pr = preset("fig3")?;
    let g_a = pr.params.dot_a.g;
    for &(e1, e2) in &pr.curves {
        let mut p = pr.params.clone();
        p.set_mode_detunings(e1, e2);
        let tuned = tune_for_pi_phase(&p, 0, TuningKnob::OmegaScale, &TuneOptions::default())?;
        let s = &tuned.schedule;
        println!(
            "curve ({:.1}, {:.1}) g_A: drive scale {:.4}, {} loops, t0 = {:.3} ns, theta = {:.9}",
            e1 / g_a,
            e2 / g_a,
            tuned.scale,
            s.loops,
            s.t0_ps / 1000.0,
            s.theta()
        );
        let fix = correction_gate(s);
        let gate = ideal_gate(s, true);
        for b in BranchLabel::ALL {
            println!("  {}: correction {:+.4}, gate {:+.3}", b.name(), fix.entry(b), gate.entry(b));
        }
    }
    Ok(())
}
