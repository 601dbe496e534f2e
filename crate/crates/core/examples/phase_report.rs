//! Effective couplings, loop-closing time and gate phases for the fig2
//! preset, with the dispersive Stark-rate cross-check.
//!
//! `cargo run --release --example phase_report`

use ccgate::experiment::preset;
use ccgate::model::{effective_couplings, Dot, NormalMode, ValidityThresholds};
use ccgate::phases::{gate_time, max_displacement, GateSchedule, DEFAULT_COMMENSURATION_TOL, DEFAULT_MAX_K};

fn main() -> ccgate::Result<()> {
    let p = preset("fig2")?.params;
    let validity = p.check_validity(&ValidityThresholds::default());
    for f in validity.failures() {
        println!("validity: {:?} {:?} fails (value {:.3})", f.dot, f.condition, f.value);
    }

    let c = effective_couplings(&p)?;
    for dot in Dot::BOTH {
        for mode in NormalMode::BOTH {
            println!("lambda[{dot:?}][{mode:?}] = {:.6e} meV", c.lambda(dot, mode));
        }
    }
    println!("eta = {:?} meV, dispersive ratio {:.2}", c.eta, c.dispersive_ratio());

    let gt = gate_time(&c, DEFAULT_MAX_K, DEFAULT_COMMENSURATION_TOL)?;
    let s = GateSchedule::from_gate_time(&c, &gt, 1)?;
    println!("t0 = {:.3} ps with loop counts {:?}", s.t0_ps, s.k);
    println!(
        "phi_a = {:.6} rad, phi_b = {:.6} rad, theta = {:.6} rad",
        s.phases.phi_a, s.phases.phi_b, s.phases.theta
    );
    println!(
        "-rate_cz * t0 = {:.6} rad (matches theta to {:.1e})",
        -s.rates.rate_cz * s.t0_ps,
        (-s.rates.rate_cz * s.t0_ps - s.phases.theta).abs()
    );
    println!("largest displacement per mode: {:?}", max_displacement(&c));
    Ok(())
}
