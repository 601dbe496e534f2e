//! Propagates the three model levels for one gate and compares branch
//! phases with the closed forms; then shows how the effective and
//! dispersive models converge as the mode detuning grows relative to the
//! coupling.
//!
//! `cargo run --release --example compare_models`

use ccgate::dynamics::{compare_models, run_gate_simulation, ModelLevel};
use ccgate::experiment::preset;
use ccgate::model::effective_couplings;
use ccgate::phases::GateSchedule;

fn main() -> ccgate::Result<()> {
    let p = preset("fig2")?.params;
    let c = effective_couplings(&p)?;
    let s = GateSchedule::new(&c, 1)?;
    println!("t0 = {:.2} ps, predicted phases {:?}", s.t0_ps, s.phases);
    for model in [ModelLevel::Effective, ModelLevel::Dispersive, ModelLevel::Interaction] {
        let r = run_gate_simulation(&p, &s, model, false)?;
        println!(
            "{:>12}: phase errors {:?}, residual photons {:.1e}, {} steps",
            model.name(),
            r.phase_errors.map(|e| format!("{e:+.2e}")),
            r.residual_photons.iter().copied().fold(0.0, f64::max),
            r.steps
        );
    }

    println!("eta/lambda  max phase deviation  max infidelity");
    for ratio in [5.0, 10.0, 20.0, 40.0] {
        let mut q = p.clone();
        q.scale_drives(c.dispersive_ratio() / ratio);
        let cq = effective_couplings(&q)?;
        let sq = GateSchedule::new(&cq, 1)?;
        let d = compare_models(&q, &sq, (ModelLevel::Effective, ModelLevel::Dispersive))?;
        println!("{ratio:>10}  {:>19.3e}  {:>14.3e}", d.max_phase_deviation, d.max_infidelity);
    }
    Ok(())
}
