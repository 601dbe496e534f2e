//! Low-level building blocks: a driven, leaky cavity mode propagated with
//! the master-equation integrator and compared against the steady-state
//! coherent amplitude.
//!
//! `cargo run --release --example lindblad_basics`

use ccgate::dynamics::{propagate_lindblad, PropagationConfig};
use ccgate::generator::{Coefficient, Generator};
use ccgate::hilbert::{coherent_state, fidelity_trace, fock_annihilation, StateVector};
use ccgate::model::Collapse;
use num_complex::Complex64 as C64;

fn main() -> ccgate::Result<()> {
    let n_max = 12;
    let a = fock_annihilation(n_max)?;
    let drive = C64::new(0.1, 0.0);
    let gamma = 0.5;

    // H = drive·a + drive*·a†, with unit rate scale.
    let mut h = Generator::new(n_max + 1, 1.0);
    h.push_with_conjugate(Coefficient::constant(drive), a.clone())?;
    let collapse = [Collapse { operator: a, rate: gamma }];

    let rho0 = StateVector::vacuum(n_max).to_density();
    let cfg = PropagationConfig::new(30.0).with_dt(0.005).with_stride(1000);
    let tr = propagate_lindblad(&h, &collapse, &rho0, &cfg)?;

    // Steady state: coherent amplitude -2i·drive*/γ.
    let steady = coherent_state(C64::new(0.0, -2.0) * drive.conj() / gamma, n_max).to_density();
    for (t, rho) in tr.times.iter().zip(&tr.states) {
        println!(
            "t = {t:>5.1}: overlap with steady state {:.6}, purity {:.6}",
            fidelity_trace(rho, &steady)?,
            rho.purity()
        );
    }
    println!("drift: {:?}", tr.drift);
    Ok(())
}
