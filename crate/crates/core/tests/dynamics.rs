//! Propagation-level invariants on the preset parameter sets.

use ccgate::dynamics::{excited_population_bound, run_gate_simulation, ModelLevel};
use ccgate::experiment::{execute, preset, ExperimentSpec};
use ccgate::model::effective_couplings;
use ccgate::phases::GateSchedule;

#[test]
fn excited_population_stays_below_the_elimination_bound() {
    let p = preset("fig2").unwrap().params;
    let c = effective_couplings(&p).unwrap();
    let s = GateSchedule::new(&c, 1).unwrap();
    let r = run_gate_simulation(&p, &s, ModelLevel::Interaction, false).unwrap();
    let bound = excited_population_bound(&p);
    for d in 0..2 {
        assert!(
            r.max_excited_population[d] <= bound[d],
            "dot {d}: {} > {}",
            r.max_excited_population[d],
            bound[d]
        );
    }
    assert!(r.residual_photons.iter().all(|&n| n <= 1e-4), "{:?}", r.residual_photons);
    assert!(r.norm_drift < 1e-8);
}

#[test]
fn fidelity_is_converged_in_the_fock_cutoff() {
    let spec = ExperimentSpec::parse(
        "kind = \"convergence\"\npreset = \"fig3\"\n[options]\ngamma_over_ga = [0.01]\n",
    )
    .unwrap();
    let out = execute(&spec).unwrap();
    let t = out.table("convergence").unwrap();
    let deltas = t.column("delta_n_max_plus_1").unwrap();
    assert_eq!(deltas.len(), 3);
    for (i, d) in deltas.iter().enumerate() {
        assert!(*d < 1e-4, "curve {i}: |dF| = {d:e}");
    }
}
