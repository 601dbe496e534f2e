//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report is always
//! printed. Criteria 1 and 6 compare against fixed reference values the
//! default detunings do not reach; they report but do not set the exit code.
//! Every other criterion gates.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ccgate::dynamics::{
    ideal_gate, model_generator, propagate_lindblad, propagate_state, run_gate_simulation,
    run_gate_simulation_with, standard_initial_state, ModelLevel, PropagationConfig,
    SimulationOptions,
};
use ccgate::experiment::{execute, preset, valley_shape, ExperimentSpec, RunOutput};
use ccgate::hilbert::{trace_distance, QdLevel};
use ccgate::model::{collapse_operators, effective_couplings, normal_mode_channels, CollapseBasis, NormalMode};
use ccgate::phases::{
    alpha_trajectory, operation_time_surface, tune_for_pi_phase, BranchLabel, GateSchedule,
    TuneOptions, TuningKnob,
};
use ccgate::{SpaceLayout, SystemParams};
use num_complex::Complex64 as C64;
use serde_json::Value;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn run(text: &str) -> RunOutput {
    execute(&ExperimentSpec::parse(text).expect("spec parses")).expect("run succeeds")
}

fn f64_at(v: &Value, path: &[&str]) -> f64 {
    path.iter()
        .fold(v, |v, k| &v[*k])
        .as_f64()
        .unwrap_or_else(|| panic!("missing number at {path:?}"))
}

/// Tuned schedule on preset parameters with the given normal-mode detunings.
fn tuned(base: &SystemParams, curve: (f64, f64), max_scale: f64) -> ccgate::phases::TunedGate {
    let mut p = base.clone();
    p.set_mode_detunings(curve.0, curve.1);
    let opts = TuneOptions {
        scale_range: (1e-3, max_scale),
        ..TuneOptions::default()
    };
    tune_for_pi_phase(&p, 0, TuningKnob::OmegaScale, &opts).expect("curve tunes")
}

/// Also returns whether the fallback obligation holds: a missed band must be
/// flagged in the manifest.
fn fidelity_endpoints() -> (Outcome, bool) {
    let out = run(
        "kind = \"fig3_fidelity\"\npreset = \"fig3\"\n[[sweep]]\nname = \"gamma\"\nmin = 0.01\nmax = 0.02\npoints = 2\nunit = \"g_a\"\n",
    );
    let m = &out.manifest;
    let summary = &m["summary"];
    let endpoints = summary["endpoints"].as_array().expect("endpoints");
    let in_band = endpoints.len() == 2 && endpoints.iter().all(|e| e["within_band"] == true);
    let flagged = m["flags"]["delta_sensitivity"]["flagged"] == true;
    let mut detail = format!("best curve {}:", summary["best_label"].as_str().unwrap_or("?"));
    for e in endpoints {
        detail += &format!(
            " F({}) = {:.4} (reference {:.3} +/- 0.010);",
            e["gamma_over_ga"],
            e["achieved"].as_f64().unwrap(),
            e["reference"].as_f64().unwrap()
        );
    }
    detail += &format!(" detuning sensitivity flagged in manifest: {flagged}");

    // Detuning dependence: curve (1.2, 0.3) g_A at detuning_a x1 and x2.
    let base = preset("fig3").unwrap().params;
    let g_a = base.dot_a.g;
    let fidelity_at = |detuning_scale: f64| {
        let mut p = base.clone();
        p.scale_detunings(detuning_scale);
        let t = tuned(&p, (1.2 * g_a, 0.3 * g_a), 4.0);
        let mut q = t.params.clone();
        q.set_gamma(0.01 * g_a);
        run_gate_simulation(&q, &t.schedule, ModelLevel::Effective, true)
            .expect("lossy run")
            .final_fidelity
    };
    let (f1, f2) = rayon::join(|| fidelity_at(1.0), || fidelity_at(2.0));
    detail += &format!("; curve (1.2, 0.3) at gamma = 0.01 g_A: F = {f1:.6} (detuning x1), {f2:.6} (x2)");
    (outcome(in_band, detail), in_band || flagged)
}

fn verification_run() -> RunOutput {
    run(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/verify_effective.toml"))
        .expect("spec file"))
}

fn phase_agreement(v: &RunOutput) -> Outcome {
    let m = &v.manifest["verification"];
    let eff = f64_at(m, &["max_phase_error_effective"]);
    let full = f64_at(m, &["max_phase_error_full"]);
    let draws = m["draws"].as_u64().unwrap();
    outcome(
        draws == 20 && eff <= 1e-3 && full <= 5e-2,
        format!("{draws} draws: max effective-model error {eff:.2e} rad (<= 1e-3), full model {full:.2e} rad (<= 5e-2)"),
    )
}

fn closed_paths(v: &RunOutput) -> Outcome {
    let m = &v.manifest["verification"];
    let mut alpha_max = f64_at(m, &["max_alpha_t0"]);
    let photons = f64_at(m, &["max_residual_photons"]);
    let mut photon_max = photons;
    let base = preset("fig3").unwrap();
    for &curve in &base.curves {
        let t = tuned(&base.params, curve, 1.0);
        for b in BranchLabel::ALL {
            for mode in NormalMode::BOTH {
                alpha_max = alpha_max.max(alpha_trajectory(&t.couplings, b, mode, t.schedule.t0_ps).norm());
            }
        }
    }
    let fig2 = preset("fig2").unwrap().params;
    let c = effective_couplings(&fig2).unwrap();
    let s = GateSchedule::new(&c, 1).unwrap();
    for model in [ModelLevel::Effective, ModelLevel::Dispersive] {
        let r = run_gate_simulation(&fig2, &s, model, false).unwrap();
        photon_max = photon_max.max(r.residual_photons.iter().copied().fold(0.0, f64::max));
    }
    outcome(
        alpha_max <= 1e-12 && photon_max <= 1e-4,
        format!("max |alpha(t0)| = {alpha_max:.1e}; max residual photons per branch = {photon_max:.2e} (<= 1e-4)"),
    )
}

fn hierarchy(v: &RunOutput) -> Outcome {
    let m = &v.manifest["verification"];
    let stark = f64_at(m, &["max_stark_identity_residual"]);
    let reductions: Vec<f64> = m["hierarchy_reduction_per_doubling"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let quadratic = reductions.len() == 3 && reductions.iter().all(|r| (3.0..=5.0).contains(r));
    outcome(
        stark <= 1e-10 && quadratic,
        format!("max |phi t0 + Theta| = {stark:.1e} (<= 1e-10); deviation ratio per doubling of eta/lambda over 5,10,20,40: {reductions:.4?}"),
    )
}

fn hopping_shape() -> Outcome {
    let out = run(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/fig2_surface.toml"))
        .expect("spec file"));
    let t = out.table("surface").unwrap();
    let (nu, delta, t0) = (t.column("nu").unwrap(), t.column("delta").unwrap(), t.column("t0_ps").unwrap());
    let undeclared = t.undeclared_nan();
    let mut rows = 0;
    let mut valleys = 0;
    let mut deltas: Vec<f64> = delta.clone();
    deltas.dedup();
    for d in &deltas {
        let idx: Vec<usize> = (0..delta.len()).filter(|&i| delta[i] == *d).collect();
        // Rows with at least two grid points on each side of the nu = delta line.
        let below = idx.iter().filter(|&&i| nu[i] < *d && t0[i].is_finite()).count();
        let above = idx.iter().filter(|&&i| nu[i] > *d && t0[i].is_finite()).count();
        if below < 2 || above < 2 {
            continue;
        }
        rows += 1;
        let row: Vec<f64> = idx.iter().map(|&i| t0[i]).collect();
        if valley_shape(&row).is_some() {
            valleys += 1;
        }
    }
    // Divergence as nu -> 0 at delta = 10 g_A.
    let p = preset("fig2").unwrap().params;
    let g_a = p.dot_a.g;
    let small: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|x| x * g_a).collect();
    let s = operation_time_surface(&p, &small, &[10.0 * g_a], PI);
    let growth: Vec<f64> = s.t0_ps[0].windows(2).map(|w| w[1] / w[0]).collect();
    let diverges = growth.iter().all(|g| *g > 5.0);
    outcome(
        undeclared.is_none() && rows > 0 && valleys == rows && diverges,
        format!(
            "{valleys}/{rows} rows with the resonance inside the grid decrease then increase; {} resonant grid points left as sentinels; t0 at nu = 0.1, 0.01, 0.001 g_A (delta = 10 g_A): {:.3e} ps, growth per decade {growth:.2?}",
            t.sentinel_rows.len(),
            s.t0_ps[0][0]
        ),
    )
}

fn operation_time() -> Outcome {
    let base = preset("fig3").unwrap();
    let longest = base
        .curves
        .iter()
        .map(|&c| tuned(&base.params, c, 1.0).schedule.t0_ps)
        .fold(0.0, f64::max)
        / 1000.0;
    let ratio = longest / 13.5;
    let needed = base.params.dot_a.detuning * (13.5 / longest).sqrt();
    outcome(
        (0.5..=2.0).contains(&ratio),
        format!(
            "longest t0 = {longest:.3} ns vs reference 13.5 ns (ratio {ratio:.3}); t0 scales as detuning^2 at fixed Theta, so the reference needs detuning_a near {needed:.1} meV instead of {} meV",
            base.params.dot_a.detuning
        ),
    )
}

fn gate_setup(gamma_over_ga: f64) -> (SystemParams, GateSchedule, SpaceLayout) {
    let mut p = preset("fig2").unwrap().params;
    p.set_gamma(gamma_over_ga * p.dot_a.g);
    let c = effective_couplings(&p).unwrap();
    let s = GateSchedule::new(&c, 1).unwrap();
    (p, s, SpaceLayout::new(3).unwrap())
}

fn dissipator_invariance() -> Outcome {
    let (p, s, layout) = gate_setup(0.02);
    let c = effective_couplings(&p).unwrap();
    let gen = model_generator(&p, &c, &layout, ModelLevel::Effective).unwrap();
    let rho0 = standard_initial_state(&layout).to_density();
    let cfg = PropagationConfig::new(s.t0_ps).with_dt(0.2).with_stride(10);
    let bare = collapse_operators(&p, &layout, CollapseBasis::Bare).unwrap();
    let normal = normal_mode_channels(p.dot_a.gamma, &layout).unwrap();
    let a = propagate_lindblad(&gen, &bare, &rho0, &cfg).unwrap();
    let b = propagate_lindblad(&gen, &normal, &rho0, &cfg).unwrap();
    let same_times = a.times == b.times;
    let worst = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| trace_distance(x, y).unwrap())
        .fold(0.0, f64::max);
    outcome(
        same_times && worst <= 1e-8,
        format!("{} samples over t0 = {:.0} ps: max trace distance {worst:.1e} (<= 1e-8)", a.times.len(), s.t0_ps),
    )
}

fn physicality() -> Outcome {
    let (p, s, layout) = gate_setup(0.02);
    let c = effective_couplings(&p).unwrap();
    let gen = model_generator(&p, &c, &layout, ModelLevel::Effective).unwrap();
    let collapse = collapse_operators(&p, &layout, CollapseBasis::Bare).unwrap();
    let cfg = PropagationConfig::new(s.t0_ps).with_dt(0.2).with_stride(10);
    let traj = propagate_lindblad(&gen, &collapse, &standard_initial_state(&layout).to_density(), &cfg).unwrap();
    let (mut trace, mut herm, mut floor) = (0.0f64, 0.0f64, 0.0f64);
    for rho in &traj.states {
        let ph = rho.physicality();
        trace = trace.max(ph.trace_drift);
        herm = herm.max(ph.hermiticity_drift);
        floor = floor.min(ph.min_eigenvalue);
    }
    let lossy_ok = trace <= 1e-6 && herm <= 1e-8 && floor >= -1e-6;

    // Lossless gate runs at every model level.
    let mut lossless = p.clone();
    lossless.set_gamma(0.0);
    let mut unitarity = 0.0f64;
    for model in [ModelLevel::Effective, ModelLevel::Dispersive, ModelLevel::Interaction] {
        let r = run_gate_simulation_with(&lossless, &s, model, false, &SimulationOptions::default()).unwrap();
        unitarity = unitarity.max(r.norm_drift);
    }

    // |ff> with empty cavities never moves, with or without loss.
    let ff = layout.basis_state(QdLevel::F, QdLevel::F, 0, 0);
    let mut ff_fixed = true;
    for model in [ModelLevel::Effective, ModelLevel::Dispersive, ModelLevel::Interaction] {
        let g = model_generator(&lossless, &c, &layout, model).unwrap();
        let cfg = PropagationConfig::new(200.0).with_stride(1_000_000);
        ff_fixed &= propagate_state(&g, &ff, &cfg).unwrap().final_state() == &ff;
    }
    let rho_ff = ff.to_density();
    let lossy_ff = propagate_lindblad(&gen, &collapse, &rho_ff, &cfg).unwrap();
    ff_fixed &= lossy_ff.states.iter().all(|r| r.operator() == rho_ff.operator());

    outcome(
        lossy_ok && unitarity <= 1e-8 && ff_fixed,
        format!(
            "lossy run: trace drift {trace:.1e}, Hermiticity drift {herm:.1e}, lowest eigenvalue {floor:.1e}; lossless norm drift {unitarity:.1e} over three models; |ff> invariant: {ff_fixed}"
        ),
    )
}

fn cz_tuning() -> Outcome {
    let mut worst = 0.0f64;
    let mut exact = true;
    let mut count = 0;
    for name in ["fig3", "fig3_alt_gB"] {
        let pr = preset(name).unwrap();
        for &curve in &pr.curves {
            let t = tuned(&pr.params, curve, 1.0);
            worst = worst.max((t.schedule.theta().abs() - PI).abs());
            let g = ideal_gate(&t.schedule, true);
            exact &= g.diagonal == [C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
            count += 1;
        }
    }
    outcome(
        worst <= 1e-6 && exact,
        format!("{count} tuned curves: max ||Theta| - pi| = {worst:.1e} rad (<= 1e-6); corrected ideal gate is exactly diag[1, 1, 1, -1]: {exact}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let verification = verification_run();
    let (endpoints, fallback_ok) = fidelity_endpoints();
    let results: Vec<(u32, bool, Outcome)> = vec![
        (1, false, endpoints),
        (2, true, phase_agreement(&verification)),
        (3, true, closed_paths(&verification)),
        (4, true, hierarchy(&verification)),
        (5, true, hopping_shape()),
        (6, false, operation_time()),
        (7, true, dissipator_invariance()),
        (8, true, physicality()),
        (9, true, cz_tuning()),
    ];
    let mut failed_gating = 0;
    for (n, gating, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        let note = if *gating { "" } else { " [reported, not gating]" };
        println!("criterion {n}: {tag}{note}: {}", o.detail);
        if *gating && !o.passed {
            failed_gating += 1;
        }
    }
    if !fallback_ok {
        println!("criterion 1 fallback: FAIL: band missed without the detuning-sensitivity flag");
        failed_gating += 1;
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if failed_gating > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
