//! Randomized invariants of the operator algebra, the couplings, the phase
//! formulas and the propagators.

use std::f64::consts::{PI, TAU};

use ccgate::dynamics::{
    model_generator, propagate_lindblad, propagate_state, standard_initial_state, ModelLevel,
    PropagationConfig,
};
use ccgate::hilbert::{
    embed, fidelity_trace, fock_annihilation, fock_creation, qd_projector, trace_distance, QdLevel,
    Site,
};
use ccgate::model::{
    collapse_operators, effective_couplings, hamiltonian_effective_1, hamiltonian_effective_2,
    hamiltonian_interaction, normal_mode_channels, CollapseBasis, Dot, DotParams, NormalMode,
    SystemParams, HBAR_MEV_PS,
};
use ccgate::phases::{
    accumulated_phases, alpha_trajectory, gate_phases, gate_time, second_model_phases,
    theta_simplified, BranchLabel, GateSchedule,
};
use ccgate::{ComplexOperator, SpaceLayout, StateVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn operator(dim: usize) -> impl Strategy<Value = ComplexOperator> {
    prop::collection::vec(c64(), dim * dim)
        .prop_map(move |v| ComplexOperator::from_fn(dim, |i, j| v[i * dim + j]))
}

fn hermitian(dim: usize) -> impl Strategy<Value = ComplexOperator> {
    operator(dim).prop_map(|m| {
        let h = &m + &m.dagger();
        h.scale(C64::new(0.5, 0.0))
    })
}

fn state(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec(c64(), dim).prop_filter_map("nonzero", |v| {
        let mut s = StateVector::from_amplitudes(v).ok()?;
        (s.normalize() > 1e-3).then_some(s)
    })
}

fn dot_params() -> impl Strategy<Value = DotParams> {
    (0.02..0.2f64, 0.2..2.0f64, 0.0..TAU, 5.0..20.0f64, prop::bool::ANY).prop_map(
        |(g, om, phase, det, neg)| {
            let omega = C64::from_polar(om, phase);
            let detuning = if neg { -det } else { det };
            DotParams {
                g,
                omega,
                omega_prime: omega,
                detuning,
                detuning_prime: detuning,
                gamma: 0.0,
            }
        },
    )
}

/// Parameters away from resonance; validity is not enforced.
fn params() -> impl Strategy<Value = SystemParams> {
    (dot_params(), dot_params(), 0.05..0.5f64, 0.01..0.3f64)
        .prop_filter("off resonance", |(_, _, d, n)| (d - n).abs() > 0.01)
        .prop_map(|(a, b, delta, nu)| SystemParams {
            dot_a: a,
            dot_b: b,
            delta,
            nu,
            n_max: 2,
        })
}

/// Parameters whose mode detunings are in a small integer ratio.
fn commensurate_params() -> impl Strategy<Value = SystemParams> {
    (dot_params(), dot_params(), 0.02..0.1f64, 1u64..4, 1u64..4, prop::bool::ANY).prop_map(
        |(a, b, slow, p, q, neg)| {
            let fast = slow * (p + q) as f64 / q as f64;
            let (e1, e2) = if neg { (-slow, -fast) } else { (fast, slow) };
            let mut s = SystemParams {
                dot_a: a,
                dot_b: b,
                delta: 0.0,
                nu: 0.0,
                n_max: 2,
            };
            s.set_mode_detunings(e1, e2);
            s
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_preserves_spectrum(h in hermitian(3), site in 0usize..2) {
        let layout = SpaceLayout::new(2).unwrap();
        let site = [Site::QdA, Site::QdB][site];
        let big = embed(&h, site, &layout).unwrap();
        let mut small = h.hermitian_eigenvalues();
        small.sort_by(f64::total_cmp);
        let mut ev = big.hermitian_eigenvalues();
        ev.sort_by(f64::total_cmp);
        let mult = layout.dim() / 3;
        prop_assert_eq!(ev.len(), 3 * mult);
        for (i, e) in ev.iter().enumerate() {
            prop_assert!((e - small[i / mult]).abs() < 1e-10);
        }
    }

    #[test]
    fn dagger_is_an_involution_and_reverses_products(x in operator(4), y in operator(4)) {
        prop_assert_eq!(x.dagger().dagger(), x.clone());
        let lhs = (&x * &y).dagger();
        let rhs = &y.dagger() * &x.dagger();
        prop_assert!((&lhs - &rhs).max_abs() < 1e-14);
    }

    #[test]
    fn fidelity_is_symmetric(a in state(5), b in state(5)) {
        let (ra, rb) = (a.to_density(), b.to_density());
        let f = fidelity_trace(&ra, &rb).unwrap();
        prop_assert!((f - fidelity_trace(&rb, &ra).unwrap()).abs() < 1e-14);
        prop_assert!((fidelity_trace(&ra, &ra).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((f - a.inner(&b).unwrap().norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn hamiltonians_are_hermitian(p in params(), t in 0.0..500.0f64) {
        let layout = SpaceLayout::new(2).unwrap();
        let c = effective_couplings(&p).unwrap();
        let scale = |h: &ComplexOperator| h.max_abs().max(1.0);
        let h3 = hamiltonian_interaction(&p, t, &layout).unwrap();
        prop_assert!(h3.hermiticity_error() < 1e-12 * scale(&h3));
        let h4 = hamiltonian_effective_1(&c, t, &layout).unwrap();
        prop_assert!(h4.hermiticity_error() < 1e-12 * scale(&h4));
        let h17 = hamiltonian_effective_2(&c, &layout).unwrap();
        prop_assert!(h17.hermiticity_error() < 1e-12 * scale(&h17));
    }

    #[test]
    fn couplings_scale_linearly_in_g_and_drive(p in params(), s in 0.1..5.0f64, which in 0usize..4) {
        let c0 = effective_couplings(&p).unwrap();
        let mut q = p.clone();
        let dot = if which % 2 == 0 { Dot::A } else { Dot::B };
        if which < 2 {
            q.dot_mut(dot).g *= s;
        } else {
            let d = q.dot_mut(dot);
            d.omega *= s;
            d.omega_prime *= s;
        }
        let c1 = effective_couplings(&q).unwrap();
        for d in Dot::BOTH {
            let factor = if d == dot { s } else { 1.0 };
            for m in NormalMode::BOTH {
                let want = c0.lambda(d, m) * factor;
                prop_assert!((c1.lambda(d, m) - want).norm() <= 1e-14 * want.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn hopping_sign_swaps_modes(p in params()) {
        let c = effective_couplings(&p).unwrap();
        let mut q = p.clone();
        q.nu = -p.nu;
        let s = effective_couplings(&q).unwrap();
        prop_assert_eq!(s.eta(NormalMode::C1), c.eta(NormalMode::C2));
        prop_assert_eq!(s.eta(NormalMode::C2), c.eta(NormalMode::C1));
        let close = |a: C64, b: C64| (a - b).norm() <= 1e-15 * a.norm().max(b.norm());
        prop_assert!(close(s.lambda(Dot::A, NormalMode::C1), c.lambda(Dot::A, NormalMode::C2)));
        prop_assert!(close(s.lambda(Dot::A, NormalMode::C2), c.lambda(Dot::A, NormalMode::C1)));
        prop_assert!(close(s.lambda(Dot::B, NormalMode::C1), -c.lambda(Dot::B, NormalMode::C2)));
        prop_assert!(close(s.lambda(Dot::B, NormalMode::C2), -c.lambda(Dot::B, NormalMode::C1)));
    }

    #[test]
    fn effective_hamiltonian_keeps_dot_labels(p in params(), t in 0.0..300.0f64) {
        let layout = SpaceLayout::new(2).unwrap();
        let c = effective_couplings(&p).unwrap();
        let h = hamiltonian_effective_1(&c, t, &layout).unwrap();
        for site in [Site::QdA, Site::QdB] {
            for level in [QdLevel::F, QdLevel::G, QdLevel::E] {
                let proj = embed(&qd_projector(level), site, &layout).unwrap();
                prop_assert!(h.commutator(&proj).unwrap().max_abs() < 1e-15);
            }
        }
    }

    #[test]
    fn paths_close_at_the_gate_time(p in commensurate_params()) {
        let c = effective_couplings(&p).unwrap();
        let gt = gate_time(&c, 64, 1e-9).unwrap();
        for b in BranchLabel::ALL {
            for m in NormalMode::BOTH {
                let a = alpha_trajectory(&c, b, m, gt.t0_ps);
                let scale = 2.0 * (c.lambda(Dot::A, m).norm() + c.lambda(Dot::B, m).norm()) / c.eta(m).abs();
                prop_assert!(a.norm() <= 1e-12 * scale.max(1e-300), "{b:?} {m:?}: {a}");
            }
        }
    }

    #[test]
    fn two_dot_branch_is_additive(p in params(), t in 0.0..2000.0f64) {
        let c = effective_couplings(&p).unwrap();
        let ph = accumulated_phases(&c, t);
        for m in NormalMode::BOTH {
            let gg = alpha_trajectory(&c, BranchLabel::GG, m, t);
            let sum = alpha_trajectory(&c, BranchLabel::FG, m, t) + alpha_trajectory(&c, BranchLabel::GF, m, t);
            prop_assert!((gg - sum).norm() <= 1e-14 * gg.norm().max(1e-12));
            let total = ph.branch(BranchLabel::GG, m);
            let parts = ph.branch(BranchLabel::FG, m) + ph.branch(BranchLabel::GF, m) + ph.theta[m.index()];
            prop_assert!((total - parts).abs() <= 1e-14 * total.abs().max(1.0));
        }
    }

    #[test]
    fn phases_match_quadrature(p in params(), t in 1.0..3000.0f64) {
        let c = effective_couplings(&p).unwrap();
        let ph = accumulated_phases(&c, t);
        let tau_end = t / HBAR_MEV_PS;
        for b in BranchLabel::ALL {
            for m in NormalMode::BOTH {
                let lam: C64 = b.active_dots().iter().map(|&d| c.lambda(d, m)).sum();
                let eta = c.eta(m);
                // α(τ) = -(λ*/η)(e^{-iητ} - 1), dα/dτ = iλ* e^{-iητ}
                let integrand = |tau: f64| {
                    let e = C64::from_polar(1.0, -eta * tau);
                    let alpha = -(lam.conj() / eta) * (e - 1.0);
                    let dalpha = C64::new(0.0, 1.0) * lam.conj() * e;
                    (alpha.conj() * dalpha).im
                };
                let n = 4000 + 2 * ((eta.abs() * tau_end / PI).ceil() as usize) * 40;
                let h = tau_end / n as f64;
                let mut acc = integrand(0.0) + integrand(tau_end);
                for i in 1..n {
                    acc += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                let numeric = acc * h / 3.0;
                prop_assert!((numeric - ph.branch(b, m)).abs() < 1e-8, "{b:?} {m:?}: {numeric} vs {}", ph.branch(b, m));
            }
        }
    }

    #[test]
    fn stark_identity_and_balanced_simplification(p in commensurate_params()) {
        let c = effective_couplings(&p).unwrap();
        let s = GateSchedule::from_gate_time(&c, &gate_time(&c, 64, 1e-9).unwrap(), 1).unwrap();
        let rates = second_model_phases(&c);
        prop_assert!((-rates.rate_cz * s.t0_ps - s.phases.theta).abs() <= 1e-10 * s.phases.theta.abs().max(1.0));

        let mut q = p.clone();
        q.dot_b.detuning = ccgate::model::balancing_detuning_b(&q).unwrap_or(q.dot_b.detuning);
        q.dot_b.detuning_prime = q.dot_b.detuning;
        let cq = effective_couplings(&q).unwrap();
        if cq.balance_mismatch() <= 1e-9 {
            let sq = GateSchedule::from_gate_time(&cq, &gate_time(&cq, 64, 1e-9).unwrap(), 1).unwrap();
            let simple = theta_simplified(&cq, sq.t0_ps, 1e-9).unwrap();
            prop_assert!((simple - sq.phases.theta).abs() <= 1e-6 * sq.phases.theta.abs().max(1e-12));
        }
    }

    #[test]
    fn phases_are_scale_invariant(p in commensurate_params(), s in 0.2..5.0f64) {
        let c = effective_couplings(&p).unwrap();
        let gt = gate_time(&c, 64, 1e-9).unwrap();
        let mut q = p.clone();
        for d in Dot::BOTH {
            let dot = q.dot_mut(d);
            dot.g *= s;
            dot.omega *= s;
            dot.omega_prime *= s;
            dot.detuning *= s;
            dot.detuning_prime *= s;
        }
        q.delta *= s;
        q.nu *= s;
        let cs = effective_couplings(&q).unwrap();
        let gs = gate_time(&cs, 64, 1e-9).unwrap();
        prop_assert_eq!(gs.k, gt.k);
        prop_assert!((gs.t0_ps * s - gt.t0_ps).abs() <= 1e-12 * gt.t0_ps);
        let (a, b) = (gate_phases(&c, gt.k), gate_phases(&cs, gs.k));
        prop_assert!((a.theta - b.theta).abs() <= 1e-12 * a.theta.abs().max(1e-12));
        prop_assert!((a.phi_a - b.phi_a).abs() <= 1e-12 * a.phi_a.abs().max(1e-12));
    }
}

#[test]
fn truncated_commutator_is_identity_below_the_top_level() {
    for n_max in [1, 2, 5, 9] {
        let a = fock_annihilation(n_max).unwrap();
        let ad = fock_creation(n_max).unwrap();
        let comm = a.commutator(&ad).unwrap();
        for i in 0..n_max {
            for j in 0..=n_max {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((comm.get(i, j) - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
        assert!((comm.get(n_max, n_max) + n_max as f64).norm() < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lossless_propagation_is_unitary(p in commensurate_params(), level in 0usize..3) {
        let model = [ModelLevel::Effective, ModelLevel::Dispersive, ModelLevel::Interaction][level];
        let layout = SpaceLayout::new(2).unwrap();
        let c = effective_couplings(&p).unwrap();
        let g = model_generator(&p, &c, &layout, model).unwrap();
        let t = 40.0;
        let mut cfg = PropagationConfig::new(t).with_stride(1_000_000);
        cfg.phase_guard = 0.05;
        for psi0 in [
            layout.basis_state(QdLevel::G, QdLevel::G, 0, 0),
            layout.basis_state(QdLevel::F, QdLevel::G, 1, 0),
        ] {
            let tr = propagate_state(&g, &psi0, &cfg).unwrap();
            prop_assert!((tr.final_state().norm() - 1.0).abs() < 1e-8);
        }
        let ff = layout.basis_state(QdLevel::F, QdLevel::F, 0, 0);
        let tr = propagate_state(&g, &ff, &cfg).unwrap();
        prop_assert_eq!(tr.final_state(), &ff);
    }

    #[test]
    fn dissipator_is_basis_independent(p in params(), gamma in 0.001..0.05f64) {
        let layout = SpaceLayout::new(2).unwrap();
        let mut q = p.clone();
        q.set_gamma(gamma);
        let c = effective_couplings(&q).unwrap();
        let g = model_generator(&q, &c, &layout, ModelLevel::Effective).unwrap();
        let rho0 = standard_initial_state(&layout).to_density();
        let cfg = PropagationConfig::new(60.0).with_dt(0.02).with_stride(200);
        let bare = collapse_operators(&q, &layout, CollapseBasis::Bare).unwrap();
        let normal = collapse_operators(&q, &layout, CollapseBasis::Normal).unwrap();
        let modes = normal_mode_channels(gamma, &layout).unwrap();
        let a = propagate_lindblad(&g, &bare, &rho0, &cfg).unwrap();
        for other in [&normal, &modes] {
            let b = propagate_lindblad(&g, other, &rho0, &cfg).unwrap();
            prop_assert_eq!(&a.times, &b.times);
            for (x, y) in a.states.iter().zip(&b.states) {
                let d = trace_distance(x, y).unwrap();
                prop_assert!(d <= 1e-8, "{d:e}");
            }
        }
    }
}
