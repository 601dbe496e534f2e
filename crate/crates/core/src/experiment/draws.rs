//! Seeded random parameter sets inside the regime where both effective
//! models hold.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::model::{DotParams, SystemParams, ValidityThresholds};

/// Drive strength of dot A in units of its coupling.
pub const DRAW_DRIVE_RATIO: f64 = 10.0;
/// `|Δ_j| / |Ω_j|` for every draw, so dot A sits at `Δ_A = 100 g_A`.
pub const DRAW_DETUNING_RATIO: f64 = 10.0;

fn dot(g: f64, omega_abs: f64, phase: f64, detuning_sign: f64) -> DotParams {
    let omega = C64::from_polar(omega_abs, phase);
    let detuning = detuning_sign * DRAW_DETUNING_RATIO * omega.norm();
    DotParams {
        g,
        omega,
        omega_prime: omega,
        detuning,
        detuning_prime: detuning,
        gamma: 0.0,
    }
}

/// One draw: `g_A ∈ [0.05, 0.15]` meV, `g_B/g_A ∈ [0.5, 1]`,
/// `Ω_A = 10 g_A`, `Ω_B = Ω_A g_A/g_B`, random drive phases, opposite-sign
/// laser detunings of `10|Ω_j|`, and normal-mode detunings in the ratio
/// `k₁:k₂` with `k₂ ∈ {1, 2}`, the slower one in `[0.4, 0.8] g_A`.
pub fn random_params(rng: &mut impl Rng) -> SystemParams {
    let g_a = rng.random_range(0.05..=0.15);
    let g_b = g_a * rng.random_range(0.5..=1.0);
    let omega_a = DRAW_DRIVE_RATIO * g_a;
    let omega_b = omega_a * g_a / g_b;
    let sign_a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let phase_a = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_b = rng.random_range(0.0..std::f64::consts::TAU);
    let k2: u32 = rng.random_range(1..=2);
    let k1: u32 = rng.random_range(k2 + 1..=4 * k2);
    let slow = g_a * rng.random_range(0.4..=0.8);
    let fast = slow * k1 as f64 / k2 as f64;
    // ν = (η₁ - η₂)/2 ≥ 0 puts the faster mode first for positive detunings
    // and second for negative ones.
    let (eta1, eta2) = if rng.random_bool(0.5) { (fast, slow) } else { (-slow, -fast) };
    let mut p = SystemParams {
        dot_a: dot(g_a, omega_a, phase_a, sign_a),
        dot_b: dot(g_b, omega_b, phase_b, -sign_a),
        delta: 0.0,
        nu: 0.0,
        n_max: 4,
    };
    p.set_mode_detunings(eta1, eta2);
    debug_assert!(p.check_validity(&ValidityThresholds::default()).all_passed());
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_pass_validity_and_repeat() {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_params(&mut a);
            assert!(p.check_validity(&ValidityThresholds::default()).all_passed());
            assert!((p.dot_a.detuning.abs() - 100.0 * p.dot_a.g).abs() < 1e-12);
            assert_eq!(p, random_params(&mut b));
        }
    }
}
