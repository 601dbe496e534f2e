//! Closed-form phase bookkeeping for the first and second effective models:
//! phase-space trajectories, accumulated geometric phases, commensurate gate
//! times, gate phases, Stark-shift rates and the controlled-π tuner.
//!
//! Times are in ps, energies in meV; `τ = t/ħ` is used internally.
//!
//! Branch labels are physical: `FG` means dot A in `|f⟩` and dot B in `|g⟩`,
//! so its evolution is driven by dot B's couplings only. Phases are named by
//! the dot whose couplings generate them.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::QdLevel;
use crate::model::{
    effective_couplings, Dot, EffectiveCouplings, NormalMode, SystemParams, HBAR_MEV_PS,
};

pub const DEFAULT_MAX_K: u64 = 512;
pub const DEFAULT_COMMENSURATION_TOL: f64 = 1e-9;
/// Relative mismatch accepted by [`theta_simplified`].
pub const DEFAULT_BALANCE_TOL: f64 = 1e-6;
pub const PI_TUNING_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BranchLabel {
    FF,
    FG,
    GF,
    GG,
}

impl BranchLabel {
    pub const ALL: [BranchLabel; 4] = [
        BranchLabel::FF,
        BranchLabel::FG,
        BranchLabel::GF,
        BranchLabel::GG,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// `(dot A level, dot B level)`.
    pub fn levels(self) -> (QdLevel, QdLevel) {
        match self {
            BranchLabel::FF => (QdLevel::F, QdLevel::F),
            BranchLabel::FG => (QdLevel::F, QdLevel::G),
            BranchLabel::GF => (QdLevel::G, QdLevel::F),
            BranchLabel::GG => (QdLevel::G, QdLevel::G),
        }
    }

    /// Dots sitting in `|g⟩`, hence coupled to the cavities.
    pub fn active_dots(self) -> &'static [Dot] {
        match self {
            BranchLabel::FF => &[],
            BranchLabel::FG => &[Dot::B],
            BranchLabel::GF => &[Dot::A],
            BranchLabel::GG => &[Dot::A, Dot::B],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchLabel::FF => "ff",
            BranchLabel::FG => "fg",
            BranchLabel::GF => "gf",
            BranchLabel::GG => "gg",
        }
    }
}

fn tau(t_ps: f64) -> f64 {
    t_ps / HBAR_MEV_PS
}

/// `-(λ*/η)(e^{-iητ} - 1)` for one dot.
fn single_alpha(lambda: C64, eta: f64, t_ps: f64) -> C64 {
    let phase = eta * tau(t_ps);
    -(lambda.conj() / eta) * (C64::from_polar(1.0, -phase) - 1.0)
}

/// Coherent amplitude of normal mode `mode` in branch `branch` at time `t_ps`
/// when the cavities start in vacuum. Zero for `FF`.
pub fn alpha_trajectory(
    c: &EffectiveCouplings,
    branch: BranchLabel,
    mode: NormalMode,
    t_ps: f64,
) -> C64 {
    branch
        .active_dots()
        .iter()
        .map(|&d| single_alpha(c.lambda(d, mode), c.eta(mode), t_ps))
        .sum()
}

/// Largest `|α_gg^m|` along the path: `2|λ_{A,m} + λ_{B,m}| / |η_m|`.
pub fn max_displacement(c: &EffectiveCouplings) -> [f64; 2] {
    NormalMode::BOTH.map(|m| {
        2.0 * (c.lambda(Dot::A, m) + c.lambda(Dot::B, m)).norm() / c.eta(m).abs()
    })
}

/// Per-mode phases accumulated up to some time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccumulatedPhases {
    /// Driven by dot A (branch `GF`).
    pub phi_a: [f64; 2],
    /// Driven by dot B (branch `FG`).
    pub phi_b: [f64; 2],
    /// Cross term present only in `GG`.
    pub theta: [f64; 2],
}

impl AccumulatedPhases {
    pub fn branch(&self, branch: BranchLabel, mode: NormalMode) -> f64 {
        let m = mode.index();
        match branch {
            BranchLabel::FF => 0.0,
            BranchLabel::FG => self.phi_b[m],
            BranchLabel::GF => self.phi_a[m],
            BranchLabel::GG => self.phi_a[m] + self.phi_b[m] + self.theta[m],
        }
    }

    /// Sum over both modes.
    pub fn branch_total(&self, branch: BranchLabel) -> f64 {
        NormalMode::BOTH.iter().map(|&m| self.branch(branch, m)).sum()
    }

    pub fn theta_total(&self) -> f64 {
        self.theta.iter().sum()
    }
}

/// `τ - sin(ητ)/η`, the common time profile of every accumulated phase.
fn loop_profile(eta: f64, t_ps: f64) -> f64 {
    let t = tau(t_ps);
    t - (eta * t).sin() / eta
}

pub fn accumulated_phases(c: &EffectiveCouplings, t_ps: f64) -> AccumulatedPhases {
    let mut out = AccumulatedPhases {
        phi_a: [0.0; 2],
        phi_b: [0.0; 2],
        theta: [0.0; 2],
    };
    for mode in NormalMode::BOTH {
        let m = mode.index();
        let eta = c.eta(mode);
        let profile = loop_profile(eta, t_ps);
        out.phi_a[m] = -(c.lambda(Dot::A, mode).norm_sqr() / eta) * profile;
        out.phi_b[m] = -(c.lambda(Dot::B, mode).norm_sqr() / eta) * profile;
        out.theta[m] = -(2.0 * c.pair_product(mode).re / eta) * profile;
    }
    out
}

/// Shortest time closing both phase-space loops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateTime {
    pub t0_ps: f64,
    /// Loop counts `|η_m| t₀ / 2πħ`.
    pub k: [u64; 2],
    /// Largest `| |η_m| t₀/2πħ - k_m |`.
    pub residual: f64,
}

/// Best rational approximations `p/q` of `x > 0` from its continued fraction,
/// in order of increasing denominator.
fn convergents(x: f64, max_k: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a > max_k as f64 {
            break;
        }
        let a = a as u64;
        let p2 = a.checked_mul(p1).and_then(|v| v.checked_add(p0));
        let q2 = a.checked_mul(q1).and_then(|v| v.checked_add(q0));
        let (Some(p2), Some(q2)) = (p2, q2) else { break };
        if p2 > max_k || q2 > max_k {
            break;
        }
        out.push((p2, q2));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rest - rest.floor();
        if frac <= f64::EPSILON * rest.max(1.0) {
            break;
        }
        rest = 1.0 / frac;
    }
    out
}

/// Finds `t₀` with `η_m t₀ = 2πħ k_m` for integers `k_m ≤ max_k`, accepting
/// `|ratio·k₂ - k₁| ≤ tol·k₁`.
pub fn gate_time(c: &EffectiveCouplings, max_k: u64, tol: f64) -> Result<GateTime> {
    let [e1, e2] = c.eta;
    if e1 == 0.0 || e2 == 0.0 {
        let mode = if e1 == 0.0 { 1 } else { 2 };
        return Err(Error::Resonance {
            mode,
            delta: 0.5 * (e1 + e2),
            nu: 0.5 * (e1 - e2),
        });
    }
    if e1.signum() != e2.signum() {
        return Err(Error::Precondition(format!(
            "normal-mode detunings have opposite signs ({e1}, {e2}); loops cannot close together"
        )));
    }
    if max_k == 0 {
        return Err(Error::invalid("max_k must be positive"));
    }
    let ratio = e1.abs() / e2.abs();
    let candidates = convergents(ratio, max_k);
    let mut best: Option<(u64, u64, f64)> = None;
    for &(k1, k2) in &candidates {
        let residual = (ratio * k2 as f64 - k1 as f64).abs();
        if best.map_or(true, |b| residual < b.2) {
            best = Some((k1, k2, residual));
        }
        if residual <= tol * (k1 as f64).max(1.0) {
            let t0_ps = TAU * HBAR_MEV_PS * k2 as f64 / e2.abs();
            let r1 = (e1.abs() * tau(t0_ps) / TAU - k1 as f64).abs();
            return Ok(GateTime {
                t0_ps,
                k: [k1, k2],
                residual: r1,
            });
        }
    }
    let (k1, k2, residual) = best.unwrap_or((0, 0, f64::INFINITY));
    Err(Error::Commensuration {
        k1,
        k2,
        residual,
        max_k,
    })
}

/// Gate phases at a loop-closing time, in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GatePhases {
    /// Phase picked up by `|g⟩_A` alone (branch `GF`).
    pub phi_a: f64,
    /// Phase picked up by `|g⟩_B` alone (branch `FG`).
    pub phi_b: f64,
    /// Conditional phase on `GG`.
    pub theta: f64,
}

impl GatePhases {
    pub fn branch(&self, branch: BranchLabel) -> f64 {
        match branch {
            BranchLabel::FF => 0.0,
            BranchLabel::FG => self.phi_b,
            BranchLabel::GF => self.phi_a,
            BranchLabel::GG => self.phi_a + self.phi_b + self.theta,
        }
    }
}

/// `Φ_j = -2π Σ k_m |λ_{j,m}|²/η_m²`, `Θ = -4π Σ k_m |λ_{A,m}λ_{B,m}| cos ϑ_m/η_m²`,
/// with `k_m` carrying the sign of `η_m` so both signs of detuning work.
pub fn gate_phases(c: &EffectiveCouplings, k: [u64; 2]) -> GatePhases {
    let mut out = GatePhases {
        phi_a: 0.0,
        phi_b: 0.0,
        theta: 0.0,
    };
    for mode in NormalMode::BOTH {
        let eta = c.eta(mode);
        let weight = k[mode.index()] as f64 * eta.signum() / (eta * eta);
        out.phi_a -= TAU * weight * c.lambda(Dot::A, mode).norm_sqr();
        out.phi_b -= TAU * weight * c.lambda(Dot::B, mode).norm_sqr();
        out.theta -= 2.0 * TAU * weight * c.pair_product(mode).re;
    }
    out
}

/// Stark-shift rates of the dispersive model, rad/ps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StarkRates {
    /// `Σ_m |λ_{A,m}|²/η_m` over ħ.
    pub rate_a: f64,
    pub rate_b: f64,
    /// `2Σ_m μ_m cos ϑ_m` over ħ.
    pub rate_cz: f64,
}

impl StarkRates {
    /// Phase of `branch` after time `t_ps`: the branch evolves as `e^{-i·rate·t}`.
    pub fn branch_phase(&self, branch: BranchLabel, t_ps: f64) -> f64 {
        let rate = match branch {
            BranchLabel::FF => 0.0,
            BranchLabel::FG => self.rate_b,
            BranchLabel::GF => self.rate_a,
            BranchLabel::GG => self.rate_a + self.rate_b + self.rate_cz,
        };
        -rate * t_ps
    }
}

pub fn second_model_phases(c: &EffectiveCouplings) -> StarkRates {
    let shift = |dot: Dot| -> f64 {
        NormalMode::BOTH
            .iter()
            .map(|&m| c.lambda(dot, m).norm_sqr() / c.eta(m))
            .sum()
    };
    let cz: f64 = NormalMode::BOTH
        .iter()
        .map(|&m| 2.0 * c.mu(m) * c.theta(m).cos())
        .sum();
    StarkRates {
        rate_a: shift(Dot::A) / HBAR_MEV_PS,
        rate_b: shift(Dot::B) / HBAR_MEV_PS,
        rate_cz: cz / HBAR_MEV_PS,
    }
}

/// `Θ = t₀·4ν|λ_{A,1}λ_{B,1}| cos ϑ₁ / (δ² - ν²)`, valid when the two pair
/// products have equal magnitude.
pub fn theta_simplified(c: &EffectiveCouplings, t0_ps: f64, balance_tol: f64) -> Result<f64> {
    let mismatch = c.balance_mismatch();
    if mismatch > balance_tol {
        return Err(Error::Precondition(format!(
            "pair products unbalanced: relative mismatch {mismatch:.3e} > {balance_tol:.1e}"
        )));
    }
    let (delta, nu) = delta_nu(c);
    let p1 = c.pair_product(NormalMode::C1);
    Ok(tau(t0_ps) * 4.0 * nu * p1.norm() * c.theta(NormalMode::C1).cos() / (delta * delta - nu * nu))
}

fn delta_nu(c: &EffectiveCouplings) -> (f64, f64) {
    (0.5 * (c.eta[0] + c.eta[1]), 0.5 * (c.eta[0] - c.eta[1]))
}

/// Inverted simplified form: time (ps) for `|Θ| = theta_target`, taking
/// `|cos ϑ₁| = 1`. Infinite for `ν = 0`.
pub fn simplified_operation_time(c: &EffectiveCouplings, theta_target: f64) -> f64 {
    let (delta, nu) = delta_nu(c);
    let p1 = c.pair_product(NormalMode::C1).norm();
    HBAR_MEV_PS * theta_target.abs() * (delta * delta - nu * nu).abs() / (4.0 * nu.abs() * p1)
}

/// A fully specified gate: loop-closing time and every predicted phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateSchedule {
    /// Total gate time (ps).
    pub t0_ps: f64,
    /// Total loop counts over `t0_ps`.
    pub k: [u64; 2],
    /// Repetitions of the shortest commensurate period.
    pub loops: u64,
    pub phases: GatePhases,
    pub rates: StarkRates,
    /// Set when tuned to `|Θ| = (2l+1)π`.
    pub l: Option<u32>,
}

impl GateSchedule {
    pub fn from_gate_time(c: &EffectiveCouplings, base: &GateTime, loops: u64) -> Result<Self> {
        if loops == 0 {
            return Err(Error::invalid("loop count must be positive"));
        }
        let k = [base.k[0] * loops, base.k[1] * loops];
        Ok(Self {
            t0_ps: base.t0_ps * loops as f64,
            k,
            loops,
            phases: gate_phases(c, k),
            rates: second_model_phases(c),
            l: None,
        })
    }

    /// Shortest commensurate schedule repeated `loops` times, default search
    /// settings.
    pub fn new(c: &EffectiveCouplings, loops: u64) -> Result<Self> {
        let base = gate_time(c, DEFAULT_MAX_K, DEFAULT_COMMENSURATION_TOL)?;
        Self::from_gate_time(c, &base, loops)
    }

    pub fn theta(&self) -> f64 {
        self.phases.theta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningKnob {
    /// Uniform scale on every Rabi frequency; the loop count stays fixed.
    OmegaScale,
    /// Integer loop count only.
    Loops,
    /// Uniform scale on every laser detuning.
    DetuningScale,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneOptions {
    /// Loop count for the continuous knobs; `None` picks the smallest count
    /// reachable with a scale inside `scale_range`.
    pub loops: Option<u64>,
    pub scale_range: (f64, f64),
    pub tolerance: f64,
    pub max_k: u64,
    pub commensuration_tol: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            loops: None,
            scale_range: (1e-3, 1.0),
            tolerance: PI_TUNING_TOL,
            max_k: DEFAULT_MAX_K,
            commensuration_tol: DEFAULT_COMMENSURATION_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TunedGate {
    pub params: SystemParams,
    pub couplings: EffectiveCouplings,
    pub schedule: GateSchedule,
    /// Applied scale (1 for the loop knob).
    pub scale: f64,
}

fn apply_knob(p: &SystemParams, knob: TuningKnob, s: f64) -> SystemParams {
    let mut q = p.clone();
    match knob {
        TuningKnob::OmegaScale => q.scale_drives(s),
        TuningKnob::DetuningScale => q.scale_detunings(s),
        TuningKnob::Loops => {}
    }
    q
}

fn theta_per_loop(p: &SystemParams, base: &GateTime) -> Result<f64> {
    let c = effective_couplings(p)?;
    Ok(gate_phases(&c, base.k).theta)
}

/// Adjusts `p` (or the loop count) so that `|Θ| = (2l+1)π`.
///
/// Scaling drives or detunings leaves the normal-mode detunings, hence the
/// commensurate period, unchanged. `|Θ|` is proportional to the square of the
/// drive scale, so bisection on it is monotone.
pub fn tune_for_pi_phase(
    p: &SystemParams,
    l: u32,
    knob: TuningKnob,
    opts: &TuneOptions,
) -> Result<TunedGate> {
    let target = (2 * l + 1) as f64 * PI;
    let c0 = effective_couplings(p)?;
    let base = gate_time(&c0, opts.max_k, opts.commensuration_tol)?;
    let theta1 = gate_phases(&c0, base.k).theta.abs();
    if theta1 == 0.0 {
        return Err(Error::Tuning {
            achieved: 0.0,
            target,
            detail: "conditional phase vanishes for these couplings".into(),
        });
    }

    if knob == TuningKnob::Loops {
        let loops = (target / theta1).round().max(1.0);
        let achieved = loops * theta1;
        if (achieved - target).abs() > opts.tolerance {
            return Err(Error::Tuning {
                achieved,
                target,
                detail: format!("closest integer loop count {loops} misses by {:.3e} rad", achieved - target),
            });
        }
        let schedule = tag(GateSchedule::from_gate_time(&c0, &base, loops as u64)?, l);
        return Ok(TunedGate {
            params: p.clone(),
            couplings: c0,
            schedule,
            scale: 1.0,
        });
    }

    let (lo0, hi0) = opts.scale_range;
    if !(lo0 > 0.0 && hi0 > lo0) {
        return Err(Error::invalid(format!("bad scale range ({lo0}, {hi0})")));
    }
    let theta_at = |s: f64| -> Result<f64> {
        Ok(theta_per_loop(&apply_knob(p, knob, s), &base)?.abs())
    };
    let (t_lo, t_hi) = (theta_at(lo0)?, theta_at(hi0)?);
    let (reach_min, reach_max) = (t_lo.min(t_hi), t_lo.max(t_hi));
    let loops = match opts.loops {
        Some(n) if n > 0 => n,
        Some(_) => return Err(Error::invalid("loop count must be positive")),
        None => ((target / reach_max).ceil() as u64).max(1),
    };
    let goal = target / loops as f64;
    if goal < reach_min || goal > reach_max {
        return Err(Error::Tuning {
            achieved: loops as f64 * if goal < reach_min { reach_min } else { reach_max },
            target,
            detail: format!("{knob:?} range ({lo0}, {hi0}) with {loops} loop(s) cannot reach the target"),
        });
    }
    let increasing = t_hi >= t_lo;
    let (mut lo, mut hi) = (lo0.ln(), hi0.ln());
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        s = 0.5 * (lo + hi);
        let v = theta_at(s.exp())?;
        if (v < goal) == increasing {
            lo = s;
        } else {
            hi = s;
        }
        if (v - goal).abs() * loops as f64 <= 1e-3 * opts.tolerance || hi - lo < 1e-15 {
            break;
        }
    }
    let scale = s.exp();
    let params = apply_knob(p, knob, scale);
    let couplings = effective_couplings(&params)?;
    let schedule = tag(GateSchedule::from_gate_time(&couplings, &base, loops)?, l);
    let achieved = schedule.phases.theta.abs();
    if (achieved - target).abs() > opts.tolerance {
        return Err(Error::Tuning {
            achieved,
            target,
            detail: "bisection did not converge".into(),
        });
    }
    Ok(TunedGate {
        params,
        couplings,
        schedule,
        scale,
    })
}

fn tag(mut s: GateSchedule, l: u32) -> GateSchedule {
    s.l = Some(l);
    s
}

/// `t₀(ν, δ)` over a grid (ps), rows indexed by δ and columns by ν.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperationTimeSurface {
    pub nu: Vec<f64>,
    pub delta: Vec<f64>,
    pub t0_ps: Vec<Vec<f64>>,
    /// `(delta index, nu index)` of grid points left as NaN.
    pub resonant: Vec<(usize, usize)>,
}

impl OperationTimeSurface {
    pub fn at(&self, delta_index: usize, nu_index: usize) -> f64 {
        self.t0_ps[delta_index][nu_index]
    }
}

/// Evaluates the inverted simplified form at each grid point, recomputing the
/// couplings there. Points on `δ = ±ν` (or otherwise singular) become NaN.
pub fn operation_time_surface(
    base: &SystemParams,
    nu_grid: &[f64],
    delta_grid: &[f64],
    theta_target: f64,
) -> OperationTimeSurface {
    let points: Vec<(usize, usize)> = (0..delta_grid.len())
        .flat_map(|i| (0..nu_grid.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(i, j)| {
            let mut p = base.clone();
            p.delta = delta_grid[i];
            p.nu = nu_grid[j];
            let scale = p.delta.abs().max(p.nu.abs());
            if (p.delta.abs() - p.nu.abs()).abs() <= 1e-12 * scale {
                return f64::NAN;
            }
            match effective_couplings(&p) {
                Ok(c) => simplified_operation_time(&c, theta_target),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    let mut t0_ps = vec![vec![0.0; nu_grid.len()]; delta_grid.len()];
    let mut resonant = Vec::new();
    for (&(i, j), v) in points.iter().zip(values) {
        if v.is_nan() {
            resonant.push((i, j));
        }
        t0_ps[i][j] = v;
    }
    OperationTimeSurface {
        nu: nu_grid.to_vec(),
        delta: delta_grid.to_vec(),
        t0_ps,
        resonant,
    }
}

/// The effective cavity-decay time estimate in two readings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayTimeEstimate {
    /// `γ(δ-ν)²/max|λ|²` taken literally; carries units of energy (meV).
    pub literal_mev: f64,
    /// `ħ(δ-ν)²/(γ max|λ|²)` in ps, the dimensionally consistent reading.
    pub consistent_ps: f64,
}

pub fn effective_decay_time(c: &EffectiveCouplings, gamma_mev: f64) -> DecayTimeEstimate {
    let lam = c
        .lambda
        .iter()
        .flatten()
        .map(|l| l.norm_sqr())
        .fold(0.0, f64::max);
    let detuning = c.eta[1] * c.eta[1];
    DecayTimeEstimate {
        literal_mev: gamma_mev * detuning / lam,
        consistent_ps: HBAR_MEV_PS * detuning / (gamma_mev * lam),
    }
}
