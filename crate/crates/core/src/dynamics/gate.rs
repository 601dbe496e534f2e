//! Gate-level simulation: ideal logical gates, full runs from the standard
//! input state, and model-to-model comparison.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::integrate::{propagate_lindblad_with, propagate_state_with, Method, PropagationConfig};
use crate::error::{DriftMetrics, Error, Result};
use crate::generator::Generator;
use crate::hilbert::{
    truncated_poisson_mass, unit_phase, ComplexOperator, QdLevel, SpaceLayout, StateVector,
    QD_LEVELS, ZERO,
};
use crate::model::{
    collapse_operators, dispersive_generator, effective_couplings, effective_generator,
    interaction_generator, CollapseBasis, Dot, EffectiveCouplings, SystemParams,
};
use crate::phases::{max_displacement, BranchLabel, GateSchedule};

pub const DEFAULT_N_MAX: usize = 4;
/// Largest predicted `|α|` tolerated at the default cutoff.
pub const DISPLACEMENT_LIMIT: f64 = 0.5;
/// Fock-tail weight targeted when the cutoff is raised.
pub const FOCK_TAIL_TARGET: f64 = 1e-8;

/// Which Hamiltonian drives a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelLevel {
    /// Full interaction picture with the excited dot level.
    Interaction,
    /// Excited level eliminated; cavities displaced branch by branch.
    Effective,
    /// Cavities eliminated as well; pure Stark shifts.
    Dispersive,
}

impl ModelLevel {
    pub fn name(self) -> &'static str {
        match self {
            ModelLevel::Interaction => "interaction",
            ModelLevel::Effective => "effective",
            ModelLevel::Dispersive => "dispersive",
        }
    }
}

pub fn model_generator(
    p: &SystemParams,
    c: &EffectiveCouplings,
    layout: &SpaceLayout,
    level: ModelLevel,
) -> Result<Generator> {
    match level {
        ModelLevel::Interaction => interaction_generator(p, layout),
        ModelLevel::Effective => effective_generator(c, layout),
        ModelLevel::Dispersive => dispersive_generator(c, layout),
    }
}

/// `½(|f⟩+|g⟩)_A ⊗ (|f⟩+|g⟩)_B ⊗ |00⟩`.
pub fn standard_initial_state(layout: &SpaceLayout) -> StateVector {
    let mut psi = StateVector::zeros(layout.dim());
    for b in BranchLabel::ALL {
        let (qa, qb) = b.levels();
        psi.amplitudes_mut()[layout.index(qa, qb, 0, 0)] = C64::new(0.5, 0.0);
    }
    psi
}

/// Diagonal two-qubit gate on `ff, fg, gf, gg`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogicalGate {
    pub diagonal: [C64; 4],
}

impl LogicalGate {
    pub fn identity() -> Self {
        Self {
            diagonal: [C64::new(1.0, 0.0); 4],
        }
    }

    pub fn from_phases(phases: [f64; 4]) -> Self {
        Self {
            diagonal: phases.map(unit_phase),
        }
    }

    pub fn entry(&self, branch: BranchLabel) -> C64 {
        self.diagonal[branch.index()]
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &LogicalGate) -> LogicalGate {
        let mut d = self.diagonal;
        for (x, y) in d.iter_mut().zip(other.diagonal) {
            *x *= y;
        }
        LogicalGate { diagonal: d }
    }

    pub fn determinant(&self) -> C64 {
        self.diagonal.iter().product()
    }

    pub fn matrix(&self) -> ComplexOperator {
        ComplexOperator::from_diagonal(&self.diagonal)
    }

    /// Phases relative to `ff`, wrapped to `(-π, π]`.
    pub fn relative_phases(&self) -> [f64; 4] {
        let reference = self.diagonal[0].arg();
        self.diagonal.map(|z| wrap_phase(z.arg() - reference))
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// The gate a schedule implements. With `corrections`, the single-dot phases
/// are undone exactly, leaving `diag[1, 1, 1, e^{iΘ}]`; a schedule tuned to
/// `|Θ| = (2l+1)π` yields the nominal `diag[1, 1, 1, -1]`.
pub fn ideal_gate(s: &GateSchedule, corrections: bool) -> LogicalGate {
    let ph = s.phases;
    if corrections {
        if s.l.is_some() {
            let one = C64::new(1.0, 0.0);
            return LogicalGate {
                diagonal: [one, one, one, -one],
            };
        }
        LogicalGate::from_phases([0.0, 0.0, 0.0, ph.theta])
    } else {
        LogicalGate::from_phases(BranchLabel::ALL.map(|b| ph.branch(b)))
    }
}

/// Single-dot phase corrections `|g⟩_A → e^{-iΦ_A}|g⟩_A`, `|g⟩_B → e^{-iΦ_B}|g⟩_B`.
pub fn correction_gate(s: &GateSchedule) -> LogicalGate {
    let (a, b) = (s.phases.phi_a, s.phases.phi_b);
    LogicalGate::from_phases([0.0, -b, -a, -(a + b)])
}

/// Smallest cutoff keeping the Fock tail of the largest predicted
/// displacement below [`FOCK_TAIL_TARGET`]; `base` when displacements are
/// at most [`DISPLACEMENT_LIMIT`].
pub fn choose_n_max(c: &EffectiveCouplings, base: usize) -> usize {
    let alpha = max_displacement(c).into_iter().fold(0.0, f64::max);
    if alpha <= DISPLACEMENT_LIMIT {
        return base;
    }
    let mut n = base;
    while 1.0 - truncated_poisson_mass(C64::new(alpha, 0.0), n) > FOCK_TAIL_TARGET && n < 200 {
        n += 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Fock cutoff; `None` uses `p.n_max` raised by [`choose_n_max`].
    pub n_max: Option<usize>,
    /// Approximate number of output samples.
    pub samples: usize,
    pub method: Method,
    /// Step guard `dt·ω_max`; `None` uses [`default_phase_guard`].
    pub phase_guard: Option<f64>,
    /// Repeat with `n_max + 1` and report the change.
    pub convergence_check: bool,
    pub collapse_basis: CollapseBasis,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            n_max: None,
            samples: 400,
            method: Method::Rk4Fixed,
            phase_guard: None,
            convergence_check: false,
            collapse_basis: CollapseBasis::Bare,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateReport {
    pub model: ModelLevel,
    pub decay: bool,
    pub n_max: usize,
    pub t0_ps: f64,
    /// Vacuum-to-vacuum amplitudes of each logical branch (lossless run).
    pub realized: LogicalGate,
    /// Extracted branch phases relative to `ff`.
    pub phases: [f64; 4],
    /// Closed-form branch phases of the schedule.
    pub predicted: [f64; 4],
    /// `phases - predicted`, wrapped.
    pub phase_errors: [f64; 4],
    pub times_ps: Vec<f64>,
    /// `Tr(ρ(t) ρ′(t))` with `ρ′` the lossless evolution.
    pub fidelity: Vec<f64>,
    pub final_fidelity: f64,
    /// Overlap of the final state with the uncorrected ideal gate output.
    pub ideal_target_fidelity: f64,
    /// Per logical basis input; exact for models that conserve dot levels.
    pub basis_fidelity: [f64; 4],
    pub worst_basis_fidelity: f64,
    /// Branch population outside the cavity vacuum at `t₀`, per unit branch weight.
    pub residual_photons: [f64; 4],
    /// Largest excited-level population of each dot over the run.
    pub max_excited_population: [f64; 2],
    /// Largest linear entropy `1 - Tr ρ_dots²` of the two-dot state.
    pub max_dot_linear_entropy: f64,
    pub norm_drift: f64,
    pub drift: DriftMetrics,
    pub steps: usize,
    /// `|F(n_max+1) - F(n_max)|` (lossy) or largest branch-phase change (lossless).
    pub convergence_delta: Option<f64>,
}

struct LogicalIndex {
    /// Full-space indices of each branch's dot labels, any photon number.
    blocks: [Vec<usize>; 4],
    vacuum: [usize; 4],
    excited: [Vec<usize>; 2],
}

impl LogicalIndex {
    fn new(layout: &SpaceLayout) -> Self {
        let mut blocks: [Vec<usize>; 4] = Default::default();
        let mut excited: [Vec<usize>; 2] = Default::default();
        for i in 0..layout.dim() {
            let (a, b, _, _) = layout.decompose(i);
            for br in BranchLabel::ALL {
                if br.levels() == (a, b) {
                    blocks[br.index()].push(i);
                }
            }
            if a == QdLevel::E {
                excited[0].push(i);
            }
            if b == QdLevel::E {
                excited[1].push(i);
            }
        }
        let vacuum = BranchLabel::ALL.map(|br| {
            let (a, b) = br.levels();
            layout.index(a, b, 0, 0)
        });
        Self {
            blocks,
            vacuum,
            excited,
        }
    }

    fn project(&self, psi: &StateVector, branch: BranchLabel) -> StateVector {
        let mut out = StateVector::zeros(psi.dim());
        for &i in &self.blocks[branch.index()] {
            out.amplitudes_mut()[i] = psi.get(i);
        }
        out
    }
}

/// Linear entropy of the two-dot reduced state of a pure state.
fn dot_linear_entropy(psi: &StateVector, layout: &SpaceLayout) -> f64 {
    let dots = QD_LEVELS * QD_LEVELS;
    let cav = layout.cavity_dim();
    let amps = psi.amplitudes();
    let mut rho = vec![ZERO; dots * dots];
    for i in 0..dots {
        for j in 0..dots {
            let mut acc = ZERO;
            for k in 0..cav {
                acc += amps[i * cav + k] * amps[j * cav + k].conj();
            }
            rho[i * dots + j] = acc;
        }
    }
    let purity: f64 = rho.iter().map(|v| v.norm_sqr()).sum();
    (1.0 - purity).max(0.0)
}

fn predicted_phases(s: &GateSchedule) -> [f64; 4] {
    BranchLabel::ALL.map(|b| wrap_phase(s.phases.branch(b)))
}

/// The full model's drive terms dominate its norm; RK4's amplitude damping
/// grows as `(dt·ω)⁶` per step, so runs of many thousand steps need a finer
/// guard to keep the norm within 1e-8.
pub fn default_phase_guard(model: ModelLevel) -> f64 {
    match model {
        ModelLevel::Interaction => 0.05,
        ModelLevel::Effective | ModelLevel::Dispersive => 0.1,
    }
}

fn sampling_config(
    t0: f64,
    omega: f64,
    guard: f64,
    opts: &SimulationOptions,
) -> Result<PropagationConfig> {
    let mut cfg = PropagationConfig::new(t0).with_method(opts.method);
    cfg.phase_guard = guard;
    let (steps, dt) = cfg.resolve_steps(omega)?;
    cfg.dt = if steps > 0 { Some(dt) } else { None };
    cfg.sample_stride = (steps / opts.samples.max(1)).max(1);
    Ok(cfg)
}

pub fn run_gate_simulation(
    p: &SystemParams,
    s: &GateSchedule,
    model: ModelLevel,
    decay: bool,
) -> Result<GateReport> {
    run_gate_simulation_with(p, s, model, decay, &SimulationOptions::default())
}

pub fn run_gate_simulation_with(
    p: &SystemParams,
    s: &GateSchedule,
    model: ModelLevel,
    decay: bool,
    opts: &SimulationOptions,
) -> Result<GateReport> {
    p.validate()?;
    let c = effective_couplings(p)?;
    let n_max = opts.n_max.unwrap_or_else(|| choose_n_max(&c, p.n_max));
    let mut report = simulate_once(p, &c, s, model, decay, n_max, opts)?;
    if opts.convergence_check {
        let finer = simulate_once(p, &c, s, model, decay, n_max + 1, opts)?;
        let delta = if decay {
            (finer.final_fidelity - report.final_fidelity).abs()
        } else {
            report
                .phases
                .iter()
                .zip(finer.phases)
                .map(|(a, b)| wrap_phase(a - b).abs())
                .fold(0.0, f64::max)
        };
        report.convergence_delta = Some(delta);
    }
    Ok(report)
}

fn simulate_once(
    p: &SystemParams,
    c: &EffectiveCouplings,
    s: &GateSchedule,
    model: ModelLevel,
    decay: bool,
    n_max: usize,
    opts: &SimulationOptions,
) -> Result<GateReport> {
    let layout = SpaceLayout::new(n_max)?;
    let gen = model_generator(p, c, &layout, model)?;
    let collapse = if decay {
        collapse_operators(p, &layout, opts.collapse_basis)?
    } else {
        Vec::new()
    };
    let loss_norm: f64 = collapse
        .iter()
        .map(|k| k.rate * gen.rate_scale() * (&k.operator.dagger() * &k.operator).norm())
        .sum();
    let guard = opts.phase_guard.unwrap_or_else(|| default_phase_guard(model));
    let cfg = sampling_config(s.t0_ps, gen.max_frequency() + gen.norm_bound() + loss_norm, guard, opts)?;
    let psi0 = standard_initial_state(&layout);
    let index = LogicalIndex::new(&layout);

    let mut times = Vec::new();
    let mut lossless = Vec::new();
    let mut excited = [0.0f64; 2];
    let mut entropy = 0.0f64;
    let (norm_drift, mut steps) = propagate_state_with(&gen, &psi0, &cfg, |t, psi| {
        for (d, list) in index.excited.iter().enumerate() {
            let pop: f64 = list.iter().map(|&i| psi.get(i).norm_sqr()).sum();
            excited[d] = excited[d].max(pop);
        }
        entropy = entropy.max(dot_linear_entropy(psi, &layout));
        times.push(t);
        lossless.push(psi.clone());
        Ok(())
    })?;
    let final_psi = lossless.last().expect("initial sample present").clone();

    let amplitudes = index.vacuum.map(|i| final_psi.get(i) / 0.5);
    let realized = LogicalGate {
        diagonal: amplitudes,
    };
    let phases = realized.relative_phases();
    let predicted = predicted_phases(s);
    let phase_errors = [0, 1, 2, 3].map(|k| wrap_phase(phases[k] - predicted[k]));
    let residual_photons = BranchLabel::ALL.map(|b| {
        let block: f64 = index.blocks[b.index()]
            .iter()
            .filter(|&&i| i != index.vacuum[b.index()])
            .map(|&i| final_psi.get(i).norm_sqr())
            .sum();
        block / 0.25
    });

    let ideal = ideal_gate(s, false);
    let mut ideal_psi = StateVector::zeros(layout.dim());
    for b in BranchLabel::ALL {
        ideal_psi.amplitudes_mut()[index.vacuum[b.index()]] = 0.5 * ideal.entry(b);
    }

    let mut fidelity = Vec::new();
    let mut drift = DriftMetrics::default();
    let mut basis_fidelity = [1.0; 4];
    let ideal_target_fidelity;
    if decay {
        let rho0 = psi0.to_density();
        let mut k = 0;
        let mut final_values: Option<(Vec<C64>, Vec<usize>)> = None;
        let (metrics, lsteps) =
            propagate_lindblad_with(&gen, &collapse, &rho0, &cfg, &[], |t, rho| {
                let reference = &lossless[k];
                if (times[k] - t).abs() > 1e-9 * t.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "lossy and lossless sample times diverged ({} vs {t})",
                        times[k]
                    )));
                }
                fidelity.push(rho.expectation_in(reference).re);
                k += 1;
                if k == lossless.len() {
                    final_values = Some((rho.values.to_vec(), rho.subspace.indices().to_vec()));
                }
                Ok(())
            })?;
        drift = metrics;
        steps += lsteps;
        let (values, indices) = final_values.ok_or_else(|| {
            Error::Numerical("lossy run produced fewer samples than the lossless run".into())
        })?;
        let n = indices.len();
        let expect = |psi: &StateVector| -> f64 {
            let r: Vec<C64> = indices.iter().map(|&i| psi.get(i)).collect();
            let mut acc = ZERO;
            for a in 0..n {
                if r[a] == ZERO {
                    continue;
                }
                let row: C64 = (0..n).map(|b| values[a * n + b] * r[b]).sum();
                acc += r[a].conj() * row;
            }
            acc.re
        };
        ideal_target_fidelity = expect(&ideal_psi);
        for b in BranchLabel::ALL {
            let target = index.project(&final_psi, b);
            let w = target.norm().powi(2);
            let block_pop: f64 = indices
                .iter()
                .enumerate()
                .filter(|(_, i)| index.blocks[b.index()].binary_search(i).is_ok())
                .map(|(a, _)| values[a * n + a].re)
                .sum();
            basis_fidelity[b.index()] = if w > 0.0 && block_pop > 0.0 {
                expect(&target) / (w * block_pop)
            } else {
                0.0
            };
        }
    } else {
        fidelity = vec![1.0; times.len()];
        ideal_target_fidelity = ideal_psi.inner(&final_psi)?.norm_sqr();
    }
    let final_fidelity = *fidelity.last().unwrap_or(&1.0);
    let worst_basis_fidelity = basis_fidelity.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(GateReport {
        model,
        decay,
        n_max,
        t0_ps: s.t0_ps,
        realized,
        phases,
        predicted,
        phase_errors,
        times_ps: times,
        fidelity,
        final_fidelity,
        ideal_target_fidelity,
        basis_fidelity,
        worst_basis_fidelity,
        residual_photons,
        max_excited_population: excited,
        max_dot_linear_entropy: entropy,
        norm_drift,
        drift,
        steps,
        convergence_delta: None,
    })
}

/// Differences between two lossless model propagations of the standard input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelDeviation {
    pub models: (ModelLevel, ModelLevel),
    /// Branch-phase differences at `t₀`.
    pub phase_diff_t0: [f64; 4],
    /// `|⟨ψ_a|ψ_b⟩|` per branch block at `t₀`, blocks normalised.
    pub overlap_t0: [f64; 4],
    /// Largest branch-phase difference over the sampled run.
    pub max_phase_deviation: f64,
    /// Largest `1 - overlap²` over branches and samples.
    pub max_infidelity: f64,
    pub samples: usize,
}

pub fn compare_models(
    p: &SystemParams,
    s: &GateSchedule,
    pair: (ModelLevel, ModelLevel),
) -> Result<ModelDeviation> {
    compare_models_with(p, s, pair, &SimulationOptions::default())
}

pub fn compare_models_with(
    p: &SystemParams,
    s: &GateSchedule,
    pair: (ModelLevel, ModelLevel),
    opts: &SimulationOptions,
) -> Result<ModelDeviation> {
    p.validate()?;
    let c = effective_couplings(p)?;
    let n_max = opts.n_max.unwrap_or_else(|| choose_n_max(&c, p.n_max));
    let layout = SpaceLayout::new(n_max)?;
    let ga = model_generator(p, &c, &layout, pair.0)?;
    let gb = model_generator(p, &c, &layout, pair.1)?;
    let omega = [&ga, &gb]
        .iter()
        .map(|g| g.max_frequency() + g.norm_bound())
        .fold(0.0, f64::max);
    let guard = opts
        .phase_guard
        .unwrap_or_else(|| default_phase_guard(pair.0).min(default_phase_guard(pair.1)));
    let cfg = sampling_config(s.t0_ps, omega, guard, opts)?;
    let psi0 = standard_initial_state(&layout);
    let mut first = Vec::new();
    propagate_state_with(&ga, &psi0, &cfg, |_, psi| {
        first.push(psi.clone());
        Ok(())
    })?;
    let index = LogicalIndex::new(&layout);
    let mut k = 0;
    let mut max_phase: f64 = 0.0;
    let mut max_infidelity: f64 = 0.0;
    let mut phase_diff_t0 = [0.0; 4];
    let mut overlap_t0 = [1.0; 4];
    propagate_state_with(&gb, &psi0, &cfg, |_, psi| {
        let other = &first[k];
        for b in BranchLabel::ALL {
            let v = index.vacuum[b.index()];
            let dphi = wrap_phase(other.get(v).arg() - psi.get(v).arg());
            let (pa, pb) = (index.project(other, b), index.project(psi, b));
            let norm = pa.norm() * pb.norm();
            let ov = if norm > 0.0 { pa.inner(&pb)?.norm() / norm } else { 0.0 };
            max_phase = max_phase.max(dphi.abs());
            max_infidelity = max_infidelity.max(1.0 - ov * ov);
            if k + 1 == first.len() {
                phase_diff_t0[b.index()] = dphi;
                overlap_t0[b.index()] = ov;
            }
        }
        k += 1;
        Ok(())
    })?;
    Ok(ModelDeviation {
        models: pair,
        phase_diff_t0,
        overlap_t0,
        max_phase_deviation: max_phase,
        max_infidelity,
        samples: k,
    })
}

/// Per-dot bound `4(|Ω_j|/Δ_j)²` on the excited-level population.
pub fn excited_population_bound(p: &SystemParams) -> [f64; 2] {
    Dot::BOTH.map(|d| {
        let dot = p.dot(d);
        4.0 * (dot.omega.norm() / dot.detuning).powi(2)
    })
}
