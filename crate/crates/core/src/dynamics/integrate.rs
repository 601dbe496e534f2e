//! Fourth-order Runge–Kutta propagation of state vectors and density
//! matrices under a [`Generator`], optionally with Lindblad loss channels.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::sparse::{CompiledGenerator, SparseMatrix, Subspace};
use crate::error::{DriftMetrics, Error, Result};
use crate::generator::Generator;
use crate::hilbert::{ComplexOperator, DensityMatrix, StateVector, I, ZERO};
use crate::model::Collapse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk4Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Step (fixed) or initial step (adaptive); `None` derives it from the
    /// phase-resolution guard. Always shrunk to divide `t_final`.
    pub dt: Option<f64>,
    pub method: Method,
    pub t_final: f64,
    /// Output every `sample_stride` nominal steps (plus the final time).
    pub sample_stride: usize,
    /// Local error target of the adaptive method.
    pub error_tolerance: f64,
    /// Upper bound on `dt·ω_max` for the fixed-step method.
    pub phase_guard: f64,
    /// Allowed `|‖ψ‖ - 1|` for pure-state runs.
    pub norm_tolerance: f64,
    pub trace_tolerance: f64,
    pub hermiticity_tolerance: f64,
    pub eigenvalue_floor: f64,
}

impl PropagationConfig {
    pub fn new(t_final: f64) -> Self {
        Self {
            dt: None,
            method: Method::Rk4Fixed,
            t_final,
            sample_stride: 1,
            error_tolerance: 1e-10,
            phase_guard: 0.1,
            norm_tolerance: 1e-8,
            trace_tolerance: 1e-6,
            hermiticity_tolerance: 1e-8,
            eigenvalue_floor: -1e-6,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Nominal step count and step for a generator whose fastest angular
    /// frequency is bounded by `omega_max`.
    pub fn resolve_steps(&self, omega_max: f64) -> Result<(usize, f64)> {
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::Config(format!("t_final must be finite and >= 0, got {}", self.t_final)));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be >= 1".into()));
        }
        if !(self.phase_guard > 0.0) {
            return Err(Error::Config("phase_guard must be positive".into()));
        }
        if self.method == Method::Rk4Adaptive && !(self.error_tolerance > 0.0) {
            return Err(Error::Config("error_tolerance must be positive".into()));
        }
        if self.t_final == 0.0 {
            return Ok((0, 0.0));
        }
        let guard_dt = if omega_max > 0.0 {
            self.phase_guard / omega_max
        } else {
            self.t_final
        };
        let dt = match self.dt {
            Some(dt) if !(dt > 0.0) => {
                return Err(Error::Config(format!("dt must be positive, got {dt}")))
            }
            Some(dt) => {
                if self.method == Method::Rk4Fixed && dt * omega_max > self.phase_guard * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "dt = {dt} violates the phase guard: dt·ω_max = {:.4} > {}",
                        dt * omega_max,
                        self.phase_guard
                    )));
                }
                dt
            }
            None => guard_dt,
        };
        let steps = (self.t_final / dt).ceil().max(1.0) as usize;
        Ok((steps, self.t_final / steps as f64))
    }
}

/// Generic explicit RK4 over a flat complex state.
struct Rk4Workspace {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![ZERO; n],
            k2: vec![ZERO; n],
            k3: vec![ZERO; n],
            k4: vec![ZERO; n],
            tmp: vec![ZERO; n],
        }
    }

    fn step(
        &mut self,
        rhs: &mut impl FnMut(f64, &[C64], &mut [C64]),
        t: f64,
        h: f64,
        y: &mut [C64],
    ) {
        rhs(t, y, &mut self.k1);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k1);
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k2);
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        axpy_into(&mut self.tmp, y, h, &self.k3);
        rhs(t + h, &self.tmp, &mut self.k4);
        let w = h / 6.0;
        for i in 0..y.len() {
            y[i] += w * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

fn axpy_into(out: &mut [C64], y: &[C64], a: f64, k: &[C64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

/// Drives `rhs` from 0 to `t_final`, calling `observe` at t = 0, every
/// `stride` nominal steps and at the end. Returns the number of RK4 steps.
fn integrate(
    cfg: &PropagationConfig,
    omega_max: f64,
    y: &mut Vec<C64>,
    mut rhs: impl FnMut(f64, &[C64], &mut [C64]),
    mut observe: impl FnMut(f64, &[C64]) -> Result<()>,
) -> Result<usize> {
    let (steps, dt) = cfg.resolve_steps(omega_max)?;
    let mut ws = Rk4Workspace::new(y.len());
    observe(0.0, y)?;
    if steps == 0 {
        return Ok(0);
    }
    let mut taken = 0;
    match cfg.method {
        Method::Rk4Fixed => {
            for s in 0..steps {
                let t = s as f64 * dt;
                ws.step(&mut rhs, t, dt, y);
                taken += 1;
                let done = s + 1;
                if done % cfg.sample_stride == 0 || done == steps {
                    observe(done as f64 * dt, y)?;
                }
            }
        }
        Method::Rk4Adaptive => {
            let mut half = y.clone();
            let mut full = y.clone();
            let mut h = dt;
            let mut done = 0;
            while done < steps {
                let next = (done + cfg.sample_stride).min(steps);
                let (t_start, t_end) = (done as f64 * dt, next as f64 * dt);
                let mut t = t_start;
                while t < t_end - 1e-12 * t_end.abs().max(1.0) {
                    let h_try = h.min(t_end - t);
                    full.copy_from_slice(y);
                    ws.step(&mut rhs, t, h_try, &mut full);
                    half.copy_from_slice(y);
                    ws.step(&mut rhs, t, 0.5 * h_try, &mut half);
                    ws.step(&mut rhs, t + 0.5 * h_try, 0.5 * h_try, &mut half);
                    taken += 3;
                    let err = half
                        .iter()
                        .zip(full.iter())
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                        / 15.0;
                    if err <= cfg.error_tolerance || h_try < 1e-14 * t_end.max(1.0) {
                        for (yi, (hv, fv)) in y.iter_mut().zip(half.iter().zip(full.iter())) {
                            // Richardson extrapolation of the two estimates
                            *yi = hv + (hv - fv) / 15.0;
                        }
                        t += h_try;
                    }
                    let factor = if err == 0.0 {
                        2.0
                    } else {
                        (0.9 * (cfg.error_tolerance / err).powf(0.2)).clamp(0.2, 2.0)
                    };
                    h = (h_try * factor).max(1e-14 * t_end.max(1.0));
                }
                done = next;
                observe(t_end, y)?;
            }
        }
    }
    Ok(taken)
}

fn omega_bound(gen: &Generator) -> f64 {
    gen.max_frequency() + gen.norm_bound()
}

/// Sampled pure-state evolution.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Largest `|‖ψ(t)‖ - 1|` over the samples.
    pub norm_drift: f64,
    pub steps: usize,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

/// Subspace on which `psi0` evolves under `gen`.
pub fn state_subspace(gen: &Generator, psi0: &StateVector) -> Subspace {
    let seeds = psi0
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != ZERO)
        .map(|(i, _)| i);
    Subspace::reachable(gen.dim(), seeds, gen.terms().iter().map(|t| &t.operator))
}

/// Evolves `psi0` under `i dψ/dt = H(t)ψ`, reporting each sample as a
/// full-space state to `observe`.
pub fn propagate_state_with(
    gen: &Generator,
    psi0: &StateVector,
    cfg: &PropagationConfig,
    mut observe: impl FnMut(f64, &StateVector) -> Result<()>,
) -> Result<(f64, usize)> {
    if psi0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            found: psi0.dim(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("initial state norm {} != 1", psi0.norm())));
    }
    let sub = state_subspace(gen, psi0);
    let cg = CompiledGenerator::compile(gen, None, &sub)?;
    let mut y = sub.restrict_vector(psi0.amplitudes())?;
    let mut coeffs = Vec::new();
    let mut vals = vec![ZERO; cg.nnz()];
    let mut drift: f64 = 0.0;
    let tol = cfg.norm_tolerance;
    let steps = integrate(
        cfg,
        omega_bound(gen),
        &mut y,
        |t, x, out| {
            cg.assemble(t, &mut coeffs, &mut vals);
            cg.mul_vec(&vals, x, out);
            for o in out.iter_mut() {
                *o *= -I;
            }
        },
        |t, x| {
            let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            drift = drift.max((norm - 1.0).abs());
            if drift > tol {
                return Err(Error::Integration {
                    detail: format!("norm drift {drift:.3e} exceeds {tol:.1e}"),
                    metrics: DriftMetrics {
                        time_ps: t,
                        norm_drift: drift,
                        ..DriftMetrics::default()
                    },
                });
            }
            let full = StateVector::from_amplitudes(sub.expand_vector(x))?;
            observe(t, &full)
        },
    )?;
    Ok((drift, steps))
}

pub fn propagate_state(
    gen: &Generator,
    psi0: &StateVector,
    cfg: &PropagationConfig,
) -> Result<StateTrajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let (norm_drift, steps) = propagate_state_with(gen, psi0, cfg, |t, psi| {
        times.push(t);
        states.push(psi.clone());
        Ok(())
    })?;
    Ok(StateTrajectory {
        times,
        states,
        norm_drift,
        steps,
    })
}

/// Density matrix restricted to its propagation subspace (row-major).
#[derive(Clone, Debug)]
pub struct ReducedDensity<'a> {
    pub subspace: &'a Subspace,
    pub values: &'a [C64],
}

impl ReducedDensity<'_> {
    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.values[a * self.dim() + b]
    }

    /// `⟨ψ|ρ|ψ⟩` for a full-space `ψ`.
    pub fn expectation_in(&self, psi: &StateVector) -> C64 {
        let n = self.dim();
        let r: Vec<C64> = self
            .subspace
            .indices()
            .iter()
            .map(|&i| psi.get(i))
            .collect();
        let mut acc = ZERO;
        for a in 0..n {
            if r[a] == ZERO {
                continue;
            }
            let row = &self.values[a * n..(a + 1) * n];
            let inner: C64 = row.iter().zip(&r).map(|(v, x)| v * x).sum();
            acc += r[a].conj() * inner;
        }
        acc
    }

    pub fn expand(&self) -> DensityMatrix {
        DensityMatrix::from_operator(self.subspace.expand_matrix(self.values))
    }
}

/// Sampled density-matrix evolution with drift diagnostics.
#[derive(Clone, Debug)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub drift: DriftMetrics,
    pub steps: usize,
}

impl DensityTrajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

fn physicality_of(values: &[C64], n: usize) -> (f64, f64, f64) {
    let mut trace = ZERO;
    let mut herm: f64 = 0.0;
    for a in 0..n {
        trace += values[a * n + a];
        for b in a..n {
            herm = herm.max((values[a * n + b] - values[b * n + a].conj()).norm());
        }
    }
    let op = ComplexOperator::from_fn(n, |a, b| values[a * n + b]);
    let min_eig = op.hermitian_eigenvalues().first().copied().unwrap_or(0.0);
    ((trace.re - 1.0).abs().max(trace.im.abs()), herm, min_eig)
}

/// Evolves `rho0` under `dρ/dt = -i[H,ρ] + Σ γ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})`.
/// Collapse rates are in the generator's energy unit. Extra operators in
/// `share_subspace_with` only widen the propagation subspace, which lets
/// lossy and lossless runs sample identical reduced spaces.
pub fn propagate_lindblad_with(
    gen: &Generator,
    collapse: &[Collapse],
    rho0: &DensityMatrix,
    cfg: &PropagationConfig,
    share_subspace_with: &[&ComplexOperator],
    mut observe: impl FnMut(f64, &ReducedDensity<'_>) -> Result<()>,
) -> Result<(DriftMetrics, usize)> {
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            found: rho0.dim(),
        });
    }
    let p = rho0.physicality();
    if p.trace_drift > 1e-10 || p.hermiticity_drift > 1e-10 || p.min_eigenvalue < -1e-8 {
        return Err(Error::invalid(format!("initial density matrix is not physical: {p:?}")));
    }
    for c in collapse {
        if c.operator.dim() != gen.dim() {
            return Err(Error::DimensionMismatch {
                expected: gen.dim(),
                found: c.operator.dim(),
            });
        }
        if !(c.rate >= 0.0) {
            return Err(Error::invalid("collapse rates must be nonnegative"));
        }
    }
    let full = rho0.operator().matrix();
    let seeds = (0..gen.dim()).filter(|&i| (0..gen.dim()).any(|j| full[(i, j)] != ZERO));
    let ops = gen
        .terms()
        .iter()
        .map(|t| &t.operator)
        .chain(collapse.iter().map(|c| &c.operator))
        .chain(share_subspace_with.iter().copied());
    let sub = Subspace::reachable(gen.dim(), seeds, ops);
    let n = sub.dim();

    let scale = gen.rate_scale();
    let mut loss = ComplexOperator::zeros(gen.dim());
    for c in collapse.iter().filter(|c| c.rate > 0.0) {
        loss = &loss + &(&c.operator.dagger() * &c.operator).scale(C64::new(c.rate, 0.0));
    }
    // H_nh = H - (i/2) Σ γ L†L
    let cg = CompiledGenerator::compile(gen, Some(&loss.scale(C64::new(0.0, -0.5))), &sub)?;
    let jumps: Vec<SparseMatrix> = collapse
        .iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| SparseMatrix::from_operator(&c.operator, &sub, C64::new((c.rate * scale).sqrt(), 0.0)))
        .collect();
    let loss_norm: f64 = collapse
        .iter()
        .map(|c| c.rate * scale * (&c.operator.dagger() * &c.operator).norm())
        .sum();

    let mut y = sub.restrict_matrix(rho0.operator())?;
    let mut coeffs = Vec::new();
    let mut vals = vec![ZERO; cg.nnz()];
    let mut lr = vec![ZERO; n * n];
    let mut jump_out = vec![ZERO; n * n];
    let mut metrics = DriftMetrics::default();
    let (ttol, htol, floor) = (cfg.trace_tolerance, cfg.hermiticity_tolerance, cfg.eigenvalue_floor);
    let steps = integrate(
        cfg,
        omega_bound(gen) + loss_norm,
        &mut y,
        |t, x, out| {
            cg.assemble(t, &mut coeffs, &mut vals);
            // out = -i H_nh ρ
            cg.mul_mat(&vals, x, out);
            for o in out.iter_mut() {
                *o *= -I;
            }
            // out + out†
            for a in 0..n {
                for b in a..n {
                    let s = out[a * n + b] + out[b * n + a].conj();
                    out[a * n + b] = s;
                    out[b * n + a] = s.conj();
                }
            }
            for l in &jumps {
                // L ρ L† = L (L ρ)†
                l.mul_mat(x, &mut lr);
                for a in 0..n {
                    for b in a + 1..n {
                        let (u, v) = (lr[a * n + b], lr[b * n + a]);
                        lr[a * n + b] = v.conj();
                        lr[b * n + a] = u.conj();
                    }
                    lr[a * n + a] = lr[a * n + a].conj();
                }
                l.mul_mat(&lr, &mut jump_out);
                for a in 0..n {
                    for b in a..n {
                        let s = 0.5 * (jump_out[a * n + b] + jump_out[b * n + a].conj());
                        out[a * n + b] += s;
                        if a != b {
                            out[b * n + a] += s.conj();
                        }
                    }
                }
            }
        },
        |t, x| {
            let (trace, herm, min_eig) = physicality_of(x, n);
            metrics.time_ps = t;
            metrics.trace_drift = metrics.trace_drift.max(trace);
            metrics.hermiticity_drift = metrics.hermiticity_drift.max(herm);
            metrics.min_eigenvalue = metrics.min_eigenvalue.min(min_eig);
            if trace > ttol || herm > htol || min_eig < floor {
                return Err(Error::Integration {
                    detail: format!(
                        "density matrix left the physical set at t = {t} ps (trace {trace:.3e}, hermiticity {herm:.3e}, min eigenvalue {min_eig:.3e})"
                    ),
                    metrics,
                });
            }
            observe(
                t,
                &ReducedDensity {
                    subspace: &sub,
                    values: x,
                },
            )
        },
    )?;
    Ok((metrics, steps))
}

pub fn propagate_lindblad(
    gen: &Generator,
    collapse: &[Collapse],
    rho0: &DensityMatrix,
    cfg: &PropagationConfig,
) -> Result<DensityTrajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let (drift, steps) = propagate_lindblad_with(gen, collapse, rho0, cfg, &[], |t, rho| {
        times.push(t);
        states.push(rho.expand());
        Ok(())
    })?;
    Ok(DensityTrajectory {
        times,
        states,
        drift,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Coefficient;
    use crate::hilbert::{coherent_state, fidelity_trace, fock_annihilation, number_operator, ONE};

    fn displacement_generator(lambda: C64, n_max: usize) -> Generator {
        let a = fock_annihilation(n_max).unwrap();
        let mut g = Generator::new(n_max + 1, 1.0);
        g.push_with_conjugate(Coefficient::constant(lambda), a).unwrap();
        g
    }

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let g = Generator::new(4, 1.0);
        let psi = coherent_state(C64::new(0.3, 0.1), 3);
        let tr = propagate_state(&g, &psi, &PropagationConfig::new(5.0).with_dt(0.5)).unwrap();
        assert_eq!(tr.final_state(), &psi);
        assert_eq!(tr.times.len(), 11);
    }

    #[test]
    fn constant_drive_displaces_vacuum() {
        let n_max = 30;
        let lambda = C64::new(0.2, -0.1);
        let g = displacement_generator(lambda, n_max);
        let t = 2.0;
        let tr = propagate_state(&g, &StateVector::vacuum(n_max), &PropagationConfig::new(t)).unwrap();
        let expected = coherent_state(-I * lambda.conj() * t, n_max);
        let overlap = expected.inner(tr.final_state()).unwrap().norm_sqr();
        assert!(overlap > 1.0 - 1e-6, "{overlap}");
        assert!(tr.norm_drift < 1e-8);
    }

    #[test]
    fn guard_violation_is_config_error() {
        let g = displacement_generator(C64::new(1.0, 0.0), 4);
        let cfg = PropagationConfig::new(1.0).with_dt(0.5);
        assert!(matches!(
            propagate_state(&g, &StateVector::vacuum(4), &cfg),
            Err(Error::Config(_))
        ));
        let cfg = PropagationConfig::new(1.0).with_stride(0);
        assert!(matches!(cfg.resolve_steps(1.0), Err(Error::Config(_))));
    }

    #[test]
    fn adaptive_matches_fixed() {
        let g = displacement_generator(C64::new(0.3, 0.2), 12);
        let psi0 = StateVector::vacuum(12);
        let fixed = propagate_state(&g, &psi0, &PropagationConfig::new(3.0)).unwrap();
        let cfg = PropagationConfig::new(3.0)
            .with_method(Method::Rk4Adaptive)
            .with_stride(10);
        let adaptive = propagate_state(&g, &psi0, &cfg).unwrap();
        let ov = fixed.final_state().inner(adaptive.final_state()).unwrap().norm();
        assert!((ov - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_mode_decay() {
        let n_max = 3;
        let a = fock_annihilation(n_max).unwrap();
        let g = Generator::new(n_max + 1, 1.0);
        let gamma = 0.4;
        let mut one = StateVector::zeros(n_max + 1);
        one.amplitudes_mut()[1] = ONE;
        let rho0 = one.to_density();
        let cfg = PropagationConfig::new(2.0).with_dt(0.01).with_stride(50);
        let tr = propagate_lindblad(&g, &[Collapse { operator: a, rate: gamma }], &rho0, &cfg).unwrap();
        let num = number_operator(n_max).unwrap();
        for (t, rho) in tr.times.iter().zip(&tr.states) {
            let n = (rho.operator() * &num).trace().re;
            assert!((n - (-gamma * t).exp()).abs() < 1e-9, "t={t}: {n}");
        }
    }

    #[test]
    fn vacuum_is_stationary_and_pure_limit_agrees() {
        let n_max = 6;
        let a = fock_annihilation(n_max).unwrap();
        let g0 = Generator::new(n_max + 1, 1.0);
        let vac = StateVector::vacuum(n_max).to_density();
        let tr = propagate_lindblad(
            &g0,
            &[Collapse { operator: a.clone(), rate: 1.0 }],
            &vac,
            &PropagationConfig::new(1.0).with_dt(0.01),
        )
        .unwrap();
        assert_eq!(tr.final_state().operator(), vac.operator());

        let g = displacement_generator(C64::new(0.25, 0.05), n_max);
        let cfg = PropagationConfig::new(1.5);
        let psi = propagate_state(&g, &StateVector::vacuum(n_max), &cfg).unwrap();
        let rho = propagate_lindblad(&g, &[Collapse { operator: a, rate: 0.0 }], &vac, &cfg).unwrap();
        let f = fidelity_trace(rho.final_state(), &psi.final_state().to_density()).unwrap();
        assert!((f - 1.0).abs() < 1e-8);
    }
}
