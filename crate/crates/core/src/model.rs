//! Physical parameters and the three Hamiltonians of the protocol: the full
//! interaction-picture Hamiltonian on normal modes, the first effective
//! (adiabatically eliminated) Hamiltonian, and the second, dispersive one.
//!
//! Energies are in meV and times in ps. All generators returned here carry
//! `rate_scale = 1/ħ`, so `Generator::at` yields meV while the propagators
//! see rad/ps.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Coefficient, Generator};
use crate::hilbert::{
    embed, fock_annihilation, qd_projector, qd_sigma_plus, ComplexOperator, QdLevel, Site,
    SpaceLayout,
};

/// ħ in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.6582119569;

/// Angular frequency (rad/ps) of an energy in meV.
pub fn angular_frequency(energy_mev: f64) -> f64 {
    energy_mev / HBAR_MEV_PS
}

/// `ħ/E` in ps.
pub fn hbar_over(energy_mev: f64) -> f64 {
    HBAR_MEV_PS / energy_mev
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dot {
    A,
    B,
}

impl Dot {
    pub const BOTH: [Dot; 2] = [Dot::A, Dot::B];

    pub fn index(self) -> usize {
        match self {
            Dot::A => 0,
            Dot::B => 1,
        }
    }

    pub fn site(self) -> Site {
        match self {
            Dot::A => Site::QdA,
            Dot::B => Site::QdB,
        }
    }
}

/// Normal mode `c₁ = (a_A - a_B)/√2` (shifted by `+ν`) or
/// `c₂ = (a_A + a_B)/√2` (shifted by `-ν`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormalMode {
    C1,
    C2,
}

impl NormalMode {
    pub const BOTH: [NormalMode; 2] = [NormalMode::C1, NormalMode::C2];

    pub fn index(self) -> usize {
        match self {
            NormalMode::C1 => 0,
            NormalMode::C2 => 1,
        }
    }

    pub fn site(self) -> Site {
        match self {
            NormalMode::C1 => Site::Mode1,
            NormalMode::C2 => Site::Mode2,
        }
    }
}

/// Per-dot couplings and drives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotParams {
    /// Dot–cavity coupling (meV).
    pub g: f64,
    /// Rabi frequency of the drive detuned by `+Δ` (meV).
    pub omega: C64,
    /// Rabi frequency of the drive detuned by `-Δ′` (meV).
    pub omega_prime: C64,
    /// Δ (meV).
    pub detuning: f64,
    /// Δ′ (meV).
    pub detuning_prime: f64,
    /// Cavity decay rate (meV).
    pub gamma: f64,
}

impl DotParams {
    /// Symmetric drive pair (`Ω′ = Ω`, `Δ′ = Δ`) with no decay.
    pub fn symmetric(g: f64, omega: f64, detuning: f64) -> Self {
        Self {
            g,
            omega: C64::new(omega, 0.0),
            omega_prime: C64::new(omega, 0.0),
            detuning,
            detuning_prime: detuning,
            gamma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub dot_a: DotParams,
    pub dot_b: DotParams,
    /// Cavity–laser detuning offset δ (meV); the cavity detuning is `Δ_j + δ`.
    pub delta: f64,
    /// Cavity–cavity hopping ν (meV).
    pub nu: f64,
    /// Fock cutoff per normal mode.
    pub n_max: usize,
}

/// Names accepted by [`SystemParams::get`] and [`SystemParams::set`].
pub const PARAM_NAMES: &[&str] = &[
    "g_a",
    "g_b",
    "omega_a",
    "omega_b",
    "omega_prime_a",
    "omega_prime_b",
    "detuning_a",
    "detuning_b",
    "detuning_prime_a",
    "detuning_prime_b",
    "delta",
    "nu",
    "gamma_a",
    "gamma_b",
    "gamma",
    "n_max",
];

impl SystemParams {
    pub fn dot(&self, dot: Dot) -> &DotParams {
        match dot {
            Dot::A => &self.dot_a,
            Dot::B => &self.dot_b,
        }
    }

    pub fn dot_mut(&mut self, dot: Dot) -> &mut DotParams {
        match dot {
            Dot::A => &mut self.dot_a,
            Dot::B => &mut self.dot_b,
        }
    }

    /// `η₁ = δ + ν`.
    pub fn eta1(&self) -> f64 {
        self.delta + self.nu
    }

    /// `η₂ = δ - ν`.
    pub fn eta2(&self) -> f64 {
        self.delta - self.nu
    }

    /// Sets δ and ν from the two normal-mode detunings.
    pub fn set_mode_detunings(&mut self, eta1: f64, eta2: f64) {
        self.delta = 0.5 * (eta1 + eta2);
        self.nu = 0.5 * (eta1 - eta2);
    }

    /// Sets `γ_A = γ_B = gamma`.
    pub fn set_gamma(&mut self, gamma: f64) {
        self.dot_a.gamma = gamma;
        self.dot_b.gamma = gamma;
    }

    /// Multiplies every Rabi frequency by `s`.
    pub fn scale_drives(&mut self, s: f64) {
        for dot in Dot::BOTH {
            let d = self.dot_mut(dot);
            d.omega *= s;
            d.omega_prime *= s;
        }
    }

    /// Multiplies every laser detuning by `s`.
    pub fn scale_detunings(&mut self, s: f64) {
        for dot in Dot::BOTH {
            let d = self.dot_mut(dot);
            d.detuning *= s;
            d.detuning_prime *= s;
        }
    }

    /// Hard invariants: `ν ≥ 0`, `γ_j ≥ 0`, `n_max ≥ 2`, finite entries.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) {
            return Err(Error::invalid(format!("hopping nu must be >= 0, got {}", self.nu)));
        }
        for dot in Dot::BOTH {
            let d = self.dot(dot);
            if !(d.gamma >= 0.0) {
                return Err(Error::invalid(format!(
                    "decay rate of dot {dot:?} must be >= 0, got {}",
                    d.gamma
                )));
            }
            let finite = [d.g, d.detuning, d.detuning_prime, d.gamma]
                .iter()
                .all(|x| x.is_finite())
                && d.omega.is_finite()
                && d.omega_prime.is_finite();
            if !finite {
                return Err(Error::invalid(format!("dot {dot:?} has non-finite parameters")));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        if self.n_max < 2 {
            return Err(Error::invalid(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        Ok(())
    }

    /// Soft conditions under which the first effective Hamiltonian holds.
    pub fn check_validity(&self, thresholds: &ValidityThresholds) -> ValidityReport {
        let mut checks = Vec::new();
        for dot in Dot::BOTH {
            let d = self.dot(dot);
            let scale = d.detuning.abs().max(d.detuning_prime.abs()).max(f64::MIN_POSITIVE);
            checks.push(ValidityCheck {
                dot,
                condition: ValidityCondition::EqualDetunings,
                passed: (d.detuning - d.detuning_prime).abs() <= 1e-12 * scale,
                value: d.detuning - d.detuning_prime,
            });
            let oscale = d.omega.norm().max(d.omega_prime.norm()).max(f64::MIN_POSITIVE);
            checks.push(ValidityCheck {
                dot,
                condition: ValidityCondition::EqualRabiMagnitudes,
                passed: (d.omega.norm() - d.omega_prime.norm()).abs() <= 1e-12 * oscale,
                value: d.omega.norm() - d.omega_prime.norm(),
            });
            let needed = thresholds.detuning_ratio * d.g.abs().max(d.omega.norm());
            let ratio = d.detuning.abs().min(d.detuning_prime.abs())
                / d.g.abs().max(d.omega.norm()).max(d.omega_prime.norm());
            checks.push(ValidityCheck {
                dot,
                condition: ValidityCondition::LargeDetuning,
                passed: d.detuning.abs() >= needed && d.detuning_prime.abs() >= needed,
                value: ratio,
            });
            checks.push(ValidityCheck {
                dot,
                condition: ValidityCondition::StrongDrive,
                passed: d.omega.norm() >= thresholds.drive_ratio * d.g.abs(),
                value: d.omega.norm() / d.g.abs(),
            });
        }
        ValidityReport { checks }
    }
}

impl SystemParams {
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "g_a" => self.dot_a.g,
            "g_b" => self.dot_b.g,
            "omega_a" => self.dot_a.omega.norm(),
            "omega_b" => self.dot_b.omega.norm(),
            "omega_prime_a" => self.dot_a.omega_prime.norm(),
            "omega_prime_b" => self.dot_b.omega_prime.norm(),
            "detuning_a" => self.dot_a.detuning,
            "detuning_b" => self.dot_b.detuning,
            "detuning_prime_a" => self.dot_a.detuning_prime,
            "detuning_prime_b" => self.dot_b.detuning_prime,
            "delta" => self.delta,
            "nu" => self.nu,
            "gamma_a" | "gamma" => self.dot_a.gamma,
            "gamma_b" => self.dot_b.gamma,
            "n_max" => self.n_max as f64,
            other => return Err(Error::invalid(format!("unknown parameter '{other}'"))),
        })
    }

    /// Sets a named field. Rabi frequencies keep their phase; `gamma` sets
    /// both decay rates.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        fn set_modulus(z: &mut C64, value: f64) {
            let arg = if *z == C64::new(0.0, 0.0) { 0.0 } else { z.arg() };
            *z = C64::from_polar(value, arg);
        }
        match name {
            "g_a" => self.dot_a.g = value,
            "g_b" => self.dot_b.g = value,
            "omega_a" => set_modulus(&mut self.dot_a.omega, value),
            "omega_b" => set_modulus(&mut self.dot_b.omega, value),
            "omega_prime_a" => set_modulus(&mut self.dot_a.omega_prime, value),
            "omega_prime_b" => set_modulus(&mut self.dot_b.omega_prime, value),
            "detuning_a" => self.dot_a.detuning = value,
            "detuning_b" => self.dot_b.detuning = value,
            "detuning_prime_a" => self.dot_a.detuning_prime = value,
            "detuning_prime_b" => self.dot_b.detuning_prime = value,
            "delta" => self.delta = value,
            "nu" => self.nu = value,
            "gamma_a" => self.dot_a.gamma = value,
            "gamma_b" => self.dot_b.gamma = value,
            "gamma" => self.set_gamma(value),
            "n_max" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("n_max must be a whole number, got {value}")));
                }
                self.n_max = value as usize
            }
            other => return Err(Error::invalid(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityThresholds {
    /// R in `|Δ_j| ≥ R·max(|g_j|, |Ω_j|)`.
    pub detuning_ratio: f64,
    /// r in `|Ω_j| ≥ r·|g_j|`.
    pub drive_ratio: f64,
}

impl Default for ValidityThresholds {
    fn default() -> Self {
        Self {
            detuning_ratio: 10.0,
            drive_ratio: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ValidityCondition {
    EqualDetunings,
    EqualRabiMagnitudes,
    LargeDetuning,
    StrongDrive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityCheck {
    pub dot: Dot,
    pub condition: ValidityCondition,
    pub passed: bool,
    /// Difference for equalities, achieved ratio for inequalities.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub checks: Vec<ValidityCheck>,
}

impl ValidityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Cavity–drive couplings induced by the virtually excited dots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveCouplings {
    /// `λ_{j,m}` indexed `[dot][mode]` (meV).
    pub lambda: [[C64; 2]; 2],
    /// `η_m` (meV).
    pub eta: [f64; 2],
}

impl EffectiveCouplings {
    pub fn from_parts(lambda: [[C64; 2]; 2], eta: [f64; 2]) -> Result<Self> {
        for (m, e) in eta.iter().enumerate() {
            if *e == 0.0 || !e.is_finite() {
                return Err(Error::Resonance {
                    mode: m + 1,
                    delta: 0.5 * (eta[0] + eta[1]),
                    nu: 0.5 * (eta[0] - eta[1]),
                });
            }
        }
        Ok(Self { lambda, eta })
    }

    pub fn lambda(&self, dot: Dot, mode: NormalMode) -> C64 {
        self.lambda[dot.index()][mode.index()]
    }

    pub fn eta(&self, mode: NormalMode) -> f64 {
        self.eta[mode.index()]
    }

    /// `λ_{A,m} λ*_{B,m}`.
    pub fn pair_product(&self, mode: NormalMode) -> C64 {
        self.lambda(Dot::A, mode) * self.lambda(Dot::B, mode).conj()
    }

    /// `ϑ_m = arg(λ_{A,m} λ*_{B,m})`.
    pub fn theta(&self, mode: NormalMode) -> f64 {
        self.pair_product(mode).arg()
    }

    /// `μ_m = |λ_{A,m} λ_{B,m}| / η_m`.
    pub fn mu(&self, mode: NormalMode) -> f64 {
        self.pair_product(mode).norm() / self.eta(mode)
    }

    /// Smallest `|η_m| / |λ_{j,m}|` over all dots and modes.
    pub fn dispersive_ratio(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for mode in NormalMode::BOTH {
            for dot in Dot::BOTH {
                let l = self.lambda(dot, mode).norm();
                if l > 0.0 {
                    worst = worst.min(self.eta(mode).abs() / l);
                }
            }
        }
        worst
    }

    /// Relative mismatch `||λ_{A,1}λ_{B,1}| - |λ_{A,2}λ_{B,2}|| / max`.
    pub fn balance_mismatch(&self) -> f64 {
        let p1 = self.pair_product(NormalMode::C1).norm();
        let p2 = self.pair_product(NormalMode::C2).norm();
        let scale = p1.max(p2);
        if scale == 0.0 {
            0.0
        } else {
            (p1 - p2).abs() / scale
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for row in out.lambda.iter_mut() {
            for l in row.iter_mut() {
                *l *= s;
            }
        }
        out
    }
}

fn resonance_guard(value: f64, scale: f64) -> bool {
    value == 0.0 || value.abs() <= 1e-12 * scale
}

/// Couplings of the first effective Hamiltonian. Every `λ_{B,m}` scales with
/// `g_B Ω_B*`, including `λ_{B,1}`.
pub fn effective_couplings(p: &SystemParams) -> Result<EffectiveCouplings> {
    let scale = p.delta.abs().max(p.nu.abs());
    let eta = [p.eta1(), p.eta2()];
    for (m, e) in eta.iter().enumerate() {
        if resonance_guard(*e, scale) {
            return Err(Error::Resonance {
                mode: m + 1,
                delta: p.delta,
                nu: p.nu,
            });
        }
    }
    let validity = p.check_validity(&ValidityThresholds::default());
    for failure in validity.failures() {
        log::debug!("effective model condition not met: {failure:?}");
    }

    let mut lambda = [[C64::new(0.0, 0.0); 2]; 2];
    for dot in Dot::BOTH {
        let d = p.dot(dot);
        if d.detuning == 0.0 {
            return Err(Error::invalid(format!("dot {dot:?} has zero laser detuning")));
        }
        let prefactor = d.g * d.omega.conj() / 4.0;
        for mode in NormalMode::BOTH {
            let cavity_detuning = d.detuning + eta[mode.index()];
            if cavity_detuning == 0.0 {
                return Err(Error::invalid(format!(
                    "dot {dot:?} cavity detuning vanishes for mode {mode:?}"
                )));
            }
            // c₁ enters dot B's coupling as -c₁ because a_B = (c₂ - c₁)/√2
            let sign = if dot == Dot::B && mode == NormalMode::C1 { -1.0 } else { 1.0 };
            lambda[dot.index()][mode.index()] =
                prefactor * sign * (1.0 / cavity_detuning + 1.0 / d.detuning);
        }
    }
    Ok(EffectiveCouplings { lambda, eta })
}

/// Embedded operators shared by the Hamiltonian builders.
#[derive(Clone, Debug)]
pub struct ModelOperators {
    pub layout: SpaceLayout,
    pub sigma_plus: [ComplexOperator; 2],
    pub ground_projector: [ComplexOperator; 2],
    pub mode: [ComplexOperator; 2],
}

impl ModelOperators {
    pub fn new(layout: &SpaceLayout) -> Result<Self> {
        let sp = qd_sigma_plus();
        let pg = qd_projector(QdLevel::G);
        let c = fock_annihilation(layout.n_max())?;
        Ok(Self {
            layout: *layout,
            sigma_plus: [
                embed(&sp, Site::QdA, layout)?,
                embed(&sp, Site::QdB, layout)?,
            ],
            ground_projector: [
                embed(&pg, Site::QdA, layout)?,
                embed(&pg, Site::QdB, layout)?,
            ],
            mode: [
                embed(&c, Site::Mode1, layout)?,
                embed(&c, Site::Mode2, layout)?,
            ],
        })
    }

    /// Bare cavity annihilation operators `a_A = (c₁+c₂)/√2`, `a_B = (c₂-c₁)/√2`.
    pub fn bare_mode(&self, dot: Dot) -> ComplexOperator {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        match dot {
            Dot::A => (&self.mode[0] + &self.mode[1]).scale(s),
            Dot::B => (&self.mode[1] - &self.mode[0]).scale(s),
        }
    }
}

/// Full interaction-picture Hamiltonian on normal modes.
///
/// Per dot: `[½g(±c₁e^{i(Δ+δ+ν)t} + c₂e^{i(Δ+δ-ν)t}) + Ωe^{iΔt} + Ω′e^{-iΔ′t}]σ⁺ + h.c.`
/// with the minus sign on `c₁` for dot B.
pub fn interaction_generator(p: &SystemParams, layout: &SpaceLayout) -> Result<Generator> {
    let ops = ModelOperators::new(layout)?;
    let mut gen = Generator::new(layout.dim(), 1.0 / HBAR_MEV_PS);
    for dot in Dot::BOTH {
        let d = p.dot(dot);
        let sp = &ops.sigma_plus[dot.index()];
        for mode in NormalMode::BOTH {
            let (sign, shift) = match mode {
                NormalMode::C1 => (if dot == Dot::B { -1.0 } else { 1.0 }, p.nu),
                NormalMode::C2 => (1.0, -p.nu),
            };
            let freq = angular_frequency(d.detuning + p.delta + shift);
            let op = sp * &ops.mode[mode.index()];
            gen.push_with_conjugate(
                Coefficient::oscillating(C64::new(0.5 * d.g * sign, 0.0), freq),
                op,
            )?;
        }
        gen.push_with_conjugate(
            Coefficient::oscillating(d.omega, angular_frequency(d.detuning)),
            sp.clone(),
        )?;
        gen.push_with_conjugate(
            Coefficient::oscillating(d.omega_prime, -angular_frequency(d.detuning_prime)),
            sp.clone(),
        )?;
    }
    Ok(gen)
}

/// `H_I(t)` in meV.
pub fn hamiltonian_interaction(
    p: &SystemParams,
    t_ps: f64,
    layout: &SpaceLayout,
) -> Result<ComplexOperator> {
    Ok(interaction_generator(p, layout)?.at(t_ps))
}

/// First effective Hamiltonian
/// `-Σ_m Σ_j (λ_{j,m} c_m e^{iη_m t} + h.c.) |g⟩_j⟨g|`.
pub fn effective_generator(c: &EffectiveCouplings, layout: &SpaceLayout) -> Result<Generator> {
    let ops = ModelOperators::new(layout)?;
    let mut gen = Generator::new(layout.dim(), 1.0 / HBAR_MEV_PS);
    for mode in NormalMode::BOTH {
        let freq = angular_frequency(c.eta(mode));
        for dot in Dot::BOTH {
            let op = &ops.ground_projector[dot.index()] * &ops.mode[mode.index()];
            gen.push_with_conjugate(Coefficient::oscillating(-c.lambda(dot, mode), freq), op)?;
        }
    }
    Ok(gen)
}

pub fn hamiltonian_effective_1(
    c: &EffectiveCouplings,
    t_ps: f64,
    layout: &SpaceLayout,
) -> Result<ComplexOperator> {
    Ok(effective_generator(c, layout)?.at(t_ps))
}

/// Default `R₂` in the dispersive check `|η_m| ≥ R₂·|λ_{j,m}|`.
pub const DISPERSIVE_RATIO: f64 = 10.0;

/// Second effective Hamiltonian: Stark shifts
/// `Σ |λ_{j,m}|²/η_m |g⟩_j⟨g| + 2Σ μ_m cos ϑ_m |gg⟩⟨gg|`, time independent.
pub fn dispersive_generator(c: &EffectiveCouplings, layout: &SpaceLayout) -> Result<Generator> {
    if c.dispersive_ratio() < DISPERSIVE_RATIO {
        log::warn!(
            "dispersive condition weak: min |eta|/|lambda| = {:.3} < {DISPERSIVE_RATIO}",
            c.dispersive_ratio()
        );
    }
    let ops = ModelOperators::new(layout)?;
    let mut gen = Generator::new(layout.dim(), 1.0 / HBAR_MEV_PS);
    for dot in Dot::BOTH {
        let shift: f64 = NormalMode::BOTH
            .iter()
            .map(|&m| c.lambda(dot, m).norm_sqr() / c.eta(m))
            .sum();
        gen.push(
            Coefficient::constant(C64::new(shift, 0.0)),
            ops.ground_projector[dot.index()].clone(),
        )?;
    }
    let cz: f64 = NormalMode::BOTH
        .iter()
        .map(|&m| 2.0 * c.mu(m) * c.theta(m).cos())
        .sum();
    gen.push(
        Coefficient::constant(C64::new(cz, 0.0)),
        &ops.ground_projector[0] * &ops.ground_projector[1],
    )?;
    Ok(gen)
}

pub fn hamiltonian_effective_2(
    c: &EffectiveCouplings,
    layout: &SpaceLayout,
) -> Result<ComplexOperator> {
    Ok(dispersive_generator(c, layout)?.at(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseBasis {
    Bare,
    Normal,
}

/// Jump operator with its rate in meV.
#[derive(Clone, Debug, PartialEq)]
pub struct Collapse {
    pub operator: ComplexOperator,
    pub rate: f64,
}

/// Cavity-loss channels `γ_j D[a_j]`.
///
/// `Bare` builds `a_j` from the bare-mode ladder operators; `Normal` writes
/// them as `a_A = (c₁+c₂)/√2`, `a_B = (c₂-c₁)/√2`. The layout stores the
/// normal modes, so both bases give identical matrices here; the distinction
/// matters to callers that compare the two dissipators.
pub fn collapse_operators(
    p: &SystemParams,
    layout: &SpaceLayout,
    basis: CollapseBasis,
) -> Result<Vec<Collapse>> {
    let ops = ModelOperators::new(layout)?;
    let mut out = Vec::new();
    for dot in Dot::BOTH {
        let rate = p.dot(dot).gamma;
        if rate < 0.0 {
            return Err(Error::invalid("decay rates must be nonnegative"));
        }
        if rate == 0.0 {
            continue;
        }
        let operator = match basis {
            CollapseBasis::Bare => ops.bare_mode(dot),
            CollapseBasis::Normal => {
                let s = C64::new(FRAC_1_SQRT_2, 0.0);
                let (c1, c2) = (&ops.mode[0], &ops.mode[1]);
                match dot {
                    Dot::A => (c1 + c2).scale(s),
                    Dot::B => (c2 - c1).scale(s),
                }
            }
        };
        out.push(Collapse { operator, rate });
    }
    Ok(out)
}

/// Equal-rate dissipator written on the normal modes: `γ(D[c₁] + D[c₂])`.
pub fn normal_mode_channels(gamma: f64, layout: &SpaceLayout) -> Result<Vec<Collapse>> {
    let ops = ModelOperators::new(layout)?;
    Ok(ops
        .mode
        .iter()
        .filter(|_| gamma > 0.0)
        .map(|c| Collapse {
            operator: c.clone(),
            rate: gamma,
        })
        .collect())
}

/// Laser detuning `Δ_B` (opposite in sign to `Δ_A`) at which
/// `|λ_{A,1}λ_{B,1}| = |λ_{A,2}λ_{B,2}|` holds exactly.
pub fn balancing_detuning_b(p: &SystemParams) -> Result<f64> {
    let target = {
        let c = effective_couplings(p)?;
        c.lambda(Dot::A, NormalMode::C2).norm() / c.lambda(Dot::A, NormalMode::C1).norm()
    };
    let (eta1, eta2) = (p.eta1(), p.eta2());
    let sign = -p.dot_a.detuning.signum();
    // |λ_{B,1}| / |λ_{B,2}| as a function of the detuning magnitude.
    let ratio = |mag: f64| {
        let d = sign * mag;
        ((1.0 / (d + eta1) + 1.0 / d) / (1.0 / (d + eta2) + 1.0 / d)).abs()
    };
    let mut lo = 1.5 * eta1.abs().max(eta2.abs()).max(1e-9);
    let mut hi = 1e6 * p.dot_a.detuning.abs().max(lo);
    let f = |mag: f64| ratio(mag) - target;
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::Precondition(format!(
            "balance not reachable by tuning detuning_b (ratio range {:.6}..{:.6}, target {target:.6})",
            ratio(lo),
            ratio(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    Ok(sign * 0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::QdLevel::{E, F, G};

    pub(crate) fn sample_params() -> SystemParams {
        SystemParams {
            dot_a: DotParams::symmetric(0.1, 1.0, 10.0),
            dot_b: DotParams::symmetric(0.08, 1.25, -10.0),
            delta: 0.08,
            nu: 0.04,
            n_max: 2,
        }
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn coupling_table_arithmetic() {
        let mut p = sample_params();
        p.dot_a = DotParams::symmetric(0.1, 1.0, 10.0);
        p.delta = 10.3;
        p.nu = 10.0;
        let cpl = effective_couplings(&p).unwrap();
        let expected = 0.1 * 1.0 / 4.0 * (1.0 / 30.3 + 1.0 / 10.0);
        assert!((cpl.lambda(Dot::A, NormalMode::C1) - c(expected)).norm() < 1e-15);
        assert!((cpl.eta[0] - 20.3).abs() < 1e-12);
        assert!((cpl.eta[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_hopping_degenerates_table() {
        let mut p = sample_params();
        p.nu = 0.0;
        let cpl = effective_couplings(&p).unwrap();
        assert_eq!(cpl.eta[0], cpl.eta[1]);
        assert_eq!(cpl.lambda(Dot::A, NormalMode::C1), cpl.lambda(Dot::A, NormalMode::C2));
    }

    #[test]
    fn positive_inputs_give_opposite_pair_phases() {
        let mut p = sample_params();
        p.dot_b = DotParams::symmetric(0.08, 1.25, 12.0);
        let cpl = effective_couplings(&p).unwrap();
        assert!(cpl.lambda(Dot::B, NormalMode::C1).re < 0.0);
        assert!((cpl.theta(NormalMode::C1).abs() - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(cpl.theta(NormalMode::C2), 0.0);
    }

    #[test]
    fn resonance_is_rejected() {
        let mut p = sample_params();
        p.nu = p.delta;
        assert!(matches!(
            effective_couplings(&p),
            Err(Error::Resonance { mode: 2, .. })
        ));
        p.delta = -p.nu;
        assert!(matches!(
            effective_couplings(&p),
            Err(Error::Resonance { mode: 1, .. })
        ));
    }

    #[test]
    fn validity_checker_reports_each_condition() {
        let mut p = sample_params();
        let report = p.check_validity(&ValidityThresholds::default());
        // dot B: |Δ| = 10 < 10·1.25
        let failed: Vec<_> = report.failures().map(|c| (c.dot, c.condition)).collect();
        assert_eq!(failed, vec![(Dot::B, ValidityCondition::LargeDetuning)]);
        p.dot_a.detuning_prime = 11.0;
        p.dot_a.omega_prime = c(0.5);
        let report = p.check_validity(&ValidityThresholds::default());
        assert!(report
            .failures()
            .any(|c| c.dot == Dot::A && c.condition == ValidityCondition::EqualDetunings));
        assert!(report
            .failures()
            .any(|c| c.dot == Dot::A && c.condition == ValidityCondition::EqualRabiMagnitudes));
    }

    #[test]
    fn hard_invariants() {
        let mut p = sample_params();
        assert!(p.validate().is_ok());
        p.nu = -0.1;
        assert!(p.validate().is_err());
        let mut p = sample_params();
        p.n_max = 1;
        assert!(p.validate().is_err());
        let mut p = sample_params();
        p.dot_b.gamma = -1e-3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn named_fields_roundtrip() {
        let mut p = sample_params();
        for name in PARAM_NAMES {
            let v = if *name == "n_max" { 5.0 } else { 0.123 };
            p.set(name, v).unwrap();
            assert_eq!(p.get(name).unwrap(), v, "{name}");
        }
        assert!(p.set("bogus", 1.0).is_err());
        assert!(p.get("bogus").is_err());
    }

    #[test]
    fn interaction_hamiltonian_zero_when_uncoupled() {
        let layout = SpaceLayout::new(2).unwrap();
        let mut p = sample_params();
        for dot in Dot::BOTH {
            let d = p.dot_mut(dot);
            d.g = 0.0;
            d.omega = c(0.0);
            d.omega_prime = c(0.0);
        }
        let h = hamiltonian_interaction(&p, 3.7, &layout).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn interaction_hamiltonian_drive_matrix_element() {
        let layout = SpaceLayout::new(2).unwrap();
        let mut p = sample_params();
        p.dot_a.omega = C64::new(0.7, 0.2);
        p.dot_a.omega_prime = C64::new(-0.3, 0.65);
        p.dot_a.detuning_prime = 9.5;
        let t = 1.234;
        let h = hamiltonian_interaction(&p, t, &layout).unwrap();
        let row = layout.index(E, F, 0, 0);
        let col = layout.index(G, F, 0, 0);
        let d = &p.dot_a;
        let expected = d.omega * C64::from_polar(1.0, d.detuning * t / HBAR_MEV_PS)
            + d.omega_prime * C64::from_polar(1.0, -d.detuning_prime * t / HBAR_MEV_PS);
        assert!((h.get(row, col) - expected).norm() < 1e-14);
        assert!(h.hermiticity_error() < 1e-12);
    }

    #[test]
    fn interaction_hamiltonian_cavity_element_signs() {
        let layout = SpaceLayout::new(2).unwrap();
        let p = sample_params();
        let t = 0.0;
        let h = hamiltonian_interaction(&p, t, &layout).unwrap();
        // ⟨f,e;1,0| ... no: σ⁺_B c₁ maps |f,g;1,0⟩ → |f,e;0,0⟩ with -½g_B
        let el = h.get(layout.index(F, E, 0, 0), layout.index(F, G, 1, 0));
        assert!((el - c(-0.5 * p.dot_b.g)).norm() < 1e-15);
        let el = h.get(layout.index(E, F, 0, 0), layout.index(G, F, 0, 1));
        assert!((el - c(0.5 * p.dot_a.g)).norm() < 1e-15);
    }

    #[test]
    fn effective_hamiltonian_block_structure() {
        let layout = SpaceLayout::new(2).unwrap();
        let cpl = effective_couplings(&sample_params()).unwrap();
        let h = hamiltonian_effective_1(&cpl, 17.0, &layout).unwrap();
        assert!(h.hermiticity_error() < 1e-15);
        let cav = layout.cavity_dim();
        for i in 0..layout.dim() {
            for j in 0..layout.dim() {
                let (a1, b1, _, _) = layout.decompose(i);
                let (a2, b2, _, _) = layout.decompose(j);
                let v = h.get(i, j);
                if (a1, b1) != (a2, b2) {
                    assert_eq!(v, c(0.0));
                }
                if (a1, b1) == (F, F) {
                    assert_eq!(v, c(0.0));
                }
            }
        }
        // |f g⟩ block carries only dot B's couplings
        let off = layout.index(F, G, 0, 0);
        let vac_to_one = h.get(off + layout.fock_dim(), off);
        let t = 17.0;
        let expected = -cpl.lambda(Dot::B, NormalMode::C1).conj()
            * C64::from_polar(1.0, -cpl.eta[0] * t / HBAR_MEV_PS);
        assert!((vac_to_one - expected).norm() < 1e-15);
        let _ = cav;
    }

    #[test]
    fn dispersive_hamiltonian_is_diagonal() {
        let layout = SpaceLayout::new(2).unwrap();
        let cpl = effective_couplings(&sample_params()).unwrap();
        let h = hamiltonian_effective_2(&cpl, &layout).unwrap();
        assert_eq!(h.off_diagonal_max(), 0.0);
        assert_eq!(h.get(0, 0), c(0.0));
        let gg = layout.index(G, G, 1, 2);
        let expected: f64 = NormalMode::BOTH
            .iter()
            .map(|&m| {
                (cpl.lambda(Dot::A, m).norm_sqr() + cpl.lambda(Dot::B, m).norm_sqr()) / cpl.eta(m)
                    + 2.0 * cpl.mu(m) * cpl.theta(m).cos()
            })
            .sum();
        assert!((h.get(gg, gg).re - expected).abs() < 1e-18);
    }

    #[test]
    fn collapse_rates() {
        let layout = SpaceLayout::new(2).unwrap();
        let mut p = sample_params();
        assert!(collapse_operators(&p, &layout, CollapseBasis::Bare).unwrap().is_empty());
        p.set_gamma(0.002);
        let normal = collapse_operators(&p, &layout, CollapseBasis::Normal).unwrap();
        assert_eq!(normal.len(), 2);
        assert!(normal.iter().all(|c| c.rate == 0.002));
        let ops = ModelOperators::new(&layout).unwrap();
        assert_eq!(normal[0].operator, ops.bare_mode(Dot::A));
        assert_eq!(normal_mode_channels(0.002, &layout).unwrap()[1].operator, ops.mode[1]);
        assert!(normal_mode_channels(0.0, &layout).unwrap().is_empty());
    }

    #[test]
    fn balancing_detuning_balances() {
        let mut p = sample_params();
        p.set_mode_detunings(2.03, 0.03);
        let db = balancing_detuning_b(&p).unwrap();
        assert!(db < 0.0);
        p.dot_b.detuning = db;
        p.dot_b.detuning_prime = db;
        let cpl = effective_couplings(&p).unwrap();
        assert!(cpl.balance_mismatch() < 1e-12, "{}", cpl.balance_mismatch());
    }
}
