//! Executes an [`ExperimentSpec`] and writes its tables and manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::draws::random_params;
use super::presets::{preset, Preset};
use super::spec::{AxisUnit, ExperimentKind, ExperimentSpec, SpecError, SweepAxis};
use super::table::{report_units, Column, ResultTable};
use crate::dynamics::{
    compare_models, default_phase_guard, ideal_gate, run_gate_simulation, run_gate_simulation_with,
    ModelLevel, PropagationConfig, SimulationOptions, FOCK_TAIL_TARGET,
};
use crate::error::Error;
use crate::model::{
    effective_couplings, Dot, EffectiveCouplings, NormalMode, SystemParams, ValidityThresholds,
    DISPERSIVE_RATIO, PARAM_NAMES,
};
use crate::phases::{
    alpha_trajectory, effective_decay_time, gate_time, max_displacement, operation_time_surface,
    simplified_operation_time, theta_simplified, tune_for_pi_phase, BranchLabel, GateSchedule,
    TuneOptions, TunedGate, TuningKnob, DEFAULT_BALANCE_TOL, DEFAULT_COMMENSURATION_TOL,
    DEFAULT_MAX_K, PI_TUNING_TOL,
};

pub const TOOL_NAME: &str = "ccgate";
/// Version of the CSV and manifest layout.
pub const FORMAT_VERSION: u32 = 1;
/// Reference fidelities `(γ/g_A, F)` for the best fig3 curve.
pub const FIG3_REFERENCE: [(f64, f64); 2] = [(0.01, 0.983), (0.02, 0.968)];
pub const FIG3_BAND: f64 = 0.010;
/// Reference longest operation time of the fig3 family (ns).
pub const REFERENCE_LONGEST_T0_NS: f64 = 13.5;
pub const EFFECTIVE_PHASE_TOL: f64 = 1e-3;
pub const FULL_PHASE_TOL: f64 = 5e-2;
pub const STARK_IDENTITY_TOL: f64 = 1e-10;
pub const DEFAULT_RATIOS: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Physics(#[from] Error),
}

impl From<SpecError> for RunError {
    fn from(e: SpecError) -> Self {
        RunError::Spec(e.0)
    }
}

impl RunError {
    /// 2 parse, 3 physics precondition, 4 integration, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Spec(_) => 2,
            RunError::Io(_) => 1,
            RunError::Physics(e) => match e {
                Error::Integration { .. } | Error::Numerical(_) | Error::Config(_) => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub tables: Vec<ResultTable>,
    pub manifest: Value,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Parses `spec_path`, runs it, and writes `<stem>_<table>.csv` plus
/// `<stem>_manifest.json` into `out_dir`. Nothing is written on failure.
pub fn run(spec_path: &Path, out_dir: &Path, preset_override: Option<&str>) -> Result<Vec<PathBuf>, RunError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| RunError::Spec(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec = ExperimentSpec::parse(&text)?;
    if let Some(name) = preset_override {
        spec.preset = Some(name.to_string());
    }
    let out = execute(&spec)?;
    write_outputs(&out, out_dir, &spec.output_stem())
}

pub fn output_paths(out: &RunOutput, dir: &Path, stem: &str) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = out
        .tables
        .iter()
        .map(|t| dir.join(format!("{stem}_{}.csv", t.name)))
        .collect();
    paths.push(dir.join(format!("{stem}_manifest.json")));
    paths
}

/// Stages every file under a temporary name and renames them only after all
/// writes succeed.
pub fn write_outputs(out: &RunOutput, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let paths = output_paths(out, dir, stem);
    let mut manifest = out.manifest.clone();
    manifest["outputs"] = json!(paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect::<Vec<_>>());
    let mut contents: Vec<String> = out.tables.iter().map(|t| t.to_csv_string()).collect();
    contents.push(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n");

    let staged: Vec<PathBuf> = paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            p.with_file_name(format!(".{name}.partial"))
        })
        .collect();
    let cleanup = |upto: usize| {
        for s in &staged[..upto] {
            let _ = fs::remove_file(s);
        }
    };
    for (i, (tmp, body)) in staged.iter().zip(&contents).enumerate() {
        if let Err(e) = fs::write(tmp, body) {
            cleanup(i + 1);
            return Err(e.into());
        }
    }
    for (tmp, dst) in staged.iter().zip(&paths) {
        if let Err(e) = fs::rename(tmp, dst) {
            cleanup(staged.len());
            return Err(e.into());
        }
    }
    Ok(paths)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    preset: Preset,
    params: SystemParams,
}

impl Context<'_> {
    fn g_a(&self) -> f64 {
        self.params.dot_a.g
    }

    fn model(&self) -> ModelLevel {
        self.spec.options.model.unwrap_or(ModelLevel::Effective)
    }

    fn samples(&self) -> usize {
        self.spec.options.samples.unwrap_or(400)
    }

    /// `(δ+ν, δ-ν)` pairs in meV.
    fn curves(&self) -> Vec<(f64, f64)> {
        match &self.spec.options.curves {
            Some(c) => c.iter().map(|&[a, b]| (a * self.g_a(), b * self.g_a())).collect(),
            None => self.preset.curves.clone(),
        }
    }

    fn tune_options(&self) -> TuneOptions {
        TuneOptions {
            loops: self.spec.options.loops,
            scale_range: (1e-3, self.spec.options.max_drive_scale.unwrap_or(1.0)),
            ..TuneOptions::default()
        }
    }

    /// Cartesian product of the sweep axes, first axis slowest; one empty
    /// point when there is no sweep.
    fn grid(&self) -> Vec<Vec<(String, f64)>> {
        let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.spec.sweep {
            let values = axis.values(self.g_a());
            points = points
                .into_iter()
                .flat_map(|pt| {
                    values.iter().map(move |&v| {
                        let mut q = pt.clone();
                        q.push((axis.name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn apply(&self, point: &[(String, f64)]) -> Result<SystemParams, RunError> {
        let mut p = self.params.clone();
        for (name, v) in point {
            p.set(name, *v).map_err(|e| RunError::Spec(e.to_string()))?;
        }
        Ok(p)
    }

    fn axis_columns(&self) -> Vec<Column> {
        self.spec.sweep.iter().map(axis_column).collect()
    }
}

fn axis_column(axis: &SweepAxis) -> Column {
    let unit = match (axis.name.as_str(), axis.unit) {
        ("n_max", _) => "1",
        (_, AxisUnit::One) => "1",
        _ => "meV",
    };
    Column::new(&axis.name, unit)
}

/// Every named parameter plus the drive phases.
pub fn resolved_parameters(p: &SystemParams) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, f64> = PARAM_NAMES
        .iter()
        .map(|&n| (n.to_string(), p.get(n).expect("listed names resolve")))
        .collect();
    for (name, z) in [
        ("omega_a_phase", p.dot_a.omega),
        ("omega_b_phase", p.dot_b.omega),
        ("omega_prime_a_phase", p.dot_a.omega_prime),
        ("omega_prime_b_phase", p.dot_b.omega_prime),
    ] {
        m.insert(name.to_string(), z.arg());
    }
    m.insert("eta1".into(), p.eta1());
    m.insert("eta2".into(), p.eta2());
    m
}

pub fn tolerances() -> BTreeMap<String, f64> {
    let cfg = PropagationConfig::new(1.0);
    let v = ValidityThresholds::default();
    BTreeMap::from([
        ("commensuration_tol".into(), DEFAULT_COMMENSURATION_TOL),
        ("max_k".into(), DEFAULT_MAX_K as f64),
        ("balance_tol".into(), DEFAULT_BALANCE_TOL),
        ("pi_tuning_tol".into(), PI_TUNING_TOL),
        ("phase_guard_interaction".into(), default_phase_guard(ModelLevel::Interaction)),
        ("phase_guard_effective".into(), default_phase_guard(ModelLevel::Effective)),
        ("adaptive_error_tolerance".into(), cfg.error_tolerance),
        ("norm_tolerance".into(), cfg.norm_tolerance),
        ("trace_tolerance".into(), cfg.trace_tolerance),
        ("hermiticity_tolerance".into(), cfg.hermiticity_tolerance),
        ("eigenvalue_floor".into(), cfg.eigenvalue_floor),
        ("fock_tail_target".into(), FOCK_TAIL_TARGET),
        ("validity_detuning_ratio".into(), v.detuning_ratio),
        ("validity_drive_ratio".into(), v.drive_ratio),
        ("dispersive_ratio_warning".into(), DISPERSIVE_RATIO),
    ])
}

fn provenance(ctx: &Context, table: &mut ResultTable) {
    let prov = &mut table.provenance;
    prov.insert("tool".into(), format!("{TOOL_NAME} {}", env!("CARGO_PKG_VERSION")));
    prov.insert("format_version".into(), FORMAT_VERSION.to_string());
    prov.insert("kind".into(), ctx.spec.kind.name().into());
    prov.insert("table".into(), table.name.clone());
    prov.insert("preset".into(), ctx.preset.name.clone());
    prov.insert("seed".into(), ctx.spec.seed.to_string());
    prov.insert(
        "params".into(),
        serde_json::to_string(&resolved_parameters(&ctx.params)).unwrap(),
    );
    prov.insert("tolerances".into(), serde_json::to_string(&tolerances()).unwrap());
    if !table.sentinel_rows.is_empty() {
        prov.insert(
            "sentinel_rows".into(),
            serde_json::to_string(&table.sentinel_rows).unwrap(),
        );
    }
}

/// Runs an experiment description in memory.
pub fn execute(spec: &ExperimentSpec) -> Result<RunOutput, RunError> {
    spec.validate()?;
    let preset = preset(spec.preset_name()).map_err(|e| RunError::Spec(e.to_string()))?;
    let params = spec.apply_overrides(&preset.params)?;
    params.validate()?;
    let ctx = Context { spec, preset, params };
    info!("running {} on preset {}", spec.kind.name(), ctx.preset.name);

    let (tables, extra) = match spec.kind {
        ExperimentKind::PhaseReport => phase_report(&ctx)?,
        ExperimentKind::Fig2Surface => fig2_surface(&ctx)?,
        ExperimentKind::Fig3Fidelity => fig3_fidelity(&ctx)?,
        ExperimentKind::VerifyEffective => verify_effective(&ctx)?,
        ExperimentKind::TunePi => tune_pi(&ctx)?,
        ExperimentKind::Convergence => convergence(&ctx)?,
    };
    let mut tables: Vec<ResultTable> = tables.iter().map(report_units).collect();
    for t in &mut tables {
        provenance(&ctx, t);
        if let Some((row, col)) = t.undeclared_nan() {
            return Err(Error::Numerical(format!("NaN in table {} row {row} column {col}", t.name)).into());
        }
    }

    let validity = ctx.params.check_validity(&ValidityThresholds::default());
    let mut manifest = json!({
        "tool": TOOL_NAME,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "kind": spec.kind.name(),
        "preset": ctx.preset.name,
        "preset_notes": ctx.preset.notes,
        "seed": spec.seed,
        "spec": spec,
        "resolved_params": resolved_parameters(&ctx.params),
        "params": ctx.params,
        "tolerances": tolerances(),
        "validity": {
            "all_passed": validity.all_passed(),
            "checks": validity.checks,
        },
        "tables": tables.iter().map(|t| json!({
            "name": t.name,
            "columns": t.columns,
            "rows": t.rows.len(),
            "sentinel_rows": t.sentinel_rows,
        })).collect::<Vec<_>>(),
    });
    let flags = decay_time_flag(&ctx.params);
    manifest["flags"] = Value::Object(flags);
    for (k, v) in extra {
        if k == "flags" {
            if let (Some(dst), Value::Object(src)) = (manifest["flags"].as_object_mut(), v) {
                dst.extend(src);
            }
        } else {
            manifest[k] = v;
        }
    }
    Ok(RunOutput { tables, manifest })
}

/// The decay-time estimate is dimensionally inconsistent as written; both
/// readings are reported whenever loss is present.
fn decay_time_flag(p: &SystemParams) -> Map<String, Value> {
    let mut flags = Map::new();
    let gamma = p.dot_a.gamma.max(p.dot_b.gamma);
    if gamma > 0.0 {
        if let Ok(c) = effective_couplings(p) {
            let est = effective_decay_time(&c, gamma);
            flags.insert(
                "decay_time_discrepancy".into(),
                json!({
                    "literal_mev": est.literal_mev,
                    "consistent_ps": est.consistent_ps,
                    "note": "gamma (delta-nu)^2 / |lambda|^2 carries energy units; hbar (delta-nu)^2 / (gamma |lambda|^2) is the consistent time",
                }),
            );
        }
    }
    flags
}

fn lambdas(c: &EffectiveCouplings) -> [f64; 4] {
    [
        c.lambda(Dot::A, NormalMode::C1).norm(),
        c.lambda(Dot::A, NormalMode::C2).norm(),
        c.lambda(Dot::B, NormalMode::C1).norm(),
        c.lambda(Dot::B, NormalMode::C2).norm(),
    ]
}

type KindOutput = (Vec<ResultTable>, Map<String, Value>);

fn phase_report(ctx: &Context) -> Result<KindOutput, RunError> {
    let mut cols = ctx.axis_columns();
    cols.extend(
        [
            ("eta1", "meV"),
            ("eta2", "meV"),
            ("lambda_a1", "meV"),
            ("lambda_a2", "meV"),
            ("lambda_b1", "meV"),
            ("lambda_b2", "meV"),
            ("balance_mismatch", "1"),
            ("dispersive_ratio", "1"),
            ("k1", "1"),
            ("k2", "1"),
            ("t0_ps", "ps"),
            ("phi_a", "rad"),
            ("phi_b", "rad"),
            ("theta", "rad"),
            ("rate_a", "rad/ps"),
            ("rate_b", "rad/ps"),
            ("rate_cz", "rad/ps"),
            ("stark_theta", "rad"),
            ("theta_simplified", "rad"),
            ("t0_simplified_pi_ps", "ps"),
            ("max_alpha_1", "1"),
            ("max_alpha_2", "1"),
            ("validity_passed", "1"),
        ]
        .map(|(n, u)| Column::new(n, u)),
    );
    let width = cols.len();
    let points = ctx.grid();
    let rows: Vec<Result<(Vec<f64>, Option<String>), RunError>> = points
        .par_iter()
        .map(|pt| {
            let p = ctx.apply(pt)?;
            let mut row: Vec<f64> = pt.iter().map(|(_, v)| *v).collect();
            let c = match effective_couplings(&p) {
                Ok(c) => c,
                Err(e @ Error::Resonance { .. }) => {
                    row.resize(width, f64::NAN);
                    return Ok((row, Some(e.to_string())));
                }
                Err(e) => return Err(e.into()),
            };
            let base: Vec<f64> = [c.eta[0], c.eta[1]]
                .into_iter()
                .chain(lambdas(&c))
                .chain([c.balance_mismatch(), c.dispersive_ratio()])
                .collect();
            row.extend(base);
            let schedule = match gate_time(&c, DEFAULT_MAX_K, DEFAULT_COMMENSURATION_TOL) {
                Ok(gt) => GateSchedule::from_gate_time(&c, &gt, 1)?,
                Err(e @ (Error::Commensuration { .. } | Error::Precondition(_))) => {
                    row.resize(width, f64::NAN);
                    return Ok((row, Some(e.to_string())));
                }
                Err(e) => return Err(e.into()),
            };
            let s = &schedule;
            let simplified = theta_simplified(&c, s.t0_ps, f64::INFINITY)?;
            let alpha = max_displacement(&c);
            let valid = p.check_validity(&ValidityThresholds::default()).all_passed();
            row.extend([
                s.k[0] as f64,
                s.k[1] as f64,
                s.t0_ps,
                s.phases.phi_a,
                s.phases.phi_b,
                s.phases.theta,
                s.rates.rate_a,
                s.rates.rate_b,
                s.rates.rate_cz,
                -s.rates.rate_cz * s.t0_ps,
                simplified,
                simplified_operation_time(&c, PI),
                alpha[0],
                alpha[1],
                if valid { 1.0 } else { 0.0 },
            ]);
            Ok((row, None))
        })
        .collect();
    let mut table = ResultTable::new("phases", cols);
    let mut sentinels = Vec::new();
    for r in rows {
        let (row, reason) = r?;
        match reason {
            Some(reason) => {
                sentinels.push(json!({ "row": table.rows.len(), "reason": reason }));
                table.push_sentinel(row);
            }
            None => table.push(row),
        }
    }
    let mut extra = Map::new();
    extra.insert("sentinels".into(), Value::Array(sentinels));
    Ok((vec![table], extra))
}

/// Whether finite `v` strictly decreases to an interior minimum and strictly
/// increases after it. Returns the minimum's index among the finite values.
pub fn valley_shape(v: &[f64]) -> Option<usize> {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.len() < 3 {
        return None;
    }
    let m = f
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)?;
    if m == 0 || m == f.len() - 1 {
        return None;
    }
    let down = f[..=m].windows(2).all(|w| w[1] < w[0]);
    let up = f[m..].windows(2).all(|w| w[1] > w[0]);
    (down && up).then_some(m)
}

fn fig2_surface(ctx: &Context) -> Result<KindOutput, RunError> {
    let g_a = ctx.g_a();
    let axis = |n: &str| ctx.spec.sweep.iter().find(|a| a.name == n).unwrap();
    let nu = axis("nu").values(g_a);
    let delta = axis("delta").values(g_a);
    let target = ctx.spec.options.theta_target.unwrap_or(PI);
    let surface = operation_time_surface(&ctx.params, &nu, &delta, target);
    let mut table = ResultTable::new(
        "surface",
        vec![
            Column::new("nu", "meV"),
            Column::new("delta", "meV"),
            Column::new("nu_over_ga", "1"),
            Column::new("delta_over_ga", "1"),
            Column::new("t0_ps", "ps"),
            Column::new("resonant", "1"),
        ],
    );
    let mut shapes = Vec::new();
    for (i, &d) in delta.iter().enumerate() {
        for (j, &n) in nu.iter().enumerate() {
            let t0 = surface.at(i, j);
            let row = vec![n, d, n / g_a, d / g_a, t0, if t0.is_nan() { 1.0 } else { 0.0 }];
            if t0.is_nan() {
                table.push_sentinel(row);
            } else {
                table.push(row);
            }
        }
        let min = valley_shape(&surface.t0_ps[i]);
        shapes.push(json!({
            "delta_over_ga": d / g_a,
            "valley": min.is_some(),
            "t0_ns_at_smallest_nu": surface.at(i, 0) / 1000.0,
        }));
    }
    let mut extra = Map::new();
    extra.insert("theta_target".into(), json!(target));
    extra.insert("row_shapes".into(), Value::Array(shapes));
    extra.insert(
        "resonant_points".into(),
        json!(surface.resonant.iter().map(|&(i, j)| [delta[i] / g_a, nu[j] / g_a]).collect::<Vec<_>>()),
    );
    Ok((vec![table], extra))
}

fn tune_curve(ctx: &Context, p: &SystemParams, curve: (f64, f64)) -> Result<TunedGate, RunError> {
    let mut q = p.clone();
    q.set_mode_detunings(curve.0, curve.1);
    let knob = ctx.spec.options.knob.unwrap_or(TuningKnob::OmegaScale);
    Ok(tune_for_pi_phase(&q, ctx.spec.options.l.unwrap_or(0), knob, &ctx.tune_options())?)
}

fn curve_label(curve: (f64, f64), g_a: f64) -> String {
    let r = |x: f64| (x / g_a * 1e6).round() / 1e6;
    format!("{}_{}", r(curve.0), r(curve.1))
}

#[derive(Clone, Debug, Serialize)]
pub struct EndpointCheck {
    pub gamma_over_ga: f64,
    pub reference: f64,
    pub achieved: f64,
    pub within_band: bool,
}

/// Summary of a fidelity sweep against the reference endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct FidelitySummary {
    pub best_curve: usize,
    pub best_label: String,
    pub endpoints: Vec<EndpointCheck>,
    pub longest_t0_ns: f64,
    pub reference_longest_t0_ns: f64,
    pub t0_ratio: f64,
}

fn fig3_fidelity(ctx: &Context) -> Result<KindOutput, RunError> {
    let g_a = ctx.g_a();
    let gammas = match ctx.spec.sweep.first() {
        Some(axis) => axis.values(g_a),
        None => SweepAxis {
            name: "gamma".into(),
            min: 0.0,
            max: 0.02,
            points: 9,
            unit: AxisUnit::GA,
        }
        .values(g_a),
    };
    let curves = ctx.curves();
    let tuned: Vec<TunedGate> = curves
        .par_iter()
        .map(|&c| tune_curve(ctx, &ctx.params, c))
        .collect::<Result<_, _>>()?;
    let model = ctx.model();
    let opts = SimulationOptions {
        samples: ctx.samples(),
        convergence_check: ctx.spec.options.convergence_check.unwrap_or(false),
        ..SimulationOptions::default()
    };
    let jobs: Vec<(usize, usize)> = (0..curves.len())
        .flat_map(|c| (0..gammas.len()).map(move |g| (c, g)))
        .collect();
    let reports: Vec<_> = jobs
        .par_iter()
        .map(|&(ci, gi)| {
            let mut p = tuned[ci].params.clone();
            p.set_gamma(gammas[gi]);
            info!("curve {} gamma {:.4} meV", curve_label(curves[ci], g_a), gammas[gi]);
            run_gate_simulation_with(&p, &tuned[ci].schedule, model, gammas[gi] > 0.0, &opts)
        })
        .collect::<Result<_, _>>()?;

    let labels: Vec<String> = curves.iter().map(|&c| curve_label(c, g_a)).collect();
    let mut cols = vec![Column::new("gamma_over_ga", "1"), Column::new("gamma", "meV")];
    cols.extend(labels.iter().map(|l| Column::new(&format!("F_final_{l}"), "1")));
    cols.extend(labels.iter().map(|l| Column::new(&format!("F_worst_basis_{l}"), "1")));
    let mut fid = ResultTable::new("fidelity", cols);
    let f_at = |ci: usize, gi: usize| &reports[ci * gammas.len() + gi];
    for (gi, &g) in gammas.iter().enumerate() {
        let mut row = vec![g / g_a, g];
        row.extend((0..curves.len()).map(|ci| f_at(ci, gi).final_fidelity));
        row.extend((0..curves.len()).map(|ci| f_at(ci, gi).worst_basis_fidelity));
        fid.push(row);
    }

    let mut info_table = ResultTable::new(
        "curves",
        [
            ("eta1_over_ga", "1"),
            ("eta2_over_ga", "1"),
            ("drive_scale", "1"),
            ("loops", "1"),
            ("k1", "1"),
            ("k2", "1"),
            ("t0_ps", "ps"),
            ("theta", "rad"),
            ("n_max", "1"),
            ("max_phase_error", "rad"),
            ("max_residual_photons", "1"),
        ]
        .map(|(n, u)| Column::new(n, u))
        .to_vec(),
    );
    for (ci, t) in tuned.iter().enumerate() {
        let r0 = f_at(ci, 0);
        info_table.push(vec![
            curves[ci].0 / g_a,
            curves[ci].1 / g_a,
            t.scale,
            t.schedule.loops as f64,
            t.schedule.k[0] as f64,
            t.schedule.k[1] as f64,
            t.schedule.t0_ps,
            t.schedule.theta(),
            r0.n_max as f64,
            r0.phase_errors.iter().fold(0.0, |m, e| m.max(e.abs())),
            r0.residual_photons.iter().copied().fold(0.0, f64::max),
        ]);
    }

    let summary = summarize_fidelity(&fid, &labels, &tuned);
    let mut extra = Map::new();
    extra.insert("model".into(), json!(model.name()));
    extra.insert("fidelity_definition".into(), json!(
        "F = <psi'(t0)| rho(t0) |psi'(t0)> for the input (|f>+|g>)_A (|f>+|g>)_B |00> / 2, psi' the lossless run; each curve tuned to |Theta| = pi by a uniform drive scale"
    ));
    extra.insert("summary".into(), serde_json::to_value(&summary).unwrap());
    let missed = summary.endpoints.iter().any(|e| !e.within_band);
    let d_a = ctx.params.dot_a.detuning;
    extra.insert(
        "flags".into(),
        json!({
            "delta_sensitivity": {
                "flagged": missed || summary.endpoints.is_empty(),
                "detuning_a_default_mev": d_a,
                "detuning_b_default_mev": ctx.params.dot_b.detuning,
                "note": "the detunings are defaults. After tuning to |Theta| = pi the loss is set mainly by (delta+nu, delta-nu) and gamma, so the effective-model fidelity moves with detuning_a only through O(eta/detuning) corrections to the coupling ratios (a few 1e-3 for a doubling); a miss against the reference band points to an unstated convention (input state, loop count, operation time) rather than to the detuning default",
            },
            "operation_time": {
                "longest_t0_ns": summary.longest_t0_ns,
                "reference_ns": REFERENCE_LONGEST_T0_NS,
                "ratio": summary.t0_ratio,
                "within_factor_2": summary.t0_ratio >= 0.5 && summary.t0_ratio <= 2.0,
                "note": "t0 scales as detuning^2 / drive_scale^2 at fixed Theta; the reference time would need detuning_a near detuning_a * sqrt(13.5 ns / longest_t0) with the drive at its cap",
                "detuning_a_for_reference_mev": d_a * (REFERENCE_LONGEST_T0_NS / summary.longest_t0_ns).sqrt(),
            },
        }),
    );
    Ok((vec![fid, info_table], extra))
}

fn summarize_fidelity(fid: &ResultTable, labels: &[String], tuned: &[TunedGate]) -> FidelitySummary {
    let gammas = fid.column("gamma_over_ga").unwrap();
    let lossy: Vec<usize> = (0..gammas.len()).filter(|&i| gammas[i] > 0.0).collect();
    let score = |ci: usize| -> f64 {
        let col = fid.column(&format!("F_final_{}", labels[ci])).unwrap();
        if lossy.is_empty() {
            col.iter().sum()
        } else {
            lossy.iter().map(|&i| col[i]).sum()
        }
    };
    let best = (0..labels.len())
        .max_by(|&a, &b| score(a).total_cmp(&score(b)))
        .unwrap_or(0);
    let best_col = fid.column(&format!("F_final_{}", labels[best])).unwrap_or_default();
    let endpoints = FIG3_REFERENCE
        .iter()
        .filter_map(|&(g, reference)| {
            let i = gammas.iter().position(|&x| (x - g).abs() <= 1e-9)?;
            Some(EndpointCheck {
                gamma_over_ga: g,
                reference,
                achieved: best_col[i],
                within_band: (best_col[i] - reference).abs() <= FIG3_BAND,
            })
        })
        .collect();
    let longest = tuned.iter().map(|t| t.schedule.t0_ps).fold(0.0, f64::max) / 1000.0;
    FidelitySummary {
        best_curve: best,
        best_label: labels.get(best).cloned().unwrap_or_default(),
        endpoints,
        longest_t0_ns: longest,
        reference_longest_t0_ns: REFERENCE_LONGEST_T0_NS,
        t0_ratio: longest / REFERENCE_LONGEST_T0_NS,
    }
}

#[derive(Clone, Debug, Serialize)]
struct DrawResult {
    row: Vec<f64>,
    err_effective: f64,
    err_full: Option<f64>,
    stark_residual: f64,
    alpha_t0: f64,
    residual_photons: f64,
}

fn verify_draw(p: &SystemParams, full: bool, index: usize) -> Result<DrawResult, RunError> {
    let c = effective_couplings(p)?;
    let s = GateSchedule::new(&c, 1)?;
    let eff = run_gate_simulation(p, &s, ModelLevel::Effective, false)?;
    let max_abs = |e: &[f64; 4]| e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err_effective = max_abs(&eff.phase_errors);
    let (err_full, full_photons) = if full {
        let r = run_gate_simulation(p, &s, ModelLevel::Interaction, false)?;
        (Some(max_abs(&r.phase_errors)), r.residual_photons.iter().copied().fold(0.0, f64::max))
    } else {
        (None, 0.0)
    };
    let stark_residual = (-s.rates.rate_cz * s.t0_ps - s.phases.theta).abs();
    let alpha_t0 = BranchLabel::ALL
        .iter()
        .flat_map(|&b| NormalMode::BOTH.map(|m| alpha_trajectory(&c, b, m, s.t0_ps).norm()))
        .fold(0.0, f64::max);
    let residual_photons = eff.residual_photons.iter().copied().fold(full_photons, f64::max);
    let mut row = vec![
        index as f64,
        p.dot_a.g,
        p.dot_b.g,
        p.dot_a.omega.norm(),
        p.dot_a.detuning,
        p.dot_b.detuning,
        p.eta1(),
        p.eta2(),
        s.k[0] as f64,
        s.k[1] as f64,
        s.t0_ps,
        s.phases.theta,
        err_effective,
    ];
    if let Some(e) = err_full {
        row.push(e);
    }
    row.extend([stark_residual, alpha_t0, residual_photons]);
    Ok(DrawResult {
        row,
        err_effective,
        err_full,
        stark_residual,
        alpha_t0,
        residual_photons,
    })
}

/// Drive scale putting `dispersive_ratio` at `ratio`, schedule and
/// effective-vs-dispersive deviation.
pub fn hierarchy_point(base: &SystemParams, ratio: f64) -> crate::Result<(f64, crate::dynamics::ModelDeviation)> {
    let c = effective_couplings(base)?;
    let scale = c.dispersive_ratio() / ratio;
    let mut q = base.clone();
    q.scale_drives(scale);
    let cq = effective_couplings(&q)?;
    let s = GateSchedule::new(&cq, 1)?;
    Ok((scale, compare_models(&q, &s, (ModelLevel::Effective, ModelLevel::Dispersive))?))
}

fn verify_effective(ctx: &Context) -> Result<KindOutput, RunError> {
    let n = ctx.spec.options.draws.unwrap_or(20);
    let full = ctx.spec.options.full_model.unwrap_or(true);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.spec.seed);
    let draws: Vec<SystemParams> = (0..n).map(|_| random_params(&mut rng)).collect();
    let results: Vec<DrawResult> = draws
        .par_iter()
        .enumerate()
        .map(|(i, p)| verify_draw(p, full, i))
        .collect::<Result<_, _>>()?;

    let mut cols: Vec<Column> = [
        ("draw", "1"),
        ("g_a", "meV"),
        ("g_b", "meV"),
        ("omega_a", "meV"),
        ("detuning_a", "meV"),
        ("detuning_b", "meV"),
        ("eta1", "meV"),
        ("eta2", "meV"),
        ("k1", "1"),
        ("k2", "1"),
        ("t0_ps", "ps"),
        ("theta", "rad"),
        ("phase_error_effective", "rad"),
    ]
    .map(|(a, b)| Column::new(a, b))
    .to_vec();
    if full {
        cols.push(Column::new("phase_error_full", "rad"));
    }
    cols.extend([
        Column::new("stark_identity_residual", "rad"),
        Column::new("alpha_t0", "1"),
        Column::new("residual_photons", "1"),
    ]);
    let mut draws_table = ResultTable::new("draws", cols);
    for r in &results {
        draws_table.push(r.row.clone());
    }

    let ratios = ctx.spec.options.ratios.clone().unwrap_or(DEFAULT_RATIOS.to_vec());
    let base = {
        let mut p = ctx.params.clone();
        if let Some(&c) = ctx.curves().first() {
            p.set_mode_detunings(c.0, c.1);
        }
        p
    };
    let points: Vec<(f64, crate::dynamics::ModelDeviation)> = ratios
        .par_iter()
        .map(|&r| hierarchy_point(&base, r))
        .collect::<Result<_, _>>()?;
    let mut hier = ResultTable::new(
        "hierarchy",
        [
            ("eta_over_lambda", "1"),
            ("drive_scale", "1"),
            ("max_phase_deviation", "rad"),
            ("max_infidelity", "1"),
        ]
        .map(|(a, b)| Column::new(a, b))
        .to_vec(),
    );
    for (r, (scale, d)) in ratios.iter().zip(&points) {
        hier.push(vec![*r, *scale, d.max_phase_deviation, d.max_infidelity]);
    }
    let reductions: Vec<f64> = points
        .windows(2)
        .map(|w| w[0].1.max_phase_deviation / w[1].1.max_phase_deviation)
        .collect();

    let max_eff = results.iter().map(|r| r.err_effective).fold(0.0, f64::max);
    let max_full = results.iter().filter_map(|r| r.err_full).fold(0.0, f64::max);
    let mut extra = Map::new();
    extra.insert(
        "verification".into(),
        json!({
            "draws": n,
            "max_phase_error_effective": max_eff,
            "effective_tolerance": EFFECTIVE_PHASE_TOL,
            "effective_passed": max_eff <= EFFECTIVE_PHASE_TOL,
            "max_phase_error_full": if full { json!(max_full) } else { Value::Null },
            "full_tolerance": FULL_PHASE_TOL,
            "full_passed": if full { json!(max_full <= FULL_PHASE_TOL) } else { Value::Null },
            "max_stark_identity_residual": results.iter().map(|r| r.stark_residual).fold(0.0, f64::max),
            "max_alpha_t0": results.iter().map(|r| r.alpha_t0).fold(0.0, f64::max),
            "max_residual_photons": results.iter().map(|r| r.residual_photons).fold(0.0, f64::max),
            "hierarchy_reduction_per_doubling": reductions,
        }),
    );
    Ok((vec![draws_table, hier], extra))
}

fn tune_pi(ctx: &Context) -> Result<KindOutput, RunError> {
    let mut cols = ctx.axis_columns();
    cols.extend(
        [
            ("eta1", "meV"),
            ("eta2", "meV"),
            ("scale", "1"),
            ("loops", "1"),
            ("k1", "1"),
            ("k2", "1"),
            ("t0_ps", "ps"),
            ("theta", "rad"),
            ("theta_error", "rad"),
        ]
        .map(|(n, u)| Column::new(n, u)),
    );
    for b in BranchLabel::ALL {
        cols.push(Column::new(&format!("gate_re_{}", b.name()), "1"));
        cols.push(Column::new(&format!("gate_im_{}", b.name()), "1"));
    }
    let knob = ctx.spec.options.knob.unwrap_or(TuningKnob::OmegaScale);
    let l = ctx.spec.options.l.unwrap_or(0);
    let points = ctx.grid();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|pt| -> Result<Vec<f64>, RunError> {
            let p = ctx.apply(pt)?;
            let t = tune_for_pi_phase(&p, l, knob, &ctx.tune_options())?;
            let s = &t.schedule;
            let mut row: Vec<f64> = pt.iter().map(|(_, v)| *v).collect();
            row.extend([
                t.params.eta1(),
                t.params.eta2(),
                t.scale,
                s.loops as f64,
                s.k[0] as f64,
                s.k[1] as f64,
                s.t0_ps,
                s.theta(),
                s.theta().abs() - (2 * l + 1) as f64 * PI,
            ]);
            let gate = ideal_gate(s, true);
            for b in BranchLabel::ALL {
                row.push(gate.entry(b).re);
                row.push(gate.entry(b).im);
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut table = ResultTable::new("tuning", cols);
    for r in rows {
        table.push(r);
    }
    let mut extra = Map::new();
    extra.insert("knob".into(), json!(knob));
    extra.insert("l".into(), json!(l));
    Ok((vec![table], extra))
}

fn convergence(ctx: &Context) -> Result<KindOutput, RunError> {
    let g_a = ctx.g_a();
    let gammas = ctx.spec.options.gamma_over_ga.clone().unwrap_or(vec![0.01]);
    let curves = ctx.curves();
    let jobs: Vec<(usize, f64)> = (0..curves.len())
        .flat_map(|c| gammas.iter().map(move |&g| (c, g)))
        .collect();
    let opts = SimulationOptions {
        samples: ctx.samples(),
        convergence_check: true,
        ..SimulationOptions::default()
    };
    let model = ctx.model();
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(ci, g)| -> Result<Vec<f64>, RunError> {
            let t = tune_curve(ctx, &ctx.params, curves[ci])?;
            let mut p = t.params.clone();
            p.set_gamma(g * g_a);
            let r = run_gate_simulation_with(&p, &t.schedule, model, g > 0.0, &opts)?;
            Ok(vec![
                curves[ci].0 / g_a,
                curves[ci].1 / g_a,
                g,
                r.n_max as f64,
                r.final_fidelity,
                r.convergence_delta.unwrap_or(0.0),
                r.norm_drift,
            ])
        })
        .collect::<Result<_, _>>()?;
    let mut table = ResultTable::new(
        "convergence",
        [
            ("eta1_over_ga", "1"),
            ("eta2_over_ga", "1"),
            ("gamma_over_ga", "1"),
            ("n_max", "1"),
            ("F_final", "1"),
            ("delta_n_max_plus_1", "1"),
            ("norm_drift", "1"),
        ]
        .map(|(n, u)| Column::new(n, u))
        .to_vec(),
    );
    for r in rows {
        table.push(r);
    }
    let mut extra = Map::new();
    extra.insert("model".into(), json!(model.name()));
    Ok((vec![table], extra))
}
