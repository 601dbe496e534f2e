//! Declarative experiment descriptions, read from TOML.
//!
//! ```toml
//! kind = "fig3_fidelity"
//! preset = "fig3"
//! seed = 7
//!
//! [params]
//! n_max = 5
//!
//! [[sweep]]
//! name = "gamma"
//! min = 0.0
//! max = 0.02
//! points = 9
//! unit = "g_a"
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelLevel;
use crate::model::{SystemParams, PARAM_NAMES};
use crate::phases::TuningKnob;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseReport,
    Fig2Surface,
    Fig3Fidelity,
    VerifyEffective,
    TunePi,
    Convergence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhaseReport => "phase_report",
            ExperimentKind::Fig2Surface => "fig2_surface",
            ExperimentKind::Fig3Fidelity => "fig3_fidelity",
            ExperimentKind::VerifyEffective => "verify_effective",
            ExperimentKind::TunePi => "tune_pi",
            ExperimentKind::Convergence => "convergence",
        }
    }

    fn default_preset(self) -> &'static str {
        match self {
            ExperimentKind::Fig2Surface | ExperimentKind::PhaseReport => "fig2",
            _ => "fig3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisUnit {
    #[serde(rename = "meV")]
    Mev,
    /// Multiples of the resolved `g_A`.
    #[serde(rename = "g_a")]
    GA,
    /// Raw value (counts, ratios).
    #[serde(rename = "1")]
    One,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default = "default_unit")]
    pub unit: AxisUnit,
}

fn default_unit() -> AxisUnit {
    AxisUnit::Mev
}

impl SweepAxis {
    /// Evenly spaced values in the axis unit.
    pub fn raw_values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Values converted to the parameter's own unit.
    pub fn values(&self, g_a: f64) -> Vec<f64> {
        let factor = match self.unit {
            AxisUnit::GA => g_a,
            AxisUnit::Mev | AxisUnit::One => 1.0,
        };
        self.raw_values().into_iter().map(|v| v * factor).collect()
    }
}

/// Kind-specific knobs; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub model: Option<ModelLevel>,
    pub theta_target: Option<f64>,
    pub l: Option<u32>,
    pub knob: Option<TuningKnob>,
    pub loops: Option<u64>,
    pub max_drive_scale: Option<f64>,
    pub samples: Option<usize>,
    pub draws: Option<usize>,
    pub ratios: Option<Vec<f64>>,
    /// `(δ+ν, δ-ν)` pairs in units of `g_A`, replacing the preset's curves.
    pub curves: Option<Vec<[f64; 2]>>,
    /// Decay rates in units of `g_A` for convergence runs.
    pub gamma_over_ga: Option<Vec<f64>>,
    pub convergence_check: Option<bool>,
    /// Also run the full model in `verify_effective`.
    pub full_model: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub preset: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    /// Output file stem; defaults to the kind name.
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: RunOptions,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SpecError(pub String);

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| SpecError(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn preset_name(&self) -> &str {
        self.preset.as_deref().unwrap_or(self.kind.default_preset())
    }

    pub fn output_stem(&self) -> String {
        self.output.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for name in self.params.keys() {
            if !PARAM_NAMES.contains(&name.as_str()) {
                return Err(SpecError(format!("unknown parameter override '{name}'")));
            }
        }
        for (name, v) in &self.params {
            if !v.is_finite() {
                return Err(SpecError(format!("parameter '{name}' must be finite")));
            }
        }
        for axis in &self.sweep {
            if !PARAM_NAMES.contains(&axis.name.as_str()) {
                return Err(SpecError(format!(
                    "sweep axis '{}' is not a parameter (known: {})",
                    axis.name,
                    PARAM_NAMES.join(", ")
                )));
            }
            if axis.points < 2 {
                return Err(SpecError(format!("sweep axis '{}' needs at least 2 points", axis.name)));
            }
            if !(axis.min.is_finite() && axis.max.is_finite() && axis.min <= axis.max) {
                return Err(SpecError(format!("sweep axis '{}' has an invalid range", axis.name)));
            }
        }
        let mut names: Vec<&str> = self.sweep.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(SpecError("duplicate sweep axis".into()));
        }
        if let Some(stem) = &self.output {
            if stem.is_empty() || stem.contains(['/', '\\']) || stem.starts_with('.') {
                return Err(SpecError(format!("output stem '{stem}' must be a plain file name")));
            }
        }
        match self.kind {
            ExperimentKind::Fig2Surface => {
                let has = |n: &str| self.sweep.iter().any(|a| a.name == n);
                if !(has("nu") && has("delta") && self.sweep.len() == 2) {
                    return Err(SpecError("fig2_surface needs exactly the sweep axes 'nu' and 'delta'".into()));
                }
            }
            ExperimentKind::Fig3Fidelity => {
                if self.sweep.len() > 1 || self.sweep.iter().any(|a| a.name != "gamma") {
                    return Err(SpecError("fig3_fidelity sweeps only 'gamma'".into()));
                }
            }
            _ => {}
        }
        if let Some(draws) = self.options.draws {
            if draws == 0 {
                return Err(SpecError("draws must be positive".into()));
            }
        }
        if let Some(samples) = self.options.samples {
            if samples == 0 {
                return Err(SpecError("samples must be positive".into()));
            }
        }
        Ok(())
    }

    /// Preset parameters with the `[params]` overrides applied.
    pub fn apply_overrides(&self, base: &SystemParams) -> Result<SystemParams, SpecError> {
        let mut p = base.clone();
        for (name, v) in &self.params {
            p.set(name, *v).map_err(|e| SpecError(e.to_string()))?;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_fig3() {
        let spec = ExperimentSpec::parse(
            r#"
kind = "fig3_fidelity"
[[sweep]]
name = "gamma"
min = 0.0
max = 0.02
points = 9
unit = "g_a"
"#,
        )
        .unwrap();
        assert_eq!(spec.preset_name(), "fig3");
        let v = spec.sweep[0].values(0.1);
        assert_eq!(v.len(), 9);
        assert!((v[8] - 0.002).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        for text in [
            "kind = \"nope\"",
            "kind = \"phase_report\"\n[params]\nbogus = 1.0",
            "kind = \"phase_report\"\n[[sweep]]\nname = \"nu\"\nmin = 0.0\nmax = 1.0\npoints = 1",
            "kind = \"phase_report\"\n[[sweep]]\nname = \"zeta\"\nmin = 0.0\nmax = 1.0\npoints = 3",
            "kind = \"fig2_surface\"\n[[sweep]]\nname = \"nu\"\nmin = 0.1\nmax = 1.0\npoints = 3",
            "kind = \"phase_report\"\noutput = \"../x\"",
            "kind = \"phase_report\"\nunknown_key = 3",
        ] {
            assert!(ExperimentSpec::parse(text).is_err(), "{text}");
        }
    }
}
