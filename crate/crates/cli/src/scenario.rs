//! Scenario files: TOML with nested tables; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiered_core::bath::QuadratureConfig;
use tiered_core::{
    DampedMode, Environment, ModeRepresentation, PVector, Segment, SpectralDensity, SystemModel, Thermal, TimeGrid,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSpec,
    #[serde(default)]
    pub bath: BathSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub methods: Methods,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub segments: Vec<SegmentSpec>,
    /// `[V_1, ..., V_{n^2-1}, V_{n^2}]`.
    pub v: Vec<f64>,
    pub rho0: InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    #[serde(default)]
    pub start: f64,
    pub h: Vec<f64>,
}

/// `"mixed"`, `"up"`, `"down"`, `"level<k>"`, or the raw state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    #[serde(rename = "kT", default, skip_serializing_if = "Option::is_none")]
    pub kt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<DampedMode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<SpectralDensity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Methods {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<InfluenceSpec>,
    #[serde(default)]
    pub wcme: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub higher_order: Option<HigherOrderSpec>,
}

impl Default for Methods {
    fn default() -> Self {
        Self { influence: Some(InfluenceSpec::default()), wcme: false, oracle: None, higher_order: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluencePath {
    /// Closed form when the model allows it, quadrature otherwise.
    #[default]
    Auto,
    Quadrature,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceSpec {
    #[serde(default)]
    pub path: InfluencePath,
    /// Also emit one trajectory per bath component.
    #[serde(default)]
    pub decompose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Lindblad,
    Tcl2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default)]
    pub kind: OracleKind,
    /// Levels per mode; derived from the 1e-8 thermal tail when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fock: Option<usize>,
    #[serde(default)]
    pub representation: ModeRepresentation,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            kind: OracleKind::Lindblad,
            n_fock: None,
            representation: ModeRepresentation::Thermal,
            rtol: default_rtol(),
            atol: default_atol(),
        }
    }
}

fn default_rtol() -> f64 {
    1e-8
}

fn default_atol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HigherOrderSpec {
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_path")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { path: default_path(), format: OutputFormat::Csv }
    }
}

fn default_path() -> PathBuf {
    PathBuf::from("trajectory.csv")
}

/// Parameters of `eps/2 sigma_z + Delta/2 sigma_x` coupled through `sigma_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevel {
    pub eps: f64,
    pub delta: f64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))?;
        s.check()?;
        Ok(s)
    }

    /// Scenario echoed in a run summary, or a bare scenario object.
    pub fn from_summary_json(text: &str) -> CliResult<Self> {
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("summary: {e}")))?;
        let inner = v.get_mut("scenario").map(serde_json::Value::take).unwrap_or(v);
        let s: Scenario =
            serde_json::from_value(inner).map_err(|e| CliError::Input(format!("summary scenario: {e}")))?;
        s.check()?;
        Ok(s)
    }

    /// TOML scenario, or a `.json` run summary to repeat that run.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_summary_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks that need more than the schema; model-level checks happen when
    /// the core types are built.
    fn check(&self) -> CliResult<()> {
        match (self.bath.kt, self.bath.beta) {
            (Some(_), Some(_)) => {
                return Err(CliError::Input("bath: give exactly one of kT and beta, not both".into()))
            }
            (None, None) => return Err(CliError::Input("bath: one of kT or beta is required".into())),
            _ => {}
        }
        if let Some(h) = self.methods.higher_order {
            if h.order != 2 && h.order != 4 {
                return Err(CliError::Input(format!("methods.higher_order.order must be 2 or 4, got {}", h.order)));
            }
        }
        self.model()?;
        self.environment()?;
        for m in self.bath.modes.iter().filter(|m| m.strongly_damped()) {
            log::warn!(
                "mode at omega={} has gamma={} > 0.2 omega; weak-damping assumption is stretched",
                m.omega,
                m.gamma
            );
        }
        self.time_grid()?;
        self.initial_state()?;
        Ok(())
    }

    pub fn thermal(&self) -> CliResult<Thermal> {
        let t = match (self.bath.kt, self.bath.beta) {
            (Some(kt), None) => Thermal::from_kt(kt),
            (None, Some(b)) => Thermal::new(b),
            _ => unreachable!("checked at load"),
        };
        t.map_err(|e| CliError::Input(format!("bath: {e}")))
    }

    pub fn model(&self) -> CliResult<SystemModel> {
        let segments = self.system.segments.iter().map(|s| Segment { start: s.start, h: s.h.clone() }).collect();
        SystemModel::new(self.system.n, segments, self.system.v.clone())
            .map_err(|e| CliError::Input(format!("system: {e}")))
    }

    pub fn environment(&self) -> CliResult<Environment> {
        let mut parts = Vec::new();
        if !self.bath.modes.is_empty() {
            parts.push(SpectralDensity::modes(self.bath.modes.clone()));
        }
        parts.extend(self.bath.densities.iter().cloned());
        for p in &parts {
            p.validate().map_err(|e| CliError::Input(format!("bath: {e}")))?;
        }
        let mut env = Environment::new(parts, self.thermal()?);
        if let Some(q) = self.bath.quadrature {
            env.quadrature = q;
        }
        Ok(env)
    }

    pub fn time_grid(&self) -> CliResult<TimeGrid> {
        TimeGrid::new(self.grid.dt, self.grid.t_max).map_err(|e| CliError::Input(format!("grid: {e}")))
    }

    pub fn initial_state(&self) -> CliResult<PVector> {
        let n = self.system.n;
        let err = |m: String| CliError::Input(format!("system.rho0: {m}"));
        match &self.system.rho0 {
            InitialState::Vector(c) => {
                if c.len() != n * n {
                    return Err(err(format!("expected {} coefficients, got {}", n * n, c.len())));
                }
                if (c[n * n - 1] - 1.0 / n as f64).abs() > 1e-12 {
                    return Err(err(format!("last coefficient must be 1/n = {}", 1.0 / n as f64)));
                }
                Ok(PVector::new(c.clone()))
            }
            InitialState::Named(name) => {
                let level = match name.as_str() {
                    "mixed" => return Ok(PVector::mixed(n)),
                    "up" => 0,
                    "down" if n == 2 => 1,
                    other => other
                        .strip_prefix("level")
                        .and_then(|k| k.parse::<usize>().ok())
                        .filter(|k| *k < n)
                        .ok_or_else(|| {
                            err(format!("unknown state {other:?} (mixed, up, down, level0..level{})", n - 1))
                        })?,
                };
                Ok(level_state(n, level))
            }
        }
    }

    pub fn two_level(&self) -> Option<TwoLevel> {
        let s = &self.system;
        if s.n != 2 || s.segments.len() != 1 || s.v != [0.0, 0.0, 1.0, 0.0] || s.segments[0].h.len() != 3 {
            return None;
        }
        let h = &s.segments[0].h;
        if h[1] != 0.0 {
            return None;
        }
        Some(TwoLevel { eps: 2.0 * h[2], delta: 2.0 * h[0] })
    }
}

/// `|k><k|` in the Gell-Mann coefficient layout.
fn level_state(n: usize, k: usize) -> PVector {
    let basis = tiered_core::SuBasis::new(n).expect("n >= 2 checked by the model");
    let mut c = vec![0.0; n * n];
    for (i, nu) in basis.generators().iter().enumerate() {
        c[i] = 0.5 * nu[(k, k)].re;
    }
    c[n * n - 1] = 1.0 / n as f64;
    PVector::new(c)
}
