//! Environment description and the damped response kernel
//! `alpha(tau) = D(tau) + i D1(tau)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, validation, Result};
use crate::quadrature::gauss_legendre_on;

/// Harmonic mode of the immediate environment, damped at rate `gamma` by the
/// wider bath. Frequencies in ps^-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampedMode {
    pub omega: f64,
    pub g: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl DampedMode {
    pub fn new(omega: f64, g: f64, gamma: f64) -> Self {
        Self { omega, g, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !(self.g >= 0.0) || !(self.gamma >= 0.0) {
            return Err(validation(format!("mode needs omega > 0, g >= 0, gamma >= 0 (got {:?})", self)));
        }
        Ok(())
    }

    /// `gamma > 0.2 omega`: outside the weak-damping regime the Lindblad
    /// description of the mode is only qualitative.
    pub fn strongly_damped(&self) -> bool {
        self.gamma > 0.2 * self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffForm {
    Gaussian,
    Exponential,
}

/// Damping rate of continuum modes as a function of frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GammaProfile {
    #[default]
    Zero,
    Constant(f64),
    /// Linear interpolation, clamped at the ends.
    Tabulated {
        omega: Vec<f64>,
        gamma: Vec<f64>,
    },
}

impl GammaProfile {
    pub fn at(&self, w: f64) -> f64 {
        match self {
            GammaProfile::Zero => 0.0,
            GammaProfile::Constant(g) => *g,
            GammaProfile::Tabulated { omega, gamma } => interp(omega, gamma, w),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GammaProfile::Zero => Ok(()),
            GammaProfile::Constant(g) if *g >= 0.0 => Ok(()),
            GammaProfile::Constant(g) => Err(validation(format!("negative damping {g}"))),
            GammaProfile::Tabulated { omega, gamma } => {
                check_table(omega, gamma, "gamma profile")?;
                if gamma.iter().any(|g| *g < 0.0) {
                    return Err(validation("gamma profile has negative entries"));
                }
                Ok(())
            }
        }
    }
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let k = x.partition_point(|&xi| xi <= at) - 1;
    let s = (at - x[k]) / (x[k + 1] - x[k]);
    y[k] + s * (y[k + 1] - y[k])
}

fn check_table(x: &[f64], y: &[f64], what: &str) -> Result<()> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(validation(format!("{what}: need >= 2 points and equal lengths")));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(validation(format!("{what}: grid must be strictly ascending")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralDensity {
    DiscreteSet {
        modes: Vec<DampedMode>,
    },
    /// `J(w) = alpha w^s exp(-w^2/wc^2)` or `alpha w^s exp(-w/wc)`.
    OhmicFamily {
        alpha: f64,
        s: f64,
        omega_c: f64,
        cutoff: CutoffForm,
        #[serde(default)]
        gamma: GammaProfile,
    },
    Tabulated {
        omega: Vec<f64>,
        j: Vec<f64>,
        gamma: Vec<f64>,
    },
}

impl SpectralDensity {
    pub fn modes(modes: Vec<DampedMode>) -> Self {
        SpectralDensity::DiscreteSet { modes }
    }

    pub fn ohmic_gaussian(alpha: f64, s: f64, omega_c: f64) -> Self {
        SpectralDensity::OhmicFamily { alpha, s, omega_c, cutoff: CutoffForm::Gaussian, gamma: GammaProfile::Zero }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, SpectralDensity::DiscreteSet { .. })
    }

    /// Continuum density `J(w)`; `None` for discrete sets.
    pub fn j(&self, w: f64) -> Option<f64> {
        match self {
            SpectralDensity::DiscreteSet { .. } => None,
            SpectralDensity::OhmicFamily { alpha, s, omega_c, cutoff, .. } => {
                if w <= 0.0 {
                    return Some(0.0);
                }
                let c = match cutoff {
                    CutoffForm::Gaussian => (-(w / omega_c).powi(2)).exp(),
                    CutoffForm::Exponential => (-w / omega_c).exp(),
                };
                Some(alpha * w.powf(*s) * c)
            }
            SpectralDensity::Tabulated { omega, j, .. } => {
                if w < omega[0] || w > omega[omega.len() - 1] {
                    Some(0.0)
                } else {
                    Some(interp(omega, j, w))
                }
            }
        }
    }

    /// `lim_{w->0} J(w)/w`, used by the weak-coupling pure-dephasing term.
    pub fn ohmic_slope(&self) -> Option<f64> {
        match self {
            SpectralDensity::DiscreteSet { .. } => None,
            SpectralDensity::OhmicFamily { alpha, s, .. } => Some(if *s == 1.0 {
                *alpha
            } else if *s > 1.0 {
                0.0
            } else {
                f64::INFINITY
            }),
            SpectralDensity::Tabulated { omega, j, .. } => {
                if omega[0] > 0.0 {
                    Some(j[0] / omega[0])
                } else {
                    Some(j[1] / omega[1])
                }
            }
        }
    }

    pub fn gamma_at(&self, w: f64) -> f64 {
        match self {
            SpectralDensity::DiscreteSet { .. } => 0.0,
            SpectralDensity::OhmicFamily { gamma, .. } => gamma.at(w),
            SpectralDensity::Tabulated { omega, gamma, .. } => interp(omega, gamma, w),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::DiscreteSet { modes } => modes.iter().try_for_each(|m| m.validate()),
            SpectralDensity::OhmicFamily { alpha, s, omega_c, gamma, .. } => {
                if !(*alpha >= 0.0) || !(*omega_c > 0.0) || !(*s > 0.0) {
                    return Err(validation("ohmic family needs alpha >= 0, s > 0, omega_c > 0"));
                }
                gamma.validate()
            }
            SpectralDensity::Tabulated { omega, j, gamma } => {
                check_table(omega, j, "tabulated J")?;
                check_table(omega, gamma, "tabulated gamma")?;
                if omega[0] < 0.0 {
                    return Err(validation("tabulated J: negative frequencies"));
                }
                if j.iter().any(|v| *v < 0.0) {
                    return Err(validation("tabulated J has negative entries"));
                }
                if gamma.iter().any(|v| *v < 0.0) {
                    return Err(validation("tabulated gamma has negative entries"));
                }
                Ok(())
            }
        }
    }
}

/// Inverse temperature, `hbar = k_B = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermal {
    pub beta: f64,
}

impl Thermal {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(validation(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn from_kt(kt: f64) -> Result<Self> {
        Self::new(1.0 / kt)
    }

    pub fn kt(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn coth_half(&self, w: f64) -> f64 {
        1.0 / (0.5 * self.beta * w).tanh()
    }
}

pub fn thermal_occupation(omega: f64, thermal: &Thermal) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(validation(format!("occupation needs omega > 0, got {omega}")));
    }
    Ok(1.0 / (thermal.beta * omega).exp_m1())
}

/// Discretization of the continuum frequency integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes: usize,
    /// Upper limit as a multiple of `omega_c`.
    pub omega_max_factor: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { nodes: 200, omega_max_factor: 5.0 }
    }
}

/// One term of the kernel sum: `weight` plays the role of `g^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNode {
    pub omega: f64,
    pub weight: f64,
    pub gamma: f64,
}

pub fn frequency_quadrature(spec: &SpectralDensity, cfg: &QuadratureConfig) -> Result<Vec<KernelNode>> {
    spec.validate()?;
    match spec {
        SpectralDensity::DiscreteSet { modes } => {
            Ok(modes.iter().map(|m| KernelNode { omega: m.omega, weight: m.g * m.g, gamma: m.gamma }).collect())
        }
        SpectralDensity::OhmicFamily { omega_c, .. } => {
            if cfg.nodes < 2 || !(cfg.omega_max_factor > 0.0) {
                return Err(config("quadrature needs >= 2 nodes and a positive omega_max"));
            }
            let wmax = cfg.omega_max_factor * omega_c;
            let (x, w) = gauss_legendre_on(cfg.nodes, 0.0, wmax);
            let jv: Vec<f64> = x.iter().map(|&xi| spec.j(xi).unwrap()).collect();
            let peak = jv.iter().cloned().fold(0.0, f64::max);
            let tail = spec.j(wmax).unwrap();
            if peak > 0.0 && tail > 1e-6 * peak {
                return Err(config(format!(
                    "J has not decayed by omega_max = {wmax} (J/Jmax = {:.2e}); raise omega_max_factor",
                    tail / peak
                )));
            }
            Ok(x.iter()
                .zip(&w)
                .zip(&jv)
                .filter(|(_, j)| **j > 0.0)
                .map(|((&om, &wt), &j)| KernelNode { omega: om, weight: wt * j, gamma: spec.gamma_at(om) })
                .collect())
        }
        SpectralDensity::Tabulated { omega, j, gamma } => {
            let n = omega.len();
            Ok((0..n)
                .filter(|&k| omega[k] > 0.0 && j[k] > 0.0)
                .map(|k| {
                    let left = if k > 0 { omega[k] - omega[k - 1] } else { 0.0 };
                    let right = if k + 1 < n { omega[k + 1] - omega[k] } else { 0.0 };
                    KernelNode { omega: omega[k], weight: 0.5 * (left + right) * j[k], gamma: gamma[k] }
                })
                .collect())
        }
    }
}

/// An environment: one or more spectral components at a common temperature.
/// Components add in the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub parts: Vec<SpectralDensity>,
    pub thermal: Thermal,
    pub quadrature: QuadratureConfig,
}

impl Environment {
    pub fn new(parts: Vec<SpectralDensity>, thermal: Thermal) -> Self {
        Self { parts, thermal, quadrature: QuadratureConfig::default() }
    }

    pub fn single_mode(mode: DampedMode, thermal: Thermal) -> Self {
        Self::new(vec![SpectralDensity::modes(vec![mode])], thermal)
    }

    /// Discrete modes of all `DiscreteSet` parts.
    pub fn discrete_modes(&self) -> Vec<DampedMode> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                SpectralDensity::DiscreteSet { modes } => Some(modes.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn is_discrete(&self) -> bool {
        self.parts.iter().all(|p| p.is_discrete())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let mut nodes = Vec::new();
        for p in &self.parts {
            nodes.extend(frequency_quadrature(p, &self.quadrature)?);
        }
        Ok(Kernel { nodes, thermal: self.thermal })
    }
}

/// Kernel as an explicit sum over frequency nodes, evaluable at any `tau`.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub nodes: Vec<KernelNode>,
    pub thermal: Thermal,
}

impl Kernel {
    pub fn from_nodes(nodes: Vec<KernelNode>, thermal: Thermal) -> Self {
        Self { nodes, thermal }
    }

    /// `(D(tau), D1(tau))`.
    pub fn eval(&self, tau: f64) -> (f64, f64) {
        let mut d = 0.0;
        let mut d1 = 0.0;
        for nd in &self.nodes {
            let env = nd.weight * (-0.5 * nd.gamma * tau).exp();
            let (s, c) = (nd.omega * tau).sin_cos();
            d += env * self.thermal.coth_half(nd.omega) * c;
            d1 -= env * s;
        }
        (d, d1)
    }

    pub fn sample(&self, tau: &[f64]) -> KernelSamples {
        let (d, d1): (Vec<f64>, Vec<f64>) = tau.par_iter().map(|&t| self.eval(t)).unzip();
        KernelSamples { tau: tau.to_vec(), d, d1 }
    }

    pub fn sample_uniform(&self, h: f64, len: usize) -> KernelSamples {
        let tau: Vec<f64> = (0..len).map(|k| k as f64 * h).collect();
        self.sample(&tau)
    }
}

/// Kernel values on an ascending grid starting at `tau = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSamples {
    pub tau: Vec<f64>,
    pub d: Vec<f64>,
    pub d1: Vec<f64>,
}

impl KernelSamples {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Grid step, assuming a uniform grid.
    pub fn step(&self) -> f64 {
        if self.tau.len() < 2 {
            0.0
        } else {
            self.tau[1] - self.tau[0]
        }
    }

    pub fn abs_alpha(&self, k: usize) -> f64 {
        self.d[k].hypot(self.d1[k])
    }

    /// Index just past the last sample with `|alpha| >= rel_tol |alpha(0)|`;
    /// `None` if the kernel has not decayed by the end of the grid.
    pub fn memory_index(&self, rel_tol: f64) -> Option<usize> {
        let a0 = self.abs_alpha(0);
        let thr = rel_tol * a0;
        let last = (0..self.len()).rev().find(|&k| self.abs_alpha(k) >= thr)?;
        if last + 1 >= self.len() {
            None
        } else {
            Some(last + 1)
        }
    }

    /// Memory time `tau_b` at relative threshold `rel_tol`.
    pub fn memory_time(&self, rel_tol: f64) -> Option<f64> {
        self.memory_index(rel_tol).map(|k| self.tau[k])
    }

    /// Copy with samples at and beyond index `k` set to zero.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        for i in k..out.len() {
            out.d[i] = 0.0;
            out.d1[i] = 0.0;
        }
        out
    }
}

/// Default truncation threshold for the kernel memory time.
pub const MEMORY_REL_TOL: f64 = 1e-6;
