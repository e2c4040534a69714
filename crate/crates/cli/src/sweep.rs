//! One-parameter sweeps of the closed-form rates.

use std::fmt::Write as _;

use clap::ValueEnum;
use tiered_core::rates::{multimode_rates, rabi_frequency};

use crate::error::{CliError, CliResult};
use crate::output::fmt;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Frequency of the selected mode.
    Omega,
    /// Coupling of the selected mode.
    G,
    /// Damping of the selected mode.
    Gamma,
    Eps,
    Delta,
    #[value(name = "kT")]
    Kt,
}

impl SweepParam {
    fn column(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::G => "g",
            SweepParam::Gamma => "gamma",
            SweepParam::Eps => "eps",
            SweepParam::Delta => "delta",
            SweepParam::Kt => "kT",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub mode: usize,
    /// Keep `gamma = ratio * omega` for the selected mode.
    pub gamma_ratio: Option<f64>,
}

pub fn values(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect(),
    }
}

fn apply(sc: &mut Scenario, spec: &SweepSpec, x: f64) -> CliResult<()> {
    let mode_param = matches!(spec.param, SweepParam::Omega | SweepParam::G | SweepParam::Gamma);
    if mode_param || spec.gamma_ratio.is_some() {
        let count = sc.bath.modes.len();
        let m = sc.bath.modes.get_mut(spec.mode).ok_or_else(|| {
            CliError::Input(format!("--mode {} is out of range: the bath has {count} discrete modes", spec.mode))
        })?;
        match spec.param {
            SweepParam::Omega => m.omega = x,
            SweepParam::G => m.g = x,
            SweepParam::Gamma => m.gamma = x,
            _ => {}
        }
        if let Some(r) = spec.gamma_ratio {
            m.gamma = r * m.omega;
        }
    }
    let h = &mut sc.system.segments[0].h;
    match spec.param {
        SweepParam::Eps => h[2] = 0.5 * x,
        SweepParam::Delta => h[0] = 0.5 * x,
        SweepParam::Kt => {
            sc.bath.kt = Some(x);
            sc.bath.beta = None;
        }
        _ => {}
    }
    Ok(())
}

/// CSV with one row per parameter value; undefined quantities print as `nan`.
pub fn sweep(base: &Scenario, spec: &SweepSpec) -> CliResult<String> {
    if spec.points == 0 {
        return Err(CliError::Input("--points must be at least 1".into()));
    }
    if base.two_level().is_none() {
        return Err(CliError::Input(
            "sweep needs a static two-level system with V = sigma_z and no sigma_y term".into(),
        ));
    }
    let mut out =
        format!("{},omega_rabi,gamma_relax,gamma_dephase,lamb_shift,t_eff,steady_sigma_z_tilde\n", spec.param.column());
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt);
    for x in values(spec.from, spec.to, spec.points) {
        let mut sc = base.clone();
        apply(&mut sc, spec, x)?;
        let tl = sc.two_level().expect("sweep keeps the model shape");
        let env = sc.environment()?;
        let r = multimode_rates(tl.eps, tl.delta, &env)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt(x),
            fmt(rabi_frequency(tl.eps, tl.delta)),
            fmt(r.gamma_relax),
            fmt(r.gamma_dephase),
            fmt(r.lamb_shift),
            opt(r.t_eff),
            opt(r.steady_sigma_z_tilde)
        )
        .unwrap();
    }
    Ok(out)
}
