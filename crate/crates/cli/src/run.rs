//! Executes the methods requested by a scenario.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use tiered_core::bath::KernelSamples;
use tiered_core::higher_orders::theta_series;
use tiered_core::influence::{
    evolve, reorg_times, spin_boson_delta, steady_state_spinboson, theta_quadrature, theta_spinboson, ReorgTimes,
    SpinBosonTheta,
};
use tiered_core::oracle::{lindblad_evolve, tcl2_reference, wcme_evolve};
use tiered_core::rates::{multimode_rates, rabi_frequency, wcme_generator};
use tiered_core::{Environment, FockConfig, InfluenceMatrix, RateReport, ReducedTrajectory, SystemModel};

use crate::error::{CliError, CliResult};
use crate::output::{Block, Table};
use crate::scenario::{InfluencePath, OracleKind, OracleSpec, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub source: &'static str,
    pub expectations: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub influence_max_imag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub influence_path: Option<&'static str>,
    /// `max |Theta(all) - sum_k Theta(part k)|` when decomposed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additivity_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_n_fock: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_max_trace_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub scenario: Scenario,
    pub methods: Vec<String>,
    pub order: usize,
    pub rates: Option<RateReport>,
    pub reorg_times: Option<ReorgTimes>,
    pub steady_state: Option<SteadyState>,
    pub diagnostics: Diagnostics,
    pub timings_s: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

pub struct RunOutput {
    pub table: Table,
    pub summary: Summary,
    /// `(t, theta_relax, envelope)` from the closed-form path.
    pub envelope: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

/// Which blocks to compute; `oracle` subcommand forces oracle-only runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Scenario,
    OracleOnly,
}

pub fn run(sc: &Scenario, sel: Selection) -> CliResult<RunOutput> {
    let model = sc.model()?;
    let env = sc.environment()?;
    let grid = sc.time_grid()?;
    let rho0 = sc.initial_state()?;
    let order = sc.methods.higher_order.map_or(2, |h| h.order);
    let mut table = Table::new(model.n());
    let mut diag = Diagnostics::default();
    let mut timings = BTreeMap::new();
    let mut notes = Vec::new();
    let mut envelope = None;

    let needs_samples = sel == Selection::Scenario && sc.methods.influence.is_some();
    let samples = if needs_samples { Some(env.kernel()?.sample_uniform(grid.dt, grid.len)) } else { None };

    if let (Selection::Scenario, Some(spec)) = (sel, sc.methods.influence) {
        let start = Instant::now();
        let samples = samples.as_ref().expect("sampled above");
        let (theta, path, sb) = if order == 4 {
            if !env.is_discrete() {
                return Err(CliError::Input(
                    "order 4 needs a bath of discrete modes only; drop the continuous densities or use order 2".into(),
                ));
            }
            let s = theta_series(&env.discrete_modes(), &model, &env.thermal, &grid, 4)?;
            (s.total(), "moments", None)
        } else {
            second_order_theta(&model, samples, &grid, spec.path)?
        };
        let tr = evolve(&model, &theta, &rho0)?;
        diag.influence_max_imag = Some(tr.max_imag);
        diag.influence_path = Some(path);
        table.blocks.push(Block::from_trajectory("influence", &tr));
        if let Some(sb) = sb {
            envelope = Some((sb.t.clone(), sb.theta_relax.clone(), sb.envelope()));
        }
        if spec.decompose {
            let residual = decompose(&model, &env, &grid, &rho0, &theta, order, spec.path, &mut table)?;
            diag.additivity_residual = Some(residual);
        }
        timings.insert("influence".into(), start.elapsed().as_secs_f64());
    }

    if sel == Selection::Scenario && sc.methods.wcme {
        let start = Instant::now();
        let tl = sc.two_level().ok_or_else(|| {
            CliError::Input("wcme needs a static two-level system with V = sigma_z and no sigma_y term".into())
        })?;
        let gen = wcme_generator(tl.eps, tl.delta, &env, &model.basis)?;
        let tr = wcme_evolve(&gen, &rho0, &grid)?;
        table.blocks.push(Block::from_trajectory("wcme", &tr));
        timings.insert("wcme".into(), start.elapsed().as_secs_f64());
    }

    let oracle_spec = match sel {
        Selection::OracleOnly => Some(sc.methods.oracle.unwrap_or_default()),
        Selection::Scenario => sc.methods.oracle,
    };
    if let Some(spec) = oracle_spec {
        let start = Instant::now();
        let tr = oracle(&model, &env, &grid, &rho0, &spec, &mut diag)?;
        let label = match spec.kind {
            OracleKind::Lindblad => "oracle",
            OracleKind::Tcl2 => "tcl2",
        };
        table.blocks.push(Block::from_trajectory(label, &tr));
        timings.insert(label.into(), start.elapsed().as_secs_f64());
    }

    let mut rates = None;
    let mut reorg = None;
    let mut steady = None;
    if let Some(tl) = sc.two_level() {
        match multimode_rates(tl.eps, tl.delta, &env) {
            Ok(r) => {
                if let Some(p) = r.steady_sigma_z_tilde {
                    let om = rabi_frequency(tl.eps, tl.delta);
                    steady = Some(SteadyState {
                        source: "rates",
                        expectations: vec![p * tl.delta / om, 0.0, p * tl.eps / om],
                    });
                }
                rates = Some(r);
            }
            Err(e) => notes.push(format!("rates unavailable: {e}")),
        }
        if tl.eps == 0.0 && !env.parts.is_empty() {
            if let Some(s) = samples.as_ref() {
                match reorg_times(s, tl.delta) {
                    Ok(r) => reorg = Some(r),
                    Err(e) => notes.push(format!("reorganization times unavailable: {e}")),
                }
                if let Ok(p) = steady_state_spinboson(s, tl.delta) {
                    steady = Some(SteadyState { source: "closed_form", expectations: p.expectations() });
                }
            }
        }
    } else {
        notes.push("rates need a static two-level system with V = sigma_z and no sigma_y term".into());
    }

    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        scenario: sc.clone(),
        methods: table.methods().iter().map(|s| s.to_string()).collect(),
        order,
        rates,
        reorg_times: reorg,
        steady_state: steady,
        diagnostics: diag,
        timings_s: timings,
        notes,
    };
    Ok(RunOutput { table, summary, envelope })
}

fn second_order_theta(
    model: &SystemModel,
    samples: &KernelSamples,
    grid: &tiered_core::TimeGrid,
    path: InfluencePath,
) -> CliResult<(InfluenceMatrix, &'static str, Option<SpinBosonTheta>)> {
    let closed = match path {
        InfluencePath::Quadrature => false,
        InfluencePath::ClosedForm => {
            spin_boson_delta(model)
                .map_err(|e| CliError::Input(format!("methods.influence.path = closed_form: {e}")))?;
            true
        }
        InfluencePath::Auto => spin_boson_delta(model).is_ok(),
    };
    if closed {
        let sb = theta_spinboson(model, samples, grid)?;
        Ok((sb.total(), "closed_form", Some(sb)))
    } else {
        Ok((theta_quadrature(model, samples, grid)?, "quadrature", None))
    }
}

/// One block per bath component, same path as the total; returns the
/// additivity residual.
#[allow(clippy::too_many_arguments)]
fn decompose(
    model: &SystemModel,
    env: &Environment,
    grid: &tiered_core::TimeGrid,
    rho0: &tiered_core::PVector,
    total: &InfluenceMatrix,
    order: usize,
    path: InfluencePath,
    table: &mut Table,
) -> CliResult<f64> {
    if order != 2 {
        return Err(CliError::Input("decompose is only meaningful at order 2 (higher orders are not additive)".into()));
    }
    let mut sum: Option<InfluenceMatrix> = None;
    for (k, part) in env.parts.iter().enumerate() {
        let one = Environment { parts: vec![part.clone()], thermal: env.thermal, quadrature: env.quadrature };
        let (theta, _, _) = second_order_theta(model, &one.kernel()?.sample_uniform(grid.dt, grid.len), grid, path)?;
        let tr = evolve(model, &theta, rho0)?;
        table.blocks.push(Block::from_trajectory(&format!("influence:part{k}"), &tr));
        sum = Some(match sum {
            None => theta,
            Some(s) => s.add(&theta)?,
        });
    }
    Ok(sum.map_or(0.0, |s| s.max_abs_diff(total)))
}

fn oracle(
    model: &SystemModel,
    env: &Environment,
    grid: &tiered_core::TimeGrid,
    rho0: &tiered_core::PVector,
    spec: &OracleSpec,
    diag: &mut Diagnostics,
) -> CliResult<ReducedTrajectory> {
    match spec.kind {
        OracleKind::Tcl2 => Ok(tcl2_reference(model, &env.kernel()?, grid, rho0)?),
        OracleKind::Lindblad => {
            if !env.is_discrete() {
                return Err(CliError::Input(
                    "the Lindblad oracle needs discrete modes only; use methods.oracle.kind = \"tcl2\" for undamped continua"
                        .into(),
                ));
            }
            let modes = env.discrete_modes();
            let n_fock = match (spec.n_fock, spec.representation) {
                (Some(n), _) => n,
                (None, tiered_core::ModeRepresentation::Thermal) => {
                    FockConfig::required_n_fock(&modes, &env.thermal, 1e-8)?
                }
                (None, tiered_core::ModeRepresentation::Thermofield) => {
                    return Err(CliError::Input(
                        "methods.oracle.n_fock is required for the thermofield representation".into(),
                    ))
                }
            };
            let mut cfg = FockConfig::new(modes, n_fock);
            cfg.representation = spec.representation;
            cfg.rtol = spec.rtol;
            cfg.atol = spec.atol;
            let tr = lindblad_evolve(model, &cfg, &env.thermal, rho0, &grid.times())?;
            diag.oracle_n_fock = Some(n_fock);
            diag.oracle_max_trace_error = Some(tr.max_trace_error);
            diag.oracle_steps = Some(tr.stats.accepted);
            Ok(tr.into_reduced())
        }
    }
}
