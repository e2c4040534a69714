//! Closed-form rates, Lamb shift and effective temperature for a two-level
//! system `eps/2 sigma_z + Delta/2 sigma_x` coupled via `sigma_z`, plus the
//! weak-coupling (Born-Markov) baseline.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bath::{frequency_quadrature, DampedMode, Environment, KernelNode, SpectralDensity, Thermal};
use crate::error::{validation, Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::su_basis::{superoperator_matrix, SuBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub gamma_relax: f64,
    pub gamma_dephase: f64,
    /// Coefficient of `sigma~_z / 2` added to the system Hamiltonian.
    pub lamb_shift: f64,
    /// `k_B T_eff`; `None` when the model has no steady state to define it.
    pub t_eff: Option<f64>,
    pub steady_sigma_z_tilde: Option<f64>,
    /// False when no mode is damped, so the predicted steady state is never reached.
    pub thermalizes: bool,
}

pub fn rabi_frequency(eps: f64, delta: f64) -> f64 {
    eps.hypot(delta)
}

/// `k_B T` of the Gibbs state of `Omega/2 sigma~_z` with `<sigma~_z> = p`.
pub fn effective_temperature(omega_rabi: f64, p: f64) -> Option<f64> {
    let a = -p;
    if !(a > 0.0 && a < 1.0) {
        return None;
    }
    Some(omega_rabi / (2.0 * a.atanh()))
}

fn lorentz(gamma: f64, x: f64) -> f64 {
    gamma / (0.25 * gamma * gamma + x * x)
}

fn dispersive(gamma: f64, x: f64) -> f64 {
    x / (0.25 * gamma * gamma + x * x)
}

fn check_omega(eps: f64, delta: f64) -> Result<f64> {
    let om = rabi_frequency(eps, delta);
    if !(om > 0.0) {
        return Err(validation("Rabi frequency must be positive"));
    }
    Ok(om)
}

fn node_rates(eps: f64, delta: f64, nodes: &[KernelNode], thermal: &Thermal) -> Result<RateReport> {
    let om = check_omega(eps, delta)?;
    let (c2, s2) = (delta * delta / (om * om), eps * eps / (om * om));
    let mut relax = 0.0;
    let mut pure = 0.0;
    let mut ls = 0.0;
    let mut pol_num = 0.0;
    let mut thermalizes = false;
    for nd in nodes {
        let (w, g2, gm) = (nd.omega, nd.weight, nd.gamma);
        let coth = thermal.coth_half(w);
        ls += g2 * coth * c2 * (dispersive(gm, om - w) + dispersive(gm, om + w));
        if gm == 0.0 {
            continue;
        }
        thermalizes = true;
        let (lm, lp) = (lorentz(gm, om - w), lorentz(gm, om + w));
        relax += g2 * coth * c2 * (lm + lp);
        pol_num += g2 * c2 * (lm - lp);
        pure += 2.0 * g2 * coth * s2 * lorentz(gm, w);
    }
    let (p, t_eff) = if thermalizes && relax > 0.0 {
        let p = -pol_num / relax;
        (Some(p), effective_temperature(om, p))
    } else {
        (None, None)
    };
    Ok(RateReport {
        gamma_relax: relax,
        gamma_dephase: 0.5 * relax + pure,
        lamb_shift: ls,
        t_eff,
        steady_sigma_z_tilde: p,
        thermalizes,
    })
}

/// Rates for a single damped mode.
pub fn rabi_rates(eps: f64, delta: f64, mode: &DampedMode, thermal: &Thermal) -> Result<RateReport> {
    mode.validate()?;
    let r = node_rates(
        eps,
        delta,
        &[KernelNode { omega: mode.omega, weight: mode.g * mode.g, gamma: mode.gamma }],
        thermal,
    )?;
    if !r.thermalizes {
        log::warn!("undamped mode: rates vanish and the system never thermalizes");
    }
    Ok(r)
}

/// Closed-form steady polarization of a single damped mode,
/// `-2 Omega w / ((gamma/2)^2 + Omega^2 + w^2) tanh(beta w / 2)`.
pub fn steady_polarization(omega_rabi: f64, mode: &DampedMode, thermal: &Thermal) -> f64 {
    let w = mode.omega;
    -2.0 * omega_rabi * w / (0.25 * mode.gamma * mode.gamma + omega_rabi * omega_rabi + w * w)
        * (0.5 * thermal.beta * w).tanh()
}

/// Per-mode sums of the single-mode formulas. Continuum parts without
/// damping are delegated to [`wcme_rates`] and added.
pub fn multimode_rates(eps: f64, delta: f64, env: &Environment) -> Result<RateReport> {
    let mut nodes = Vec::new();
    let mut wcme: Vec<RateReport> = Vec::new();
    for part in &env.parts {
        let undamped_continuum = match part {
            SpectralDensity::DiscreteSet { .. } => false,
            SpectralDensity::OhmicFamily { gamma, .. } => {
                matches!(gamma, crate::bath::GammaProfile::Zero)
                    || matches!(gamma, crate::bath::GammaProfile::Constant(g) if *g == 0.0)
            }
            SpectralDensity::Tabulated { gamma, .. } => gamma.iter().all(|g| *g == 0.0),
        };
        if undamped_continuum {
            wcme.push(wcme_rates_part(eps, delta, part, env)?);
        } else {
            nodes.extend(frequency_quadrature(part, &env.quadrature)?);
        }
    }
    let mut r = node_rates(eps, delta, &nodes, &env.thermal)?;
    let om = rabi_frequency(eps, delta);
    // The weak-coupling parts thermalize at the bath temperature; combine
    // polarizations weighted by their relaxation rates.
    let mut pol = r.steady_sigma_z_tilde.unwrap_or(0.0) * r.gamma_relax;
    for w in &wcme {
        r.gamma_relax += w.gamma_relax;
        r.gamma_dephase += w.gamma_dephase;
        r.lamb_shift += w.lamb_shift;
        pol += w.steady_sigma_z_tilde.unwrap_or(0.0) * w.gamma_relax;
        r.thermalizes |= w.gamma_relax > 0.0;
    }
    if r.thermalizes && r.gamma_relax > 0.0 {
        let p = pol / r.gamma_relax;
        r.steady_sigma_z_tilde = Some(p);
        r.t_eff = effective_temperature(om, p);
    }
    Ok(r)
}

/// Born-Markov rates for a continuum spectral density.
pub fn wcme_rates(eps: f64, delta: f64, env: &Environment) -> Result<RateReport> {
    let mut total: Option<RateReport> = None;
    for part in &env.parts {
        let r = wcme_rates_part(eps, delta, part, env)?;
        total = Some(match total {
            None => r,
            Some(mut t) => {
                t.gamma_relax += r.gamma_relax;
                t.gamma_dephase += r.gamma_dephase;
                t.lamb_shift += r.lamb_shift;
                t
            }
        });
    }
    total.ok_or_else(|| validation("environment has no spectral components"))
}

fn wcme_rates_part(eps: f64, delta: f64, part: &SpectralDensity, env: &Environment) -> Result<RateReport> {
    if part.is_discrete() {
        return Err(Error::Unsupported(
            "weak-coupling rates need a continuous J(omega); discrete modes give delta functions".into(),
        ));
    }
    part.validate()?;
    let om = check_omega(eps, delta)?;
    let th = &env.thermal;
    let c2 = delta * delta / (om * om);
    let s2 = eps * eps / (om * om);
    let j_om = part.j(om).expect("continuous part");
    let relax = 2.0 * std::f64::consts::PI * c2 * j_om * th.coth_half(om);
    let slope = part.ohmic_slope().expect("continuous part");
    let pure = if s2 == 0.0 { 0.0 } else { 4.0 * std::f64::consts::PI * s2 * th.kt() * slope };
    let ls = 2.0 * c2 * lamb_shift_integral(part, om, th, env)?;
    let p = -(0.5 * th.beta * om).tanh();
    Ok(RateReport {
        gamma_relax: relax,
        gamma_dephase: 0.5 * relax + pure,
        lamb_shift: ls,
        t_eff: if relax > 0.0 { Some(th.kt()) } else { None },
        steady_sigma_z_tilde: if relax > 0.0 { Some(p) } else { None },
        thermalizes: relax > 0.0,
    })
}

/// `PV int_0^wmax J(w) coth(beta w / 2) Omega / (Omega^2 - w^2) dw`.
///
/// Splits `Omega/(Omega^2 - w^2) = [1/(Omega - w) + 1/(Omega + w)] / 2` and
/// subtracts the pole of the first term analytically.
fn lamb_shift_integral(part: &SpectralDensity, om: f64, th: &Thermal, env: &Environment) -> Result<f64> {
    let wmax = match part {
        SpectralDensity::OhmicFamily { omega_c, .. } => env.quadrature.omega_max_factor * omega_c,
        SpectralDensity::Tabulated { omega, .. } => omega[omega.len() - 1],
        SpectralDensity::DiscreteSet { .. } => unreachable!("checked by caller"),
    };
    if om >= wmax {
        return Err(Error::Unsupported(format!("Rabi frequency {om} lies beyond the spectral cutoff {wmax}")));
    }
    let f = |w: f64| if w > 0.0 { 0.5 * part.j(w).unwrap() * th.coth_half(w) } else { 0.0 };
    let (x, w) = gauss_legendre_on(env.quadrature.nodes, 0.0, wmax);
    let f_om = f(om);
    let mut s = 0.0;
    for (&xi, &wi) in x.iter().zip(&w) {
        let dx = om - xi;
        if dx.abs() < 1e-12 * om {
            return Err(Error::Numerical(format!("quadrature node coincides with the pole at {om}")));
        }
        s += wi * ((f(xi) - f_om) / dx + f(xi) / (om + xi));
    }
    s += f_om * (om / (wmax - om)).ln();
    Ok(s)
}

/// Weak-coupling Liouvillian in the vectorized representation: Hamiltonian
/// with Lamb shift, relaxation between the eigenstates of the system and pure
/// dephasing.
pub fn wcme_generator(eps: f64, delta: f64, env: &Environment, basis: &SuBasis) -> Result<DMatrix<C64>> {
    if basis.n() != 2 {
        return Err(Error::Unsupported("weak-coupling generator is defined for two-level systems".into()));
    }
    let r = wcme_rates(eps, delta, env)?;
    let om = rabi_frequency(eps, delta);
    let n_om = 1.0 / (env.thermal.beta * om).exp_m1();
    let down = r.gamma_relax * (n_om + 1.0) / (2.0 * n_om + 1.0);
    let up = r.gamma_relax * n_om / (2.0 * n_om + 1.0);
    let pure = r.gamma_dephase - 0.5 * r.gamma_relax;

    let c = |x: f64| C64::new(x, 0.0);
    let sx = DMatrix::from_row_slice(2, 2, &[c(0.), c(1.), c(1.), c(0.)]);
    let sz = DMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(-1.)]);
    // sigma~_z = (eps sigma_z + Delta sigma_x) / Omega; lowering operator
    // maps its +1 eigenvector onto its -1 eigenvector.
    let szt = (&sz * c(eps) + &sx * c(delta)) / c(om);
    let eig = nalgebra::SymmetricEigen::new(szt.clone());
    let (lo, hi) = if eig.eigenvalues[0] < eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let e_lo = eig.eigenvectors.column(lo).into_owned();
    let e_hi = eig.eigenvectors.column(hi).into_owned();
    let sminus = &e_lo * e_hi.adjoint();
    let splus = sminus.adjoint();
    let h = &szt * c(0.5 * (om + r.lamb_shift));

    let dissip = |l: &DMatrix<C64>, rho: &DMatrix<C64>| -> DMatrix<C64> {
        let ldl = l.adjoint() * l;
        l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * c(0.5)
    };
    let gen = |rho: &DMatrix<C64>| -> DMatrix<C64> {
        let comm = &h * rho - rho * &h;
        comm * C64::new(0.0, -1.0)
            + dissip(&sminus, rho) * c(down)
            + dissip(&splus, rho) * c(up)
            + (&szt * rho * &szt - rho) * c(0.5 * pure)
    };
    superoperator_matrix(basis, gen)
}
