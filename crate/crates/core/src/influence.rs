//! Second-order influence functional `Theta(t)` and the reduced dynamics
//! `rho(t) = U(t) exp(Theta(t)) rho(0)`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bath::{KernelSamples, MEMORY_REL_TOL};
use crate::error::{config, Error, Result};
use crate::quadrature::{cumtrapz, trapz};
use crate::su_basis::PVector;
use crate::system::SystemModel;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Uniform grid `t_k = k dt`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_max >= 0.0) {
            return Err(config(format!("time grid needs dt > 0 and t_max >= 0 (dt={dt}, t_max={t_max})")));
        }
        let steps = (t_max / dt).round() as usize;
        Ok(Self { dt, len: steps + 1 })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.len - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.t(k)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct InfluenceMatrix {
    pub t: Vec<f64>,
    pub theta: Vec<DMatrix<C64>>,
}

impl InfluenceMatrix {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Pointwise sum; grids must match.
    pub fn add(&self, other: &InfluenceMatrix) -> Result<InfluenceMatrix> {
        if self.t != other.t {
            return Err(config("cannot add influence matrices on different grids"));
        }
        Ok(InfluenceMatrix {
            t: self.t.clone(),
            theta: self.theta.iter().zip(&other.theta).map(|(a, b)| a + b).collect(),
        })
    }

    /// Largest elementwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &InfluenceMatrix) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> InfluenceMatrix {
        InfluenceMatrix { t: self.t.clone(), theta: self.theta.iter().map(|m| m * C64::new(s, 0.0)).collect() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedTrajectory {
    pub t: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<PVector>,
    /// Largest imaginary part discarded when forming the real state vectors.
    pub max_imag: f64,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `<nu_i>(t_k)`.
    pub fn expectations(&self, k: usize) -> Vec<f64> {
        self.states[k].expectations()
    }

    /// Time series of `<nu_i>`.
    pub fn observable(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| 2.0 * s.coeffs[i]).collect()
    }
}

/// Checks kernel coverage for a grid of `len` points and zeroes samples past
/// the memory time.
pub fn prepare_kernel(samples: &KernelSamples, dt: f64, len: usize) -> Result<KernelSamples> {
    if samples.is_empty() || samples.tau[0] != 0.0 {
        return Err(config("kernel samples must start at tau = 0"));
    }
    if samples.len() > 1 && ((samples.step() - dt) / dt).abs() > 1e-9 {
        return Err(config(format!("kernel step {} differs from time step {}", samples.step(), dt)));
    }
    let mut k = samples.memory_index(MEMORY_REL_TOL).unwrap_or(samples.len());
    if k < len && k == samples.len() {
        return Err(config(format!(
            "kernel grid covers {} points but the run needs {} and the kernel has not decayed",
            samples.len(),
            len
        )));
    }
    k = k.min(len);
    let mut out = KernelSamples {
        tau: samples.tau[..k.max(1)].to_vec(),
        d: samples.d[..k.max(1)].to_vec(),
        d1: samples.d1[..k.max(1)].to_vec(),
    };
    out.tau.resize(len, 0.0);
    out.d.resize(len, 0.0);
    out.d1.resize(len, 0.0);
    for (j, t) in out.tau.iter_mut().enumerate() {
        *t = j as f64 * dt;
    }
    Ok(out)
}

fn warn_resolution(model: &SystemModel, dt: f64) {
    let w = model.max_frequency();
    if w > 0.0 && dt > 2.0 * std::f64::consts::PI / w / 20.0 {
        log::warn!("time step {dt} under-resolves the fastest system frequency {w}");
    }
}

/// Interaction-picture `V^x(t)` and `V^o(t)` on the grid, flattened
/// column-major, `d^2` entries per point.
pub(crate) fn rotated_couplings(model: &SystemModel, grid: &TimeGrid) -> (Vec<C64>, Vec<C64>) {
    let vx = model.vcross();
    let vo = model.vcirc();
    let prop = model.propagator();
    let per: Vec<(DMatrix<C64>, DMatrix<C64>)> = (0..grid.len)
        .into_par_iter()
        .map(|k| {
            let u = prop.at(grid.t(k));
            let ua = u.adjoint();
            (&ua * &vx * &u, &ua * &vo * &u)
        })
        .collect();
    let mut x = Vec::with_capacity(grid.len * vx.len());
    let mut o = Vec::with_capacity(grid.len * vx.len());
    for (a, b) in per {
        x.extend_from_slice(a.as_slice());
        o.extend_from_slice(b.as_slice());
    }
    (x, o)
}

/// `Theta(t)` by iterated trapezoid over the uniform grid.
pub fn theta_quadrature(model: &SystemModel, kernel: &KernelSamples, grid: &TimeGrid) -> Result<InfluenceMatrix> {
    warn_resolution(model, grid.dt);
    let ker = prepare_kernel(kernel, grid.dt, grid.len)?;
    let d = model.dim();
    let e = d * d;
    let h = grid.dt;
    let kb = ker.d.iter().zip(&ker.d1).rposition(|(a, b)| *a != 0.0 || *b != 0.0).map_or(0, |k| k + 1);
    let (x, o) = rotated_couplings(model, grid);

    let integrand: Vec<DMatrix<C64>> = (0..grid.len)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![C64::new(0.0, 0.0); e];
            if i > 0 {
                let lo = (i + 1).saturating_sub(kb);
                for j in lo..=i {
                    let w = if j == 0 || j == i { 0.5 * h } else { h };
                    let a = w * ker.d[i - j];
                    let b = I * (w * ker.d1[i - j]);
                    let xj = &x[j * e..(j + 1) * e];
                    let oj = &o[j * e..(j + 1) * e];
                    for ((s, xv), ov) in acc.iter_mut().zip(xj).zip(oj) {
                        *s += xv * a + ov * b;
                    }
                }
            }
            let inner = DMatrix::from_column_slice(d, d, &acc);
            let xi = DMatrix::from_column_slice(d, d, &x[i * e..(i + 1) * e]);
            -(xi * inner)
        })
        .collect();

    let mut theta = Vec::with_capacity(grid.len);
    let mut acc = DMatrix::<C64>::zeros(d, d);
    theta.push(acc.clone());
    for k in 1..grid.len {
        acc += (&integrand[k - 1] + &integrand[k]) * C64::new(0.5 * h, 0.0);
        theta.push(acc.clone());
    }
    Ok(InfluenceMatrix { t: grid.times(), theta })
}

/// Closed-form decomposition for the unbiased spin-boson model.
#[derive(Debug, Clone)]
pub struct SpinBosonTheta {
    pub t: Vec<f64>,
    pub relax: Vec<DMatrix<C64>>,
    pub lamb: Vec<DMatrix<C64>>,
    pub thermal: Vec<DMatrix<C64>>,
    pub rotating: Vec<DMatrix<C64>>,
    /// Scalar `theta_relax(t) = -2 int D(tau)(t - tau) cos(Delta tau)`.
    pub theta_relax: Vec<f64>,
}

impl SpinBosonTheta {
    pub fn total(&self) -> InfluenceMatrix {
        let theta =
            (0..self.t.len()).map(|k| &self.relax[k] + &self.lamb[k] + &self.thermal[k] + &self.rotating[k]).collect();
        InfluenceMatrix { t: self.t.clone(), theta }
    }

    /// Population envelope `1/2 + exp(theta_relax)/2`.
    pub fn envelope(&self) -> Vec<f64> {
        self.theta_relax.iter().map(|th| 0.5 + 0.5 * th.exp()).collect()
    }
}

/// Tunnelling splitting of an unbiased spin-boson model, or an error naming
/// the mismatch.
pub fn spin_boson_delta(model: &SystemModel) -> Result<f64> {
    if model.n() != 2 || !model.is_static() {
        return Err(Error::Unsupported("closed form needs a static two-level system".into()));
    }
    if model.v != [0.0, 0.0, 1.0, 0.0] {
        return Err(Error::Unsupported("closed form needs coupling V = sigma_z".into()));
    }
    let h = &model.segments[0].h;
    if h[2] != 0.0 || h[1] != 0.0 {
        return Err(Error::Unsupported(
            "closed form needs eps = 0 and no sigma_y term; use the quadrature path".into(),
        ));
    }
    if h[0] == 0.0 {
        return Err(Error::Unsupported("closed form needs Delta != 0".into()));
    }
    Ok(2.0 * h[0])
}

pub fn theta_spinboson(model: &SystemModel, kernel: &KernelSamples, grid: &TimeGrid) -> Result<SpinBosonTheta> {
    let delta = spin_boson_delta(model)?;
    let ker = prepare_kernel(kernel, grid.dt, grid.len)?;
    let h = grid.dt;
    let t = grid.times();
    let (c, s): (Vec<f64>, Vec<f64>) = t.iter().map(|&x| ((delta * x).cos(), (delta * x).sin())).unzip();
    let zip = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
    let dc = zip(&ker.d, &c);
    let ds = zip(&ker.d, &s);
    let d1s = zip(&ker.d1, &s);
    // int_0^t f(tau)(t - tau) = t F(t) - G(t), F = cum f, G = cum tau f
    let lin = |f: &[f64]| -> Vec<f64> {
        let a = cumtrapz(f, h);
        let b = cumtrapz(&zip(f, &t), h);
        t.iter().zip(a.iter().zip(&b)).map(|(tt, (x, y))| tt * x - y).collect()
    };
    let i_relax = lin(&dc);
    let i_ls = lin(&ds);
    let i_th = lin(&d1s);
    let cdc = cumtrapz(&dc, h);
    let cds = cumtrapz(&ds, h);

    let z = C64::new(0.0, 0.0);
    let r = |x: f64| C64::new(x, 0.0);
    let mut out = SpinBosonTheta {
        t: t.clone(),
        relax: Vec::with_capacity(grid.len),
        lamb: Vec::with_capacity(grid.len),
        thermal: Vec::with_capacity(grid.len),
        rotating: Vec::with_capacity(grid.len),
        theta_relax: Vec::with_capacity(grid.len),
    };
    for k in 0..grid.len {
        let a = -2.0 * i_relax[k];
        out.theta_relax.push(a);
        out.relax.push(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![r(2.0 * a), r(a), r(a), z])));

        let b = -2.0 * i_ls[k];
        let mut ls = DMatrix::zeros(4, 4);
        ls[(1, 2)] = r(b);
        ls[(2, 1)] = r(-b);
        out.lamb.push(ls);

        let mut th = DMatrix::zeros(4, 4);
        th[(0, 3)] = r(4.0 * i_th[k]);
        out.thermal.push(th);

        // int_0^t D(tau) sin(Delta(t - tau)) = s(t) int D cos - c(t) int D sin
        let rw = -2.0 * (s[k] * cdc[k] - c[k] * cds[k]) / delta;
        let mut m = DMatrix::zeros(4, 4);
        m[(1, 1)] = r(rw * c[k]);
        m[(1, 2)] = r(-rw * s[k]);
        m[(2, 1)] = r(-rw * s[k]);
        m[(2, 2)] = r(-rw * c[k]);
        out.rotating.push(m);
    }
    Ok(out)
}

/// `rho(t_k) = U(t_k) exp(Theta(t_k)) rho0` for each grid time.
pub fn evolve(model: &SystemModel, theta: &InfluenceMatrix, rho0: &PVector) -> Result<ReducedTrajectory> {
    if rho0.len() != model.dim() {
        return Err(Error::Validation(format!(
            "initial state has {} components, expected {}",
            rho0.len(),
            model.dim()
        )));
    }
    let prop = model.propagator();
    let p0 = rho0.coeffs.map(|x| C64::new(x, 0.0));
    let res: Vec<(PVector, f64)> = theta
        .t
        .par_iter()
        .zip(theta.theta.par_iter())
        .map(|(&t, th)| {
            let p = prop.at(t) * (th.clone().exp() * &p0);
            let imag = p.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            (PVector::new(p.iter().map(|z| z.re).collect()), imag)
        })
        .collect();
    let max_imag = res.iter().map(|r| r.1).fold(0.0, f64::max);
    if res.iter().any(|(p, _)| p.coeffs.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numerical("non-finite state in influence trajectory".into()));
    }
    Ok(ReducedTrajectory { t: theta.t.clone(), states: res.into_iter().map(|r| r.0).collect(), max_imag })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReorgTimes {
    pub t_relax: f64,
    pub t_ls: f64,
    pub t_th: f64,
}

fn decayed(kernel: &KernelSamples) -> Result<KernelSamples> {
    let k = kernel
        .memory_index(MEMORY_REL_TOL)
        .ok_or_else(|| Error::DegenerateKernel("kernel has not decayed by the end of its grid".into()))?;
    Ok(KernelSamples { tau: kernel.tau[..k].to_vec(), d: kernel.d[..k].to_vec(), d1: kernel.d1[..k].to_vec() })
}

fn moment_ratio(f: &[f64], tau: &[f64], h: f64, what: &str) -> Result<f64> {
    let den = trapz(f, h);
    if den.abs() < 1e-12 {
        return Err(Error::DegenerateKernel(format!("zeroth moment of the {what} integrand vanishes")));
    }
    let num: Vec<f64> = f.iter().zip(tau).map(|(a, t)| a * t).collect();
    Ok(trapz(&num, h) / den)
}

pub fn reorg_times(kernel: &KernelSamples, delta: f64) -> Result<ReorgTimes> {
    let k = decayed(kernel)?;
    let h = k.step();
    let cos: Vec<f64> = k.tau.iter().map(|t| (delta * t).cos()).collect();
    let sin: Vec<f64> = k.tau.iter().map(|t| (delta * t).sin()).collect();
    let dc: Vec<f64> = k.d.iter().zip(&cos).map(|(a, b)| a * b).collect();
    let ds: Vec<f64> = k.d.iter().zip(&sin).map(|(a, b)| a * b).collect();
    let d1s: Vec<f64> = k.d1.iter().zip(&sin).map(|(a, b)| a * b).collect();
    Ok(ReorgTimes {
        t_relax: moment_ratio(&dc, &k.tau, h, "relaxation")?,
        t_ls: moment_ratio(&ds, &k.tau, h, "Lamb shift")?,
        t_th: moment_ratio(&d1s, &k.tau, h, "thermalization")?,
    })
}

/// Long-time state `1/2 + sigma_x r / 2` with
/// `r = int D1 sin(Delta tau) / int D cos(Delta tau)`.
pub fn steady_state_spinboson(kernel: &KernelSamples, delta: f64) -> Result<PVector> {
    let k = decayed(kernel)?;
    let h = k.step();
    let num: Vec<f64> = k.tau.iter().zip(&k.d1).map(|(t, a)| a * (delta * t).sin()).collect();
    let den: Vec<f64> = k.tau.iter().zip(&k.d).map(|(t, a)| a * (delta * t).cos()).collect();
    let den = trapz(&den, h);
    if den.abs() < 1e-12 {
        return Err(Error::DegenerateKernel("relaxation integral vanishes".into()));
    }
    let ratio = trapz(&num, h) / den;
    Ok(PVector::new(vec![0.5 * ratio, 0.0, 0.0, 0.5]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{Kernel, KernelNode, Thermal};

    fn exp_kernel(tau0: f64, len: usize, h: f64) -> KernelSamples {
        let tau: Vec<f64> = (0..len).map(|k| k as f64 * h).collect();
        let d = tau.iter().map(|t| (-t / tau0).exp()).collect();
        KernelSamples { d1: vec![0.0; len], tau, d }
    }

    #[test]
    fn zero_coupling_gives_zero_theta() {
        let m = SystemModel::spin_boson(0.3, 1.0);
        let grid = TimeGrid::new(0.01, 2.0).unwrap();
        let ker = KernelSamples { tau: grid.times(), d: vec![0.0; grid.len], d1: vec![0.0; grid.len] };
        let th = theta_quadrature(&m, &ker, &grid).unwrap();
        assert!(th.theta.iter().all(|x| x.norm() == 0.0));
        let sb = theta_spinboson(&SystemModel::spin_boson(0.0, 1.0), &ker, &grid).unwrap();
        assert!(sb.total().theta.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn exponential_kernel_reorg_time() {
        let k = exp_kernel(0.5, 4001, 0.005);
        let r = reorg_times(&KernelSamples { d1: k.d.clone(), ..k.clone() }, 0.0);
        // sin(0) makes the LS and th denominators vanish
        assert!(matches!(r, Err(Error::DegenerateKernel(_))));
        let d = decayed(&k).unwrap();
        let tr = moment_ratio(&d.d, &d.tau, 0.005, "x").unwrap();
        assert!((tr - 0.5).abs() < 1e-4, "{tr}");
    }

    #[test]
    fn undamped_mode_is_degenerate() {
        let th = Thermal::new(1.0).unwrap();
        let k = Kernel::from_nodes(vec![KernelNode { omega: 1.0, weight: 0.01, gamma: 0.0 }], th);
        let s = k.sample_uniform(0.01, 5000);
        assert!(matches!(reorg_times(&s, 1.0), Err(Error::DegenerateKernel(_))));
        assert!(matches!(steady_state_spinboson(&s, 1.0), Err(Error::DegenerateKernel(_))));
    }

    #[test]
    fn biased_model_rejected_by_closed_form() {
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let ker = exp_kernel(1.0, grid.len, 0.1);
        let m = SystemModel::spin_boson(0.2, 1.0);
        assert!(matches!(theta_spinboson(&m, &ker, &grid), Err(Error::Unsupported(_))));
    }

    #[test]
    fn short_kernel_is_config_error() {
        let grid = TimeGrid::new(0.01, 2.0).unwrap();
        let th = Thermal::new(1.0).unwrap();
        let k = Kernel::from_nodes(vec![KernelNode { omega: 1.0, weight: 0.01, gamma: 0.0 }], th);
        let s = k.sample_uniform(0.01, 50);
        let m = SystemModel::spin_boson(0.0, 1.0);
        assert!(matches!(theta_quadrature(&m, &s, &grid), Err(Error::Configuration(_))));
    }
}
