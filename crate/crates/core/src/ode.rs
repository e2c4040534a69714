//! Adaptive Dormand-Prince 5(4) integrator with dense output, for complex
//! state vectors.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 50_000_000, h0: None }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut s = C64::new(0.0, 0.0);
        for (c, k) in terms {
            s += k[i] * *c;
        }
        out[i] = y[i] + s * h;
    }
}

/// Integrates `y' = f(t, y)` from `t_out[0]` and calls `observe(k, y(t_out[k]))`
/// for every output time, in order. `t_out` must be ascending.
pub fn dopri5<F, O>(mut f: F, y0: &[C64], t_out: &[f64], opts: &OdeOptions, mut observe: O) -> Result<OdeStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, &[C64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    if t_out.is_empty() {
        return Ok(stats);
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Configuration("output times must be ascending".into()));
    }
    let t_end = t_out[t_out.len() - 1];
    let mut t = t_out[0];
    let mut y = y0.to_vec();
    let mut next_out = 0;
    while next_out < t_out.len() && t_out[next_out] <= t {
        observe(next_out, &y);
        next_out += 1;
    }
    if next_out == t_out.len() {
        return Ok(stats);
    }

    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut ynew = k1.clone();
    let mut dense = [k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone()];
    let mut yout = k1.clone();

    f(t, &y, &mut k1);
    stats.evaluations += 1;

    let scale = |a: &[C64], b: &[C64], i: usize| opts.atol + opts.rtol * a[i].norm().max(b[i].norm());
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let d0 = (0..n).map(|i| (y[i].norm() / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
            let d1 = (0..n).map(|i| (k1[i].norm() / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(t_end - t)
        }
    };
    let h_min = 1e-14 * t_end.abs().max(1.0);
    let mut last_err = 1e-4f64;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "step limit reached at t = {t} (h = {h:.3e}, accepted {}, rejected {})",
                stats.accepted, stats.rejected
            )));
        }
        if h < h_min {
            return Err(Error::Numerical(format!("step size underflow at t = {t} (h = {h:.3e})")));
        }
        h = h.min(t_end - t);

        axpy_into(&mut tmp, &y, h, &[(A21, &k1)]);
        f(t + C2 * h, &tmp, &mut k2);
        axpy_into(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * h, &tmp, &mut k3);
        axpy_into(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * h, &tmp, &mut k4);
        axpy_into(&mut tmp, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * h, &tmp, &mut k5);
        axpy_into(&mut tmp, &y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        f(t + h, &tmp, &mut k6);
        axpy_into(&mut ynew, &y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        f(t + h, &ynew, &mut k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            err += (e.norm() / scale(&y, &ynew, i)).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = k1[i] * h - dy;
                dense[0][i] = y[i];
                dense[1][i] = dy;
                dense[2][i] = bspl;
                dense[3][i] = dy - k7[i] * h - bspl;
                dense[4][i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
            }
            let t_new = t + h;
            while next_out < t_out.len() && t_out[next_out] <= t_new {
                let th = (t_out[next_out] - t) / h;
                let th1 = 1.0 - th;
                for i in 0..n {
                    yout[i] =
                        dense[0][i] + (dense[1][i] + (dense[2][i] + (dense[3][i] + dense[4][i] * th1) * th) * th1) * th;
                }
                observe(next_out, &yout);
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            stats.accepted += 1;
            // PI step control
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * last_err.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            last_err = err.max(1e-4);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    while next_out < t_out.len() {
        observe(next_out, &y);
        next_out += 1;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_dense_output() {
        // y = exp(-i w t - k t)
        let (w, k) = (3.0, 0.2);
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let mut got = vec![C64::new(0.0, 0.0); times.len()];
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        dopri5(|_, y, dy| dy[0] = y[0] * C64::new(-k, -w), &[C64::new(1.0, 0.0)], &times, &opts, |i, y| got[i] = y[0])
            .unwrap();
        for (t, g) in times.iter().zip(&got) {
            let exact = C64::new(-k * t, -w * t).exp();
            assert!((g - exact).norm() < 1e-8, "t={t}: {g} vs {exact}");
        }
    }

    #[test]
    fn step_limit_is_reported() {
        let opts = OdeOptions { max_steps: 3, ..Default::default() };
        let r = dopri5(
            |_, y, dy| dy[0] = y[0] * C64::new(0.0, -50.0),
            &[C64::new(1.0, 0.0)],
            &[0.0, 10.0],
            &opts,
            |_, _| {},
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
