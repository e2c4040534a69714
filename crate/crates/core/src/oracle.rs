//! Reference solutions: truncated-Fock Lindblad integration of system plus
//! damped modes, weak-coupling propagation, and a second-order
//! time-convolutionless (TCL2) integrator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::{thermal_occupation, DampedMode, Kernel, Thermal};
use crate::error::{config, Error, Result};
use crate::influence::{ReducedTrajectory, TimeGrid};
use crate::ode::{dopri5, OdeOptions, OdeStats};
use crate::su_basis::{devectorize, PVector};
use crate::system::SystemModel;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// How the thermal state of each mode is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeRepresentation {
    /// Thermal Fock-space state damped by `gamma(N+1) D[a] + gamma N D[a+]`.
    #[default]
    Thermal,
    /// Each mode split into zero-temperature modes at `+w` (coupling
    /// `g sqrt(N+1)`) and `-w` (coupling `g sqrt(N)`), both damped by
    /// `gamma D[b]` and started in vacuum. Same bath correlation function,
    /// hence the same reduced dynamics; much cheaper for strongly damped modes.
    /// Weakly damped modes near resonance need far more levels than in the
    /// thermal representation.
    Thermofield,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockConfig {
    pub n_fock: usize,
    pub modes: Vec<DampedMode>,
    pub rtol: f64,
    pub atol: f64,
    pub representation: ModeRepresentation,
}

/// Total Hilbert-space dimension above which the oracle refuses to run.
pub const MAX_JOINT_DIM: usize = 4000;

impl FockConfig {
    pub fn new(modes: Vec<DampedMode>, n_fock: usize) -> Self {
        Self { n_fock, modes, rtol: 1e-8, atol: 1e-10, representation: ModeRepresentation::Thermal }
    }

    pub fn thermofield(mut self) -> Self {
        self.representation = ModeRepresentation::Thermofield;
        self
    }

    /// Largest thermal weight outside the truncated space, over all modes.
    pub fn tail_probability(&self, thermal: &Thermal) -> Result<f64> {
        let mut worst = 0.0f64;
        for m in &self.modes {
            let n = thermal_occupation(m.omega, thermal)?;
            worst = worst.max((n / (n + 1.0)).powi(self.n_fock as i32));
        }
        Ok(worst)
    }

    /// Smallest truncation with thermal tail below `tol` for every mode.
    pub fn required_n_fock(modes: &[DampedMode], thermal: &Thermal, tol: f64) -> Result<usize> {
        let mut need = 2usize;
        for m in modes {
            let n = thermal_occupation(m.omega, thermal)?;
            let x = n / (n + 1.0);
            if x > 0.0 {
                need = need.max((tol.ln() / x.ln()).ceil() as usize);
            }
        }
        Ok(need)
    }
}

/// Reduced trajectory from the Lindblad oracle.
#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<PVector>,
    pub max_trace_error: f64,
    pub max_imag: f64,
    pub stats: OdeStats,
}

impl OracleTrajectory {
    pub fn observable(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| 2.0 * s.coeffs[i]).collect()
    }

    pub fn into_reduced(self) -> ReducedTrajectory {
        ReducedTrajectory { t: self.t, states: self.states, max_imag: self.max_imag }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Sparse {
    rows: Vec<Vec<(usize, C64)>>,
}

impl Sparse {
    fn from_triplets(dim: usize, trip: Vec<(usize, usize, C64)>) -> Self {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dim];
        for (r, c, v) in trip {
            if let Some(e) = rows[r].iter_mut().find(|e| e.0 == c) {
                e.1 += v;
            } else {
                rows[r].push((c, v));
            }
        }
        for r in rows.iter_mut() {
            r.retain(|e| e.1 != ZERO);
            r.sort_by_key(|e| e.0);
        }
        Self { rows }
    }

    fn triplets(&self) -> Vec<(usize, usize, C64)> {
        self.rows.iter().enumerate().flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v))).collect()
    }

    /// `L^dag L`.
    fn gram(&self, dim: usize) -> Sparse {
        let mut trip = Vec::new();
        for row in &self.rows {
            for &(a, va) in row {
                for &(b, vb) in row {
                    trip.push((a, b, va.conj() * vb));
                }
            }
        }
        Sparse::from_triplets(dim, trip)
    }
}

/// System plus modes in the joint Hilbert space, index `s * P + m`.
struct Joint {
    n: usize,
    p: usize,
    dim: usize,
    modes: Vec<(f64, f64)>,
    dims: Vec<usize>,
    jumps: Vec<(f64, Sparse)>,
    v: DMatrix<C64>,
}

impl Joint {
    fn new(model: &SystemModel, fock: &FockConfig, thermal: &Thermal) -> Result<Self> {
        if fock.n_fock < 2 {
            return Err(config("n_fock must be at least 2"));
        }
        if fock.modes.is_empty() {
            return Err(config("oracle needs at least one discrete mode"));
        }
        let mut modes = Vec::new();
        let mut damping = Vec::new();
        for m in &fock.modes {
            m.validate()?;
            let nth = thermal_occupation(m.omega, thermal)?;
            match fock.representation {
                ModeRepresentation::Thermal => {
                    modes.push((m.omega, m.g));
                    damping.push(vec![(m.gamma * (nth + 1.0), false), (m.gamma * nth, true)]);
                }
                ModeRepresentation::Thermofield => {
                    modes.push((m.omega, m.g * (nth + 1.0).sqrt()));
                    damping.push(vec![(m.gamma, false)]);
                    modes.push((-m.omega, m.g * nth.sqrt()));
                    damping.push(vec![(m.gamma, false)]);
                }
            }
        }
        let n = model.n();
        let dims = vec![fock.n_fock; modes.len()];
        let p: usize = dims.iter().product();
        let dim = n * p;
        if dim > MAX_JOINT_DIM {
            return Err(config(format!("joint dimension {dim} exceeds the oracle limit {MAX_JOINT_DIM}")));
        }
        let mut joint = Joint { n, p, dim, modes, dims, jumps: Vec::new(), v: model.v_matrix() };
        for (k, d) in damping.iter().enumerate() {
            for &(rate, raise) in d {
                if rate > 0.0 {
                    let a = joint.mode_op(k, raise);
                    joint.jumps.push((rate, a));
                }
            }
        }
        Ok(joint)
    }

    fn stride(&self, k: usize) -> usize {
        self.dims[k + 1..].iter().product()
    }

    /// Lowering (or raising) operator of mode `k` on the joint space.
    fn mode_op(&self, k: usize, raise: bool) -> Sparse {
        let st = self.stride(k);
        let mk = self.dims[k];
        let mut trip = Vec::new();
        for s in 0..self.n {
            for m in 0..self.p {
                let occ = (m / st) % mk;
                // a|occ> = sqrt(occ)|occ-1>
                if !raise && occ > 0 {
                    trip.push((s * self.p + m - st, s * self.p + m, C64::new((occ as f64).sqrt(), 0.0)));
                }
                if raise && occ + 1 < mk {
                    trip.push((s * self.p + m + st, s * self.p + m, C64::new(((occ + 1) as f64).sqrt(), 0.0)));
                }
            }
        }
        Sparse::from_triplets(self.dim, trip)
    }

    /// `H - (i/2) sum rate L^dag L` for the given system Hamiltonian.
    fn heff(&self, hs: &DMatrix<C64>) -> Sparse {
        let mut trip = Vec::new();
        for s in 0..self.n {
            for s2 in 0..self.n {
                for m in 0..self.p {
                    let h = hs[(s, s2)];
                    if h != ZERO {
                        trip.push((s * self.p + m, s2 * self.p + m, h));
                    }
                }
            }
        }
        for (k, &(w, g)) in self.modes.iter().enumerate() {
            let st = self.stride(k);
            for s in 0..self.n {
                for m in 0..self.p {
                    let occ = (m / st) % self.dims[k];
                    trip.push((s * self.p + m, s * self.p + m, C64::new(w * occ as f64, 0.0)));
                }
            }
            if g != 0.0 {
                let a = self.mode_op(k, false);
                for (r, c, av) in a.triplets() {
                    // V (x) g (a + a^dag)
                    if r >= self.p {
                        continue;
                    }
                    let (mr, mc) = (r, c);
                    for s in 0..self.n {
                        for s2 in 0..self.n {
                            let vv = self.v[(s, s2)];
                            if vv != ZERO {
                                let x = vv * av * g;
                                trip.push((s * self.p + mr, s2 * self.p + mc, x));
                                trip.push((s2 * self.p + mc, s * self.p + mr, x.conj()));
                            }
                        }
                    }
                }
            }
        }
        for (rate, l) in &self.jumps {
            for (r, c, v) in l.gram(self.dim).triplets() {
                trip.push((r, c, v * C64::new(0.0, -0.5 * rate)));
            }
        }
        Sparse::from_triplets(self.dim, trip)
    }

    fn initial_state(
        &self,
        rho_s: &DMatrix<C64>,
        thermal: &Thermal,
        rep: ModeRepresentation,
        fock: &FockConfig,
    ) -> Result<Vec<C64>> {
        let mut weights = vec![1.0; self.p];
        if rep == ModeRepresentation::Thermal {
            for (k, m) in fock.modes.iter().enumerate() {
                let nth = thermal_occupation(m.omega, thermal)?;
                let x = nth / (nth + 1.0);
                let st = self.stride(k);
                let mk = self.dims[k];
                let norm: f64 = (0..mk).map(|j| x.powi(j as i32)).sum();
                for (idx, w) in weights.iter_mut().enumerate() {
                    let occ = (idx / st) % mk;
                    *w *= x.powi(occ as i32) / norm;
                }
            }
        } else {
            weights.iter_mut().enumerate().for_each(|(i, w)| *w = if i == 0 { 1.0 } else { 0.0 });
        }
        let mut rho = vec![ZERO; self.dim * self.dim];
        for s in 0..self.n {
            for s2 in 0..self.n {
                for m in 0..self.p {
                    rho[(s * self.p + m) * self.dim + s2 * self.p + m] = rho_s[(s, s2)] * weights[m];
                }
            }
        }
        Ok(rho)
    }

    /// Lindblad right-hand side. Only the upper triangle is computed and then
    /// mirrored, so Hermitian states stay exactly Hermitian.
    fn rhs(&self, heff: &Sparse, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        // A = Heff rho, so that -i Heff rho + i rho Heff^dag = -i A + i A^dag
        scratch.iter_mut().for_each(|x| *x = ZERO);
        for (r, row) in heff.rows.iter().enumerate() {
            let dst = &mut scratch[r * d..(r + 1) * d];
            for &(p, v) in row {
                let src = &rho[p * d..(p + 1) * d];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += v * b;
                }
            }
        }
        for r in 0..d {
            for c in r..d {
                out[r * d + c] = -I * scratch[r * d + c] + I * scratch[c * d + r].conj();
            }
        }
        for (rate, l) in &self.jumps {
            for (r, row_r) in l.rows.iter().enumerate() {
                for &(p, v) in row_r {
                    let vr = v * *rate;
                    for (c, row_c) in l.rows.iter().enumerate().skip(r) {
                        for &(q, w) in row_c {
                            out[r * d + c] += vr * w.conj() * rho[p * d + q];
                        }
                    }
                }
            }
        }
        for r in 1..d {
            for c in 0..r {
                out[r * d + c] = out[c * d + r].conj();
            }
        }
    }

    fn reduce(&self, rho: &[C64]) -> (DMatrix<C64>, C64) {
        let mut rs = DMatrix::zeros(self.n, self.n);
        for s in 0..self.n {
            for s2 in 0..self.n {
                let mut acc = ZERO;
                for m in 0..self.p {
                    acc += rho[(s * self.p + m) * self.dim + s2 * self.p + m];
                }
                rs[(s, s2)] = acc;
            }
        }
        let tr = rs.trace();
        (rs, tr)
    }
}

fn reduced_pvector(model: &SystemModel, rs: &DMatrix<C64>) -> Result<(PVector, f64)> {
    let c = model.basis.coefficients(rs)?;
    let imag = c.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok((PVector::new(c.iter().map(|z| z.re).collect()), imag))
}

/// Integrates the joint Lindblad equation from `rho_s(0)` (x) thermal modes
/// and returns the reduced system state at `times` (ascending, from 0).
pub fn lindblad_evolve(
    model: &SystemModel,
    fock: &FockConfig,
    thermal: &Thermal,
    rho0: &PVector,
    times: &[f64],
) -> Result<OracleTrajectory> {
    if fock.representation == ModeRepresentation::Thermal {
        let tail = fock.tail_probability(thermal)?;
        if tail > 1e-8 {
            log::warn!("thermal occupation beyond n_fock = {} is {tail:.2e} (> 1e-8)", fock.n_fock);
        }
    }
    if times.first().copied() != Some(0.0) {
        return Err(config("oracle output times must start at 0"));
    }
    let joint = Joint::new(model, fock, thermal)?;
    let rho_s = devectorize(rho0, &model.basis)?;
    let mut rho = joint.initial_state(&rho_s, thermal, fock.representation, fock)?;
    let opts = OdeOptions { rtol: fock.rtol, atol: fock.atol, ..Default::default() };

    let mut out: Vec<Option<(PVector, f64, f64)>> = vec![None; times.len()];
    let mut stats = OdeStats::default();
    let nseg = model.segments.len();
    let mut scratch = vec![ZERO; joint.dim * joint.dim];
    let t_last = *times.last().unwrap();
    for k in 0..nseg {
        let start = model.segments[k].start;
        if start > t_last {
            break;
        }
        let end = if k + 1 < nseg { model.segments[k + 1].start.min(t_last) } else { t_last };
        let heff = joint.heff(&model.h_matrix(k));
        let idx: Vec<usize> = (0..times.len())
            .filter(|&i| if k == 0 { times[i] <= end } else { times[i] > start && times[i] <= end })
            .collect();
        let mut ts: Vec<f64> = vec![start];
        ts.extend(idx.iter().map(|&i| times[i]));
        ts.push(end);
        let mut end_state = None;
        let mut err: Option<Error> = None;
        let nts = ts.len();
        let s = dopri5(
            |_, y, dy| joint.rhs(&heff, y, dy, &mut scratch),
            &rho,
            &ts,
            &opts,
            |j, y| {
                if j == nts - 1 {
                    end_state = Some(y.to_vec());
                }
                if (j == 0 || j == nts - 1) && !(k == 0 && j == 0 && idx.first() == Some(&0)) {
                    return;
                }
                let i = if k == 0 && j == 0 { 0 } else { idx[j - 1] };
                let (rs, tr) = joint.reduce(y);
                match reduced_pvector(model, &rs) {
                    Ok((p, imag)) => out[i] = Some((p, (tr - C64::new(1.0, 0.0)).norm(), imag)),
                    Err(e) => err = Some(e),
                }
            },
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        stats.accepted += s.accepted;
        stats.rejected += s.rejected;
        stats.evaluations += s.evaluations;
        rho = end_state.expect("integrator reaches segment end");
    }
    let mut states = Vec::with_capacity(times.len());
    let mut max_trace_error = 0.0f64;
    let mut max_imag = 0.0f64;
    for (i, o) in out.into_iter().enumerate() {
        let (p, te, im) = o.ok_or_else(|| Error::Numerical(format!("no oracle output at t = {}", times[i])))?;
        max_trace_error = max_trace_error.max(te);
        max_imag = max_imag.max(im);
        states.push(p);
    }
    if max_trace_error > 1e-6 {
        log::warn!("oracle trace drift {max_trace_error:.2e}");
    }
    Ok(OracleTrajectory { t: times.to_vec(), states, max_trace_error, max_imag, stats })
}

/// Banded complex matrix with LU factorization by partial pivoting.
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    data: Vec<C64>,
    piv: Vec<usize>,
}

impl Band {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        Self { n, kl, ku, w, data: vec![ZERO; n * w], piv: vec![0; n] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.w + (j + self.kl - i)
    }

    fn add(&mut self, i: usize, j: usize, v: C64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.at(k, k)].norm();
            for i in k + 1..=last {
                let v = self.data[self.at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Numerical(format!("singular band matrix at column {k}")));
            }
            self.piv[k] = p;
            let cmax = (k + self.kl + self.ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.at(k, k)];
            for i in k + 1..=last {
                let li = self.at(i, k);
                let l = self.data[li] / pivot;
                self.data[li] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..=cmax {
                    let u = self.data[self.at(k, j)];
                    let idx = self.at(i, j);
                    self.data[idx] -= l * u;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + self.kl).min(n - 1);
            let bk = b[k];
            for (i, bi) in b.iter_mut().enumerate().take(last + 1).skip(k + 1) {
                *bi -= self.data[self.at(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            for (j, bj) in b.iter().enumerate().take(cmax + 1).skip(k + 1) {
                s -= self.data[self.at(k, j)] * bj;
            }
            b[k] = s / self.data[self.at(k, k)];
        }
    }
}

/// Stationary reduced state of the joint Lindblad equation for a static
/// Hamiltonian, by shifted inverse iteration on the banded Liouvillian.
pub fn lindblad_steady_state(model: &SystemModel, fock: &FockConfig, thermal: &Thermal) -> Result<PVector> {
    if !model.is_static() {
        return Err(Error::Unsupported("steady state needs a static Hamiltonian".into()));
    }
    let joint = Joint::new(model, fock, thermal)?;
    let heff = joint.heff(&model.h_matrix(0));
    let (n, p, d) = (joint.n, joint.p, joint.dim);
    // vec index ordered by (m, m', s, s') keeps the Liouvillian banded
    let vidx = |r: usize, c: usize| -> usize {
        let (s, m) = (r / p, r % p);
        let (s2, m2) = (c / p, c % p);
        ((m * p + m2) * n + s) * n + s2
    };
    let mut entries: Vec<(usize, usize, C64)> = Vec::new();
    for r in 0..d {
        for c in 0..d {
            let row = vidx(r, c);
            for &(q, v) in &heff.rows[r] {
                entries.push((row, vidx(q, c), -I * v));
            }
            for &(q, v) in &heff.rows[c] {
                entries.push((row, vidx(r, q), I * v.conj()));
            }
        }
    }
    for (rate, l) in &joint.jumps {
        for (r, row_r) in l.rows.iter().enumerate() {
            for &(pp, v) in row_r {
                for (c, row_c) in l.rows.iter().enumerate() {
                    for &(q, w) in row_c {
                        entries.push((vidx(r, c), vidx(pp, q), v * w.conj() * *rate));
                    }
                }
            }
        }
    }
    let nn = d * d;
    let kl = entries.iter().map(|e| e.0.saturating_sub(e.1)).max().unwrap_or(0);
    let ku = entries.iter().map(|e| e.1.saturating_sub(e.0)).max().unwrap_or(0);
    let scale = entries.iter().filter(|e| e.0 == e.1).map(|e| e.2.norm()).fold(0.0, f64::max).max(1.0);
    let mut band = Band::new(nn, kl, ku);
    for (r, c, v) in entries {
        band.add(r, c, v);
    }
    let shift = 1e-13 * scale;
    for i in 0..nn {
        band.add(i, i, C64::new(-shift, 0.0));
    }
    band.factor()?;

    let mut x = vec![ZERO; nn];
    for r in 0..d {
        x[vidx(r, r)] = C64::new(1.0, 0.0);
    }
    for _ in 0..3 {
        band.solve(&mut x);
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numerical("inverse iteration failed".into()));
        }
        x.iter_mut().for_each(|z| *z /= norm);
    }
    let mut rho = vec![ZERO; d * d];
    for r in 0..d {
        for c in 0..d {
            rho[r * d + c] = x[vidx(r, c)];
        }
    }
    let (rs, tr) = joint.reduce(&rho);
    let rs = rs / tr;
    Ok(reduced_pvector(model, &rs)?.0)
}

/// Propagates `P(t) = exp(L t) P(0)` on the grid.
pub fn wcme_evolve(generator: &DMatrix<C64>, rho0: &PVector, grid: &TimeGrid) -> Result<ReducedTrajectory> {
    if generator.nrows() != rho0.len() {
        return Err(Error::Validation("generator and state dimensions differ".into()));
    }
    let step = (generator * C64::new(grid.dt, 0.0)).exp();
    let mut p: DVector<C64> = rho0.coeffs.map(|x| C64::new(x, 0.0));
    let mut states = Vec::with_capacity(grid.len);
    let mut max_imag = 0.0f64;
    for k in 0..grid.len {
        if k > 0 {
            p = &step * &p;
        }
        max_imag = max_imag.max(p.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        states.push(PVector::new(p.iter().map(|z| z.re).collect()));
    }
    Ok(ReducedTrajectory { t: grid.times(), states, max_imag })
}

/// Sub-intervals per half step used for the TCL2 kernel integrals.
const TCL_SUBSTEPS: usize = 8;

/// Second-order TCL master equation in Hilbert space,
/// `rho' = -i[H, rho] - [V, L(t) rho - rho L(t)^dag]` with
/// `L(t) = int_0^t alpha(tau) e^{-iH tau} V e^{iH tau} dtau`, integrated by RK4.
pub fn tcl2_reference(
    model: &SystemModel,
    kernel: &Kernel,
    grid: &TimeGrid,
    rho0: &PVector,
) -> Result<ReducedTrajectory> {
    if kernel.nodes.iter().any(|n| n.gamma != 0.0) {
        return Err(Error::Unsupported("TCL2 reference is defined for undamped environments".into()));
    }
    if !model.is_static() {
        return Err(Error::Unsupported("TCL2 reference needs a static Hamiltonian".into()));
    }
    let n = model.n();
    let h = model.h_matrix(0);
    let v = model.v_matrix();
    let eig = SymmetricEigen::new(h.clone());
    let w = eig.eigenvectors.clone();
    let e: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let ve = w.adjoint() * &v * &w;

    // F_ab(t) = int_0^t alpha(tau) exp(-i (E_a - E_b) tau), composite Simpson
    let half = 0.5 * grid.dt;
    let nhalf = 2 * (grid.len - 1);
    let delta = half / TCL_SUBSTEPS as f64;
    let nfine = nhalf * TCL_SUBSTEPS;
    let alpha: Vec<C64> = {
        use rayon::prelude::*;
        (0..=nfine)
            .into_par_iter()
            .map(|k| {
                let (d, d1) = kernel.eval(k as f64 * delta);
                C64::new(d, d1)
            })
            .collect()
    };
    let mut lam: Vec<DMatrix<C64>> = Vec::with_capacity(nhalf + 1);
    let mut f = DMatrix::<C64>::zeros(n, n);
    lam.push(DMatrix::zeros(n, n));
    let ph = |a: usize, b: usize, k: usize| C64::from_polar(1.0, -(e[a] - e[b]) * k as f64 * delta);
    for j in 0..nhalf {
        let k0 = j * TCL_SUBSTEPS;
        for a in 0..n {
            for b in 0..n {
                let mut s = ZERO;
                for i in 0..=TCL_SUBSTEPS {
                    let c = if i == 0 || i == TCL_SUBSTEPS {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    s += alpha[k0 + i] * ph(a, b, k0 + i) * c;
                }
                f[(a, b)] += s * (delta / 3.0);
            }
        }
        let le = ve.component_mul(&f);
        lam.push(&w * le * w.adjoint());
    }

    let rhs = |rho: &DMatrix<C64>, l: &DMatrix<C64>| -> DMatrix<C64> {
        let comm = &h * rho - rho * &h;
        let x = l * rho - rho * l.adjoint();
        comm * (-I) - (&v * &x - &x * &v)
    };
    let mut rho = devectorize(rho0, &model.basis)?;
    let mut states = Vec::with_capacity(grid.len);
    let mut max_imag = 0.0f64;
    let mut push = |rho: &DMatrix<C64>, states: &mut Vec<PVector>| -> Result<()> {
        let (p, im) = reduced_pvector(model, rho)?;
        max_imag = max_imag.max(im);
        states.push(p);
        Ok(())
    };
    push(&rho, &mut states)?;
    let dt = C64::new(grid.dt, 0.0);
    for k in 0..grid.len - 1 {
        let (l0, lh, l1) = (&lam[2 * k], &lam[2 * k + 1], &lam[2 * k + 2]);
        let k1 = rhs(&rho, l0);
        let k2 = rhs(&(&rho + &k1 * (dt * 0.5)), lh);
        let k3 = rhs(&(&rho + &k2 * (dt * 0.5)), lh);
        let k4 = rhs(&(&rho + &k3 * dt), l1);
        rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (dt / 6.0);
        push(&rho, &mut states)?;
    }
    Ok(ReducedTrajectory { t: grid.times(), states, max_imag })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_solver_matches_dense() {
        let n = 30;
        let (kl, ku) = (3, 2);
        let mut band = Band::new(n, kl, ku);
        let mut dense = DMatrix::<C64>::zeros(n, n);
        let mut s = 0.37f64;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                s = (s * 7.13 + 0.31).fract();
                let v = C64::new(s - 0.5, (s * 3.7).fract() - 0.5) + if i == j { C64::new(0.1, 0.0) } else { ZERO };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let x_dense = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        band.factor().unwrap();
        let mut x = b;
        band.solve(&mut x);
        for i in 0..n {
            assert!((x[i] - x_dense[i]).norm() < 1e-9 * (1.0 + x_dense[i].norm()));
        }
    }

    #[test]
    fn required_truncation_for_rabi_mode() {
        let th = Thermal::from_kt(1.0).unwrap();
        let m = DampedMode::new(0.2, 0.03, 0.8);
        let need = FockConfig::required_n_fock(&[m], &th, 1e-8).unwrap();
        let cfg = FockConfig::new(vec![m], need);
        assert!(cfg.tail_probability(&th).unwrap() < 1e-8);
        let cfg = FockConfig::new(vec![m], need - 1);
        assert!(cfg.tail_probability(&th).unwrap() >= 1e-8);
    }

    #[test]
    fn oversized_joint_space_rejected() {
        let th = Thermal::new(1.0).unwrap();
        let model = SystemModel::spin_boson(0.0, 1.0);
        let m = DampedMode::new(1.0, 0.1, 0.1);
        let cfg = FockConfig::new(vec![m, m, m], 20);
        let r = lindblad_evolve(&model, &cfg, &th, &PVector::mixed(2), &[0.0, 1.0]);
        assert!(matches!(r, Err(Error::Configuration(_))));
    }

    fn max_dev(a: &[PVector], b: &[PVector]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.coeffs.iter().zip(y.coeffs.iter()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn decoupled_mode_gives_free_evolution() {
        let th = Thermal::from_kt(1.0).unwrap();
        let model = SystemModel::spin_boson(0.4, 1.1);
        let mut cfg = FockConfig::new(vec![DampedMode::new(0.7, 0.0, 0.1)], 6);
        cfg.rtol = 1e-11;
        cfg.atol = 1e-13;
        let rho0 = PVector::from_expectations(2, &[0.0, 0.0, 1.0]).unwrap();
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let tr = lindblad_evolve(&model, &cfg, &th, &rho0, &times).unwrap();
        let prop = model.propagator();
        let p0 = rho0.coeffs.map(|x| C64::new(x, 0.0));
        for (t, s) in times.iter().zip(&tr.states) {
            let want = prop.at(*t) * &p0;
            for i in 0..4 {
                assert!((want[i].re - s.coeffs[i]).abs() < 1e-8, "t = {t}");
            }
        }
        assert!(tr.max_trace_error < 1e-12);
    }

    #[test]
    fn thermal_and_thermofield_agree() {
        let th = Thermal::from_kt(0.5).unwrap();
        let model = SystemModel::spin_boson(0.3, 1.0);
        let mode = DampedMode::new(1.0, 0.15, 0.2);
        let rho0 = PVector::from_expectations(2, &[0.0, 0.0, 1.0]).unwrap();
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.5).collect();
        let mut cfg = FockConfig::new(vec![mode], 16);
        cfg.rtol = 1e-10;
        cfg.atol = 1e-12;
        let a = lindblad_evolve(&model, &cfg, &th, &rho0, &times).unwrap();
        let b = lindblad_evolve(&model, &cfg.clone().thermofield(), &th, &rho0, &times).unwrap();
        assert!(max_dev(&a.states, &b.states) < 1e-7, "{}", max_dev(&a.states, &b.states));
    }

    #[test]
    fn piecewise_hamiltonian_is_continuous_across_segments() {
        use crate::system::Segment;
        let th = Thermal::from_kt(1.0).unwrap();
        let h = vec![0.5, 0.0, 0.2];
        let v = vec![0.0, 0.0, 1.0, 0.0];
        let split = SystemModel::new(
            2,
            vec![Segment { start: 0.0, h: h.clone() }, Segment { start: 1.3, h: h.clone() }],
            v.clone(),
        )
        .unwrap();
        let single = SystemModel::static_h(2, h, v).unwrap();
        let cfg = FockConfig::new(vec![DampedMode::new(0.8, 0.1, 0.3)], 10);
        let rho0 = PVector::from_expectations(2, &[1.0, 0.0, 0.0]).unwrap();
        let times: Vec<f64> = (0..=12).map(|k| k as f64 * 0.25).collect();
        let a = lindblad_evolve(&split, &cfg, &th, &rho0, &times).unwrap();
        let b = lindblad_evolve(&single, &cfg, &th, &rho0, &times).unwrap();
        assert!(max_dev(&a.states, &b.states) < 1e-7);
    }

    #[test]
    fn steady_state_matches_long_time_limit() {
        let th = Thermal::from_kt(1.0).unwrap();
        let model = SystemModel::spin_boson(0.2, 1.0);
        let cfg = FockConfig::new(vec![DampedMode::new(1.0, 0.1, 0.5)], 14);
        let ss = lindblad_steady_state(&model, &cfg, &th).unwrap();
        let rho0 = PVector::mixed(2);
        let tr = lindblad_evolve(&model, &cfg, &th, &rho0, &[0.0, 400.0]).unwrap();
        let late = &tr.states[1];
        assert!(max_dev(std::slice::from_ref(&ss), std::slice::from_ref(late)) < 1e-6);
        assert!((ss.coeffs[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wcme_evolve_with_zero_generator_is_constant() {
        let rho0 = PVector::from_expectations(2, &[0.3, 0.1, 0.2]).unwrap();
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let tr = wcme_evolve(&DMatrix::zeros(4, 4), &rho0, &grid).unwrap();
        assert_eq!(tr.len(), grid.len);
        assert!(max_dev(&tr.states, &vec![rho0; grid.len]) == 0.0);
    }

    #[test]
    fn tcl2_without_coupling_is_free_evolution() {
        use crate::bath::KernelNode;
        let th = Thermal::new(1.0).unwrap();
        let kernel = Kernel::from_nodes(vec![KernelNode { omega: 1.0, weight: 0.0, gamma: 0.0 }], th);
        let model = SystemModel::spin_boson(0.5, 1.2);
        let grid = TimeGrid::new(0.01, 3.0).unwrap();
        let rho0 = PVector::from_expectations(2, &[0.0, 0.0, 1.0]).unwrap();
        let tr = tcl2_reference(&model, &kernel, &grid, &rho0).unwrap();
        let prop = model.propagator();
        let p0 = rho0.coeffs.map(|x| C64::new(x, 0.0));
        for k in 0..grid.len {
            let want = prop.at(grid.t(k)) * &p0;
            for i in 0..4 {
                assert!((want[i].re - tr.states[k].coeffs[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tcl2_rejects_damped_kernel() {
        use crate::bath::KernelNode;
        let th = Thermal::new(1.0).unwrap();
        let kernel = Kernel::from_nodes(vec![KernelNode { omega: 1.0, weight: 0.01, gamma: 0.1 }], th);
        let model = SystemModel::spin_boson(0.5, 1.2);
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let r = tcl2_reference(&model, &kernel, &grid, &PVector::mixed(2));
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
