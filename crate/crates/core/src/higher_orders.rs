//! Moment recursion for discrete damped-mode environments and the cumulant
//! series `Theta = Theta_2 + Theta_4 + ...` built from it.
//!
//! `chi_n({a}, {b}; t)` is the interaction-picture moment of order `n` in the
//! couplings, weighted by `prod alpha_k^{a_k} conj(alpha_k)^{b_k}`. Couplings
//! are taken as given (no separate overall `g`), so `Theta_n` is homogeneous
//! of degree `n` in the mode couplings.
//!
//! Assembly beyond fourth order (not evaluated here):
//!
//! ```text
//! Theta_6 = chi_6 - (Theta_2 Theta_4 + Theta_4 Theta_2)/2! - Theta_2^3/3!
//! Theta_8 = chi_8 - (Theta_4 Theta_4 + Theta_6 Theta_2 + Theta_2 Theta_6)/2!
//!                 - (Theta_2 Theta_4 Theta_4 + Theta_4 Theta_2 Theta_4 + Theta_4 Theta_4 Theta_2)/3!
//!                 - Theta_2^4/4!
//! ```
//!
//! All products are taken at equal times.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::{thermal_occupation, DampedMode, Thermal};
use crate::error::{config, Error, Result};
use crate::influence::{rotated_couplings, InfluenceMatrix, TimeGrid};
use crate::system::SystemModel;

/// Highest moment order evaluated by default.
pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentIndex {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
}

impl MomentIndex {
    pub fn zero(modes: usize) -> Self {
        Self { a: vec![0; modes], b: vec![0; modes] }
    }

    pub fn weight(&self) -> u32 {
        self.a.iter().chain(&self.b).sum()
    }

    /// Moments with odd `n + sum(a + b)` vanish identically.
    pub fn vanishes_at(&self, n: usize) -> bool {
        (n as u32 + self.weight()) % 2 == 1
    }

    fn shifted(&self, k: usize, da: i32, db: i32) -> Self {
        let mut out = self.clone();
        out.a[k] = (out.a[k] as i32 + da) as u32;
        out.b[k] = (out.b[k] as i32 + db) as u32;
        out
    }
}

/// Time samples of one moment; `None` marks an exactly vanishing moment.
pub type Moment = Option<Arc<Vec<DMatrix<C64>>>>;

/// Memoized moments keyed by `(n, index)`.
#[derive(Debug, Clone, Default)]
pub struct MomentTable {
    pub entries: HashMap<(usize, MomentIndex), Moment>,
}

impl MomentTable {
    pub fn get(&self, n: usize, idx: &MomentIndex) -> Option<&Moment> {
        self.entries.get(&(n, idx.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Evaluates moments on a uniform grid.
pub struct MomentSolver {
    modes: Vec<DampedMode>,
    occupation: Vec<f64>,
    d: usize,
    grid: TimeGrid,
    vx: Vec<DMatrix<C64>>,
    vo: Vec<DMatrix<C64>>,
    max_order: usize,
    cache: bool,
    table: MomentTable,
}

impl MomentSolver {
    pub fn new(model: &SystemModel, modes: &[DampedMode], thermal: &Thermal, grid: &TimeGrid) -> Result<Self> {
        if modes.is_empty() {
            return Err(config("moment recursion needs at least one discrete mode"));
        }
        let mut occupation = Vec::with_capacity(modes.len());
        for m in modes {
            m.validate()?;
            occupation.push(thermal_occupation(m.omega, thermal)?);
        }
        let d = model.dim();
        let e = d * d;
        let (x, o) = rotated_couplings(model, grid);
        let split =
            |v: &[C64]| -> Vec<DMatrix<C64>> { v.chunks(e).map(|c| DMatrix::from_column_slice(d, d, c)).collect() };
        Ok(Self {
            modes: modes.to_vec(),
            occupation,
            d,
            grid: *grid,
            vx: split(&x),
            vo: split(&o),
            max_order: DEFAULT_MAX_ORDER,
            cache: true,
            table: MomentTable::default(),
        })
    }

    pub fn with_max_order(mut self, n: usize) -> Self {
        self.max_order = n;
        self
    }

    /// Disables memoization; every request re-walks the recursion.
    pub fn without_cache(mut self) -> Self {
        self.cache = false;
        self
    }

    pub fn table(&self) -> &MomentTable {
        &self.table
    }

    pub fn chi(&mut self, n: usize, idx: &MomentIndex) -> Result<Moment> {
        if n > self.max_order {
            return Err(Error::Capability(format!(
                "moment order {n} exceeds the supported maximum {}",
                self.max_order
            )));
        }
        if idx.a.len() != self.modes.len() || idx.b.len() != self.modes.len() {
            return Err(config(format!("moment index must have {} entries per side", self.modes.len())));
        }
        self.eval(n, idx)
    }

    fn eval(&mut self, n: usize, idx: &MomentIndex) -> Result<Moment> {
        if self.cache {
            if let Some(m) = self.table.entries.get(&(n, idx.clone())) {
                return Ok(m.clone());
            }
        }
        let out = if n == 0 { self.base(idx) } else { self.recurse(n, idx)? };
        if self.cache {
            self.table.entries.insert((n, idx.clone()), out.clone());
        }
        Ok(out)
    }

    fn base(&self, idx: &MomentIndex) -> Moment {
        if idx.a != idx.b {
            return None;
        }
        let mut c = 1.0;
        for (k, &a) in idx.a.iter().enumerate() {
            for j in 1..=a {
                c *= j as f64 * self.occupation[k];
            }
        }
        let m = DMatrix::<C64>::identity(self.d, self.d) * C64::new(c, 0.0);
        Some(Arc::new(vec![m; self.grid.len]))
    }

    fn recurse(&mut self, n: usize, idx: &MomentIndex) -> Result<Moment> {
        let len = self.grid.len;
        let nm = self.modes.len();
        // same-order feed, plain and V^x / V^o weighted lower-order terms
        let mut same: Vec<(f64, Arc<Vec<DMatrix<C64>>>)> = Vec::new();
        let mut cross: Vec<(f64, Arc<Vec<DMatrix<C64>>>)> = Vec::new();
        let mut circ: Vec<(f64, Arc<Vec<DMatrix<C64>>>)> = Vec::new();
        for k in 0..nm {
            let m = self.modes[k];
            let (a, b) = (idx.a[k], idx.b[k]);
            if a > 0 && b > 0 && m.gamma != 0.0 && self.occupation[k] != 0.0 {
                if let Some(c) = self.eval(n, &idx.shifted(k, -1, -1))? {
                    same.push((m.gamma * self.occupation[k] * (a * b) as f64, c));
                }
            }
            if m.g == 0.0 {
                continue;
            }
            if let Some(c) = self.eval(n - 1, &idx.shifted(k, 1, 0))? {
                cross.push((m.g, c));
            }
            if let Some(c) = self.eval(n - 1, &idx.shifted(k, 0, 1))? {
                cross.push((m.g, c));
            }
            if a > 0 {
                if let Some(c) = self.eval(n - 1, &idx.shifted(k, -1, 0))? {
                    cross.push((m.g * 0.5 * a as f64, c.clone()));
                    circ.push((m.g * 0.5 * a as f64, c));
                }
            }
            if b > 0 {
                if let Some(c) = self.eval(n - 1, &idx.shifted(k, 0, -1))? {
                    cross.push((m.g * 0.5 * b as f64, c.clone()));
                    circ.push((-m.g * 0.5 * b as f64, c));
                }
            }
        }
        if same.is_empty() && cross.is_empty() && circ.is_empty() {
            return Ok(None);
        }

        let d = self.d;
        let source = |j: usize| -> DMatrix<C64> {
            let mut s = DMatrix::<C64>::zeros(d, d);
            for (w, c) in &same {
                s += &c[j] * C64::new(*w, 0.0);
            }
            let mut x = DMatrix::<C64>::zeros(d, d);
            for (w, c) in &cross {
                x += &c[j] * C64::new(*w, 0.0);
            }
            let mut o = DMatrix::<C64>::zeros(d, d);
            for (w, c) in &circ {
                o += &c[j] * C64::new(*w, 0.0);
            }
            s - &self.vx[j] * x * C64::new(0.0, 1.0) - &self.vo[j] * o * C64::new(0.0, 1.0)
        };

        let mut rate = C64::new(0.0, 0.0);
        for (k, m) in self.modes.iter().enumerate() {
            let (a, b) = (idx.a[k] as f64, idx.b[k] as f64);
            rate += C64::new(0.5 * m.gamma * (a + b), m.omega * (a - b));
        }
        let h = self.grid.dt;
        let decay = (-rate * h).exp();
        let half = C64::new(0.5 * h, 0.0);
        let mut out = Vec::with_capacity(len);
        let mut chi = DMatrix::<C64>::zeros(d, d);
        let mut prev = source(0);
        out.push(chi.clone());
        for j in 1..len {
            let cur = source(j);
            chi = (&chi + &prev * half) * decay + &cur * half;
            out.push(chi.clone());
            prev = cur;
        }
        Ok(Some(Arc::new(out)))
    }
}

fn to_matrices(m: &Moment, len: usize, d: usize) -> Vec<DMatrix<C64>> {
    match m {
        Some(v) => v.as_ref().clone(),
        None => vec![DMatrix::zeros(d, d); len],
    }
}

/// Convenience wrapper evaluating a single moment.
pub fn chi(
    n: usize,
    idx: &MomentIndex,
    modes: &[DampedMode],
    model: &SystemModel,
    thermal: &Thermal,
    grid: &TimeGrid,
) -> Result<Vec<DMatrix<C64>>> {
    let mut solver = MomentSolver::new(model, modes, thermal, grid)?;
    let m = solver.chi(n, idx)?;
    Ok(to_matrices(&m, grid.len, model.dim()))
}

#[derive(Debug, Clone)]
pub struct ThetaSeries {
    pub theta2: InfluenceMatrix,
    pub theta4: Option<InfluenceMatrix>,
}

impl ThetaSeries {
    /// `Theta_2 + Theta_4` (or `Theta_2` alone at second order).
    pub fn total(&self) -> InfluenceMatrix {
        match &self.theta4 {
            Some(t4) => self.theta2.add(t4).expect("same grid"),
            None => self.theta2.clone(),
        }
    }
}

pub fn theta_series(
    modes: &[DampedMode],
    model: &SystemModel,
    thermal: &Thermal,
    grid: &TimeGrid,
    max_order: usize,
) -> Result<ThetaSeries> {
    if max_order != 2 && max_order != 4 {
        return Err(Error::Capability(format!("cumulant order {max_order} is not supported (use 2 or 4)")));
    }
    let mut solver = MomentSolver::new(model, modes, thermal, grid)?.with_max_order(max_order);
    let zero = MomentIndex::zero(modes.len());
    let d = model.dim();
    let t = grid.times();
    let theta2 = to_matrices(&solver.chi(2, &zero)?, grid.len, d);
    let theta4 = if max_order == 4 {
        let chi4 = to_matrices(&solver.chi(4, &zero)?, grid.len, d);
        let t4 = chi4.into_iter().zip(&theta2).map(|(c, t2)| c - t2 * t2 * C64::new(0.5, 0.0)).collect();
        Some(InfluenceMatrix { t: t.clone(), theta: t4 })
    } else {
        None
    };
    Ok(ThetaSeries { theta2: InfluenceMatrix { t, theta: theta2 }, theta4 })
}
