//! System Hamiltonian schedule, coupling operator and the free propagator
//! `U(t)` in the vectorized representation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{validation, Result};
use crate::su_basis::{build_hcross, build_vcirc, build_vcross, SuBasis};

/// Piecewise-constant `H(t) = H_k(t) nu_k`; segment `k` applies from
/// `start` until the next segment's start. The last segment extends to
/// infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub basis: SuBasis,
    pub segments: Vec<Segment>,
    /// `[V_1, ..., V_{n^2-1}, V_{n^2}]`.
    pub v: Vec<f64>,
}

impl SystemModel {
    pub fn new(n: usize, segments: Vec<Segment>, v: Vec<f64>) -> Result<Self> {
        let basis = SuBasis::new(n)?;
        if segments.is_empty() {
            return Err(validation("need at least one Hamiltonian segment"));
        }
        if segments[0].start != 0.0 {
            return Err(validation("first Hamiltonian segment must start at t = 0"));
        }
        if segments.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(validation("segment start times must be strictly ascending"));
        }
        for s in &segments {
            if s.h.len() != basis.m() {
                return Err(validation(format!("H segment has {} coefficients, expected {}", s.h.len(), basis.m())));
            }
        }
        if v.len() != basis.dim() {
            return Err(validation(format!("V has {} coefficients, expected {}", v.len(), basis.dim())));
        }
        Ok(Self { basis, segments, v })
    }

    pub fn static_h(n: usize, h: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::new(n, vec![Segment { start: 0.0, h }], v)
    }

    /// Biased two-level system `eps/2 sigma_z + delta/2 sigma_x` coupled
    /// through `sigma_z`.
    pub fn spin_boson(eps: f64, delta: f64) -> Self {
        Self::static_h(2, vec![delta / 2.0, 0.0, eps / 2.0], vec![0.0, 0.0, 1.0, 0.0])
            .expect("two-level model is well formed")
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn is_static(&self) -> bool {
        self.segments.len() == 1
    }

    pub fn vcross(&self) -> DMatrix<C64> {
        build_vcross(&self.v, &self.basis).expect("length checked at construction").matrix
    }

    pub fn vcirc(&self) -> DMatrix<C64> {
        build_vcirc(&self.v, &self.basis).expect("length checked at construction").matrix
    }

    pub fn hcross(&self, segment: usize) -> DMatrix<C64> {
        build_hcross(&self.segments[segment].h, &self.basis).expect("length checked at construction").matrix
    }

    /// Hilbert-space Hamiltonian of a segment.
    pub fn h_matrix(&self, segment: usize) -> DMatrix<C64> {
        let mut c: Vec<C64> = self.segments[segment].h.iter().map(|&x| C64::new(x, 0.0)).collect();
        c.push(C64::new(0.0, 0.0));
        self.basis.operator(&nalgebra::DVector::from_vec(c)).expect("dimension matches basis")
    }

    pub fn v_matrix(&self) -> DMatrix<C64> {
        let c: Vec<C64> = self.v.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.basis.operator(&nalgebra::DVector::from_vec(c)).expect("dimension matches basis")
    }

    /// Largest `|eigenvalue|` of `H^x` over all segments.
    pub fn max_frequency(&self) -> f64 {
        (0..self.segments.len())
            .map(|k| SymmetricEigen::new(self.hcross(k)).eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs())))
            .fold(0.0, f64::max)
    }

    pub fn propagator(&self) -> Propagator {
        Propagator::new(self)
    }
}

/// `U(t) = T exp(-i int H^x)`, built from per-segment Hermitian
/// eigendecompositions.
#[derive(Debug, Clone)]
pub struct Propagator {
    starts: Vec<f64>,
    eig: Vec<(DMatrix<C64>, Vec<f64>)>,
    at_start: Vec<DMatrix<C64>>,
}

impl Propagator {
    pub fn new(model: &SystemModel) -> Self {
        let eig: Vec<(DMatrix<C64>, Vec<f64>)> = (0..model.segments.len())
            .map(|k| {
                let e = SymmetricEigen::new(model.hcross(k));
                (e.eigenvectors, e.eigenvalues.iter().cloned().collect())
            })
            .collect();
        let starts: Vec<f64> = model.segments.iter().map(|s| s.start).collect();
        let mut at_start = vec![DMatrix::identity(model.dim(), model.dim())];
        for k in 1..starts.len() {
            let step = segment_exp(&eig[k - 1], starts[k] - starts[k - 1]);
            at_start.push(step * &at_start[k - 1]);
        }
        Self { starts, eig, at_start }
    }

    /// `U(t)`; times past the last breakpoint use the last segment.
    pub fn at(&self, t: f64) -> DMatrix<C64> {
        let k = self.starts.partition_point(|&s| s <= t).max(1) - 1;
        segment_exp(&self.eig[k], t - self.starts[k]) * &self.at_start[k]
    }
}

fn segment_exp((w, lam): &(DMatrix<C64>, Vec<f64>), dt: f64) -> DMatrix<C64> {
    let mut scaled = w.clone();
    for (j, l) in lam.iter().enumerate() {
        let ph = C64::from_polar(1.0, -l * dt);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * w.adjoint()
}
