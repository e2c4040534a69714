//! Generalized Gell-Mann basis and the vectorized superoperators built on it.
//!
//! Ordering for dimension n (m = n^2 - 1 traceless elements):
//!
//! 1. symmetric pairs `|j><k| + |k><j|` for j < k, lexicographic in (j, k);
//! 2. antisymmetric pairs `-i|j><k| + i|k><j|`, same order;
//! 3. diagonals `sqrt(2/(l(l+1))) (sum_{j<l} |j><j| - l |l><l|)`, l = 1..n-1.
//!
//! For n = 2 this gives (sigma_x, sigma_y, sigma_z). Index m (0-based) is the
//! identity slot. A state vector holds `P_i = Tr[rho nu_i] / 2` and
//! `P_m = Tr[rho] / n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{validation, Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct SuBasis {
    n: usize,
    nu: Vec<DMatrix<C64>>,
    f: Vec<f64>,
    d: Vec<f64>,
}

impl SuBasis {
    pub fn new(n: usize) -> Result<Self> {
        build_basis(n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of traceless generators, n^2 - 1.
    pub fn m(&self) -> usize {
        self.n * self.n - 1
    }

    /// Length of a state vector, n^2.
    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn nu(&self, i: usize) -> &DMatrix<C64> {
        &self.nu[i]
    }

    pub fn generators(&self) -> &[DMatrix<C64>] {
        &self.nu
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let m = self.m();
        (i * m + j) * m + k
    }

    #[inline]
    pub fn f(&self, i: usize, j: usize, k: usize) -> f64 {
        self.f[self.idx(i, j, k)]
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize, k: usize) -> f64 {
        self.d[self.idx(i, j, k)]
    }

    /// Expansion coefficients of an arbitrary n x n operator, same layout as
    /// [`PVector`]. No Hermiticity or trace checks.
    pub fn coefficients(&self, a: &DMatrix<C64>) -> Result<DVector<C64>> {
        self.check_square(a)?;
        let m = self.m();
        let mut c = DVector::zeros(m + 1);
        for i in 0..m {
            c[i] = trace_product(a, &self.nu[i]) * 0.5;
        }
        c[m] = a.trace() / self.n as f64;
        Ok(c)
    }

    /// Inverse of [`coefficients`](Self::coefficients).
    pub fn operator(&self, c: &DVector<C64>) -> Result<DMatrix<C64>> {
        if c.len() != self.dim() {
            return Err(len_err("coefficient vector", c.len(), self.dim()));
        }
        let m = self.m();
        let mut a = DMatrix::identity(self.n, self.n) * c[m];
        for (ci, nu) in c.iter().zip(&self.nu) {
            a += nu * *ci;
        }
        Ok(a)
    }

    /// Real coefficients of a Hermitian operator.
    pub fn hermitian_coefficients(&self, a: &DMatrix<C64>) -> Result<Vec<f64>> {
        check_hermitian(a, 1e-10)?;
        Ok(self.coefficients(a)?.iter().map(|z| z.re).collect())
    }

    fn check_square(&self, a: &DMatrix<C64>) -> Result<()> {
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(validation(format!("expected {0}x{0} matrix, got {1}x{2}", self.n, a.nrows(), a.ncols())));
        }
        Ok(())
    }
}

fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn len_err(what: &str, got: usize, want: usize) -> Error {
    validation(format!("{what}: length {got}, expected {want}"))
}

pub(crate) fn check_hermitian(a: &DMatrix<C64>, tol: f64) -> Result<()> {
    let dev = (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > tol {
        return Err(validation(format!("matrix is not Hermitian (deviation {dev:.3e})")));
    }
    Ok(())
}

pub fn build_basis(n: usize) -> Result<SuBasis> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let zero = DMatrix::<C64>::zeros(n, n);
    let mut nu = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in j + 1..n {
            let mut s = zero.clone();
            s[(j, k)] = C64::new(1.0, 0.0);
            s[(k, j)] = C64::new(1.0, 0.0);
            nu.push(s);
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            let mut a = zero.clone();
            a[(j, k)] = -I;
            a[(k, j)] = I;
            nu.push(a);
        }
    }
    for l in 1..n {
        let lf = l as f64;
        let c = (2.0 / (lf * (lf + 1.0))).sqrt();
        let mut dg = zero.clone();
        for j in 0..l {
            dg[(j, j)] = C64::new(c, 0.0);
        }
        dg[(l, l)] = C64::new(-lf * c, 0.0);
        nu.push(dg);
    }

    let m = nu.len();
    let mut f = vec![0.0; m * m * m];
    let mut d = vec![0.0; m * m * m];
    for i in 0..m {
        for j in 0..m {
            let prod_ij = &nu[i] * &nu[j];
            let prod_ji = &nu[j] * &nu[i];
            let comm = &prod_ij - &prod_ji;
            let anti = &prod_ij + &prod_ji;
            for (k, nu_k) in nu.iter().enumerate() {
                let idx = (i * m + j) * m + k;
                // f_ijk = Tr([nu_i, nu_j] nu_k) / 4i, d_ijk = Tr({nu_i, nu_j} nu_k) / 4
                f[idx] = (trace_product(&comm, nu_k) / (4.0 * I)).re;
                d[idx] = (trace_product(&anti, nu_k) / 4.0).re;
            }
        }
    }
    Ok(SuBasis { n, nu, f, d })
}

/// Vectorized system state `[P_1, ..., P_{n^2-1}, P_{n^2}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PVector {
    pub coeffs: DVector<f64>,
}

impl PVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs: DVector::from_vec(coeffs) }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Expectation values `<nu_i> = 2 P_i` of the traceless generators.
    pub fn expectations(&self) -> Vec<f64> {
        let m = self.coeffs.len() - 1;
        self.coeffs.iter().take(m).map(|p| 2.0 * p).collect()
    }

    /// Maximally mixed state of an n-level system.
    pub fn mixed(n: usize) -> Self {
        let mut c = vec![0.0; n * n];
        c[n * n - 1] = 1.0 / n as f64;
        Self::new(c)
    }

    /// State with Bloch-like expectations `<nu_i>` supplied directly.
    pub fn from_expectations(n: usize, exp: &[f64]) -> Result<Self> {
        if exp.len() != n * n - 1 {
            return Err(len_err("expectation vector", exp.len(), n * n - 1));
        }
        let mut c: Vec<f64> = exp.iter().map(|e| 0.5 * e).collect();
        c.push(1.0 / n as f64);
        Ok(Self::new(c))
    }
}

pub fn vectorize(rho: &DMatrix<C64>, basis: &SuBasis) -> Result<PVector> {
    basis.check_square(rho)?;
    check_hermitian(rho, 1e-10)?;
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(validation(format!("density matrix trace is {tr}, expected 1")));
    }
    let c = basis.coefficients(rho)?;
    let mut p: Vec<f64> = c.iter().map(|z| z.re).collect();
    let last = p.len() - 1;
    p[last] = 1.0 / basis.n() as f64;
    Ok(PVector::new(p))
}

pub fn devectorize(p: &PVector, basis: &SuBasis) -> Result<DMatrix<C64>> {
    let c = p.coeffs.map(|x| C64::new(x, 0.0));
    basis.operator(&c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hcross,
    Vcross,
    Vcirc,
}

#[derive(Debug, Clone)]
pub struct VectorizedOperator {
    pub kind: OperatorKind,
    pub matrix: DMatrix<C64>,
}

/// `(X)_ij = -2i c_k f_kij` on the traceless block, zero last row and column.
fn cross_matrix(c: &[f64], basis: &SuBasis) -> DMatrix<C64> {
    let m = basis.m();
    let mut x = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            let s: f64 = (0..m).map(|k| c[k] * basis.f(k, i, j)).sum();
            x[(i, j)] = C64::new(0.0, -2.0 * s);
        }
    }
    x
}

/// Matrix of the commutator with `H = H_k nu_k`; `-i H^x` generates `-i[H, .]`.
pub fn build_hcross(h: &[f64], basis: &SuBasis) -> Result<VectorizedOperator> {
    if h.len() != basis.m() {
        return Err(len_err("H coefficients", h.len(), basis.m()));
    }
    Ok(VectorizedOperator { kind: OperatorKind::Hcross, matrix: cross_matrix(h, basis) })
}

/// Commutator matrix of `V = V_k nu_k + V_{n^2} I`; the identity part drops out.
pub fn build_vcross(v: &[f64], basis: &SuBasis) -> Result<VectorizedOperator> {
    if v.len() != basis.dim() {
        return Err(len_err("V coefficients", v.len(), basis.dim()));
    }
    Ok(VectorizedOperator { kind: OperatorKind::Vcross, matrix: cross_matrix(&v[..basis.m()], basis) })
}

/// Anticommutator matrix of `V`, acting as `{V, .}` on state vectors.
pub fn build_vcirc(v: &[f64], basis: &SuBasis) -> Result<VectorizedOperator> {
    if v.len() != basis.dim() {
        return Err(len_err("V coefficients", v.len(), basis.dim()));
    }
    let m = basis.m();
    let n = basis.n() as f64;
    let v0 = v[m];
    let mut x = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            let s: f64 = (0..m).map(|k| v[k] * basis.d(k, i, j)).sum();
            x[(i, j)] = C64::new(2.0 * s, 0.0);
        }
        x[(i, i)] += C64::new(2.0 * v0, 0.0);
        x[(i, m)] = C64::new(2.0 * v[i], 0.0);
        x[(m, i)] = C64::new(4.0 / n * v[i], 0.0);
    }
    x[(m, m)] = C64::new(2.0 * v0, 0.0);
    Ok(VectorizedOperator { kind: OperatorKind::Vcirc, matrix: x })
}

/// Vectorized matrix of a linear map on n x n operators: column j holds the
/// coefficients of `f(nu_j)`, the last column those of `f(I)`.
pub fn superoperator_matrix<F>(basis: &SuBasis, f: F) -> Result<DMatrix<C64>>
where
    F: Fn(&DMatrix<C64>) -> DMatrix<C64>,
{
    let dim = basis.dim();
    let mut out = DMatrix::zeros(dim, dim);
    let id = DMatrix::identity(basis.n(), basis.n());
    for j in 0..dim {
        let e = if j < basis.m() { &basis.nu[j] } else { &id };
        let col = basis.coefficients(&f(e))?;
        out.set_column(j, &col);
    }
    Ok(out)
}
