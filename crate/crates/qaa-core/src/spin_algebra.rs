//! Operators on the maximal-spin (permutation-symmetric) subspace of `n` qubits.
//!
//! The basis is indexed by Hamming weight `w = 0..=n`; basis state `|w>` is the
//! normalized uniform superposition of all weight-`w` strings. With total spin
//! `l = n/2` the spin projection is `m = l - w`, so the normalized components are
//! `N_z = diag(1 - 2w/n)` and `N_x` is the (rescaled) ladder operator.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{QaaError, Result};

/// Large-spin driver coefficients, in the order
/// `N_x, N_x^2, N_x^3, N_x N_z, N_x N_z^2, N_x^2 N_z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GammaCoefficients {
    pub gamma: [f64; 6],
}

impl GammaCoefficients {
    pub const ZERO: GammaCoefficients = GammaCoefficients { gamma: [0.0; 6] };

    pub fn new(gamma: [f64; 6]) -> Self {
        GammaCoefficients { gamma }
    }

    /// Only the `N_x N_z` coupling switched on.
    pub fn gamma4(g4: f64) -> Self {
        let mut gamma = [0.0; 6];
        gamma[3] = g4;
        GammaCoefficients { gamma }
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.iter().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
    }
}

/// Real symmetric `(n+1) x (n+1)` matrix in the Hamming-weight basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceOperator {
    n: usize,
    m: DMatrix<f64>,
}

impl SubspaceOperator {
    pub fn zeros(n: usize) -> Self {
        SubspaceOperator { n, m: DMatrix::zeros(n + 1, n + 1) }
    }

    pub fn identity(n: usize) -> Self {
        SubspaceOperator { n, m: DMatrix::identity(n + 1, n + 1) }
    }

    pub fn from_diagonal(n: usize, diag: &[f64]) -> Result<Self> {
        if diag.len() != n + 1 {
            return Err(QaaError::DimensionMismatch { expected: n + 1, found: diag.len() });
        }
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for (w, d) in diag.iter().enumerate() {
            m[(w, w)] = *d;
        }
        Ok(SubspaceOperator { n, m })
    }

    /// Wraps a matrix, enforcing exact symmetry by averaging with the transpose.
    pub fn from_matrix(n: usize, m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != n + 1 || m.ncols() != n + 1 {
            return Err(QaaError::DimensionMismatch { expected: n + 1, found: m.nrows() });
        }
        Ok(SubspaceOperator { n, m: symmetrize(m) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, w: usize, w2: usize) -> f64 {
        self.m[(w, w2)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|w| self.m[(w, w)]).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        SubspaceOperator { n: self.n, m: &self.m * s }
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &SubspaceOperator) -> f64 {
        self.m.iter().zip(other.m.iter()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.m == self.m.transpose()
    }

    /// Largest `|w - w'|` with a nonzero element.
    pub fn bandwidth(&self) -> usize {
        let d = self.dim();
        let mut bw = 0;
        for i in 0..d {
            for j in 0..d {
                if self.m[(i, j)] != 0.0 {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        bw
    }

    /// `<u| self |v>` for column vectors `u`, `v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.m[(i, j)] * v[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    fn check_same(&self, other: &SubspaceOperator) -> Result<()> {
        if self.n != other.n {
            return Err(QaaError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    /// `a*self + b*other`, with a dimension check.
    pub fn lin_comb(&self, a: f64, other: &SubspaceOperator, b: f64) -> Result<Self> {
        self.check_same(other)?;
        Ok(SubspaceOperator { n: self.n, m: &self.m * a + &other.m * b })
    }
}

impl Add for &SubspaceOperator {
    type Output = SubspaceOperator;
    fn add(self, rhs: &SubspaceOperator) -> SubspaceOperator {
        assert_eq!(self.n, rhs.n, "operator dimension mismatch");
        SubspaceOperator { n: self.n, m: &self.m + &rhs.m }
    }
}

impl Sub for &SubspaceOperator {
    type Output = SubspaceOperator;
    fn sub(self, rhs: &SubspaceOperator) -> SubspaceOperator {
        assert_eq!(self.n, rhs.n, "operator dimension mismatch");
        SubspaceOperator { n: self.n, m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &SubspaceOperator {
    type Output = SubspaceOperator;
    fn mul(self, s: f64) -> SubspaceOperator {
        self.scale(s)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(QaaError::InvalidInput(format!("qubit count must be >= 2, got {n}")));
    }
    Ok(())
}

/// Eigenvalues of `N_z`: `q_w = 1 - 2w/n`.
pub fn nz_values(n: usize) -> Vec<f64> {
    (0..=n).map(|w| 1.0 - 2.0 * w as f64 / n as f64).collect()
}

/// Coupling between `|w>` and `|w-1>` in `N_x`, for `w = 1..=n`.
pub fn nx_coupling(n: usize, w: usize) -> f64 {
    ((w * (n - w + 1)) as f64).sqrt() / n as f64
}

pub fn build_nz(n: usize) -> Result<SubspaceOperator> {
    check_n(n)?;
    SubspaceOperator::from_diagonal(n, &nz_values(n))
}

pub fn build_nx(n: usize) -> Result<SubspaceOperator> {
    check_n(n)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for w in 1..=n {
        let c = nx_coupling(n, w);
        m[(w, w - 1)] = c;
        m[(w - 1, w)] = c;
    }
    Ok(SubspaceOperator { n, m })
}

// N_x * M in O(n^2), exploiting that N_x is tridiagonal.
fn nx_times(n: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = n + 1;
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let lo = if i > 0 { nx_coupling(n, i) } else { 0.0 };
        let hi = if i < n { nx_coupling(n, i + 1) } else { 0.0 };
        for j in 0..d {
            let mut v = 0.0;
            if i > 0 {
                v += lo * m[(i - 1, j)];
            }
            if i < n {
                v += hi * m[(i + 1, j)];
            }
            out[(i, j)] = v;
        }
    }
    out
}

/// Weyl-ordered cubic driver polynomial
/// `g1 X + g2 X^2 + g3 X^3 + g4 {X,Z}/2 + g5 {X,Z^2}/2 + g6 {X^2,Z}/2`.
pub fn sym_poly(n: usize, gammas: &GammaCoefficients) -> Result<SubspaceOperator> {
    check_n(n)?;
    if !gammas.is_finite() {
        return Err(QaaError::InvalidInput("gamma coefficients must be finite".into()));
    }
    let [g1, g2, g3, g4, g5, g6] = gammas.gamma;
    let x = build_nx(n)?.into_matrix();
    let x2 = nx_times(n, &x);
    let x3 = nx_times(n, &x2);
    let z = nz_values(n);
    let d = n + 1;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let zs = z[i] + z[j];
            let zs2 = z[i] * z[i] + z[j] * z[j];
            m[(i, j)] = g1 * x[(i, j)]
                + g2 * x2[(i, j)]
                + g3 * x3[(i, j)]
                + 0.5 * g4 * x[(i, j)] * zs
                + 0.5 * g5 * x[(i, j)] * zs2
                + 0.5 * g6 * x2[(i, j)] * zs;
        }
    }
    SubspaceOperator::from_matrix(n, m)
}

/// The six Weyl-ordered monomials used by [`sym_poly`], in coefficient order.
pub fn sym_poly_basis(n: usize) -> Result<[SubspaceOperator; 6]> {
    let unit = |k: usize| {
        let mut g = [0.0; 6];
        g[k] = 1.0;
        sym_poly(n, &GammaCoefficients::new(g))
    };
    Ok([unit(0)?, unit(1)?, unit(2)?, unit(3)?, unit(4)?, unit(5)?])
}

/// Ascending eigenvalues, optionally with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl Spectrum {
    pub fn vector(&self, k: usize) -> Option<Vec<f64>> {
        self.eigenvectors.as_ref().map(|v| v.column(k).iter().copied().collect())
    }
}

/// Sweeps allowed per eigenvalue before declaring non-convergence.
pub const EIGH_SWEEPS_PER_EIGENVALUE: usize = 64;

pub fn eigh(op: &SubspaceOperator, want_vectors: bool) -> Result<Spectrum> {
    eigh_matrix(op.matrix(), want_vectors)
}

/// Dense symmetric eigendecomposition (Householder tridiagonalization followed
/// by implicit shifted QR), sorted ascending.
pub fn eigh_matrix(m: &DMatrix<f64>, want_vectors: bool) -> Result<Spectrum> {
    let d = m.nrows();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(QaaError::Numerical("non-finite matrix entries".into()));
    }
    let norm = m.amax();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGH_SWEEPS_PER_EIGENVALUE * d.max(1))
        .ok_or(QaaError::NoConvergence { norm })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = want_vectors.then(|| {
        let mut v = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            v.set_column(dst, &eig.eigenvectors.column(src));
        }
        v
    });
    Ok(Spectrum { eigenvalues, eigenvectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nz_small_cases() {
        let z = build_nz(4).unwrap();
        assert_eq!(z.get(3, 3), -0.5);
        assert_eq!(build_nz(2).unwrap().diagonal(), vec![1.0, 0.0, -1.0]);
        for n in [2, 5, 17] {
            let tr: f64 = build_nz(n).unwrap().diagonal().iter().sum();
            assert!(tr.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(build_nz(1).is_err());
        assert!(build_nx(0).is_err());
    }

    #[test]
    fn nx_two_qubits() {
        let x = build_nx(2).unwrap();
        let h = std::f64::consts::SQRT_2 / 2.0;
        assert!((x.get(0, 1) - h).abs() < 1e-15 && (x.get(1, 2) - h).abs() < 1e-15);
        let ev = eigh(&x, false).unwrap().eigenvalues;
        for (a, b) in ev.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nx_top_eigenvalue_is_one() {
        let ev = eigh(&build_nx(4).unwrap(), false).unwrap().eigenvalues;
        assert!((ev[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_trivial_matrices() {
        let d = SubspaceOperator::from_diagonal(2, &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(eigh(&d, false).unwrap().eigenvalues, vec![1.0, 2.0, 3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ev = eigh_matrix(&m, false).unwrap().eigenvalues;
        assert!((ev[0] + 1.0).abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigh_rejects_nan() {
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(eigh_matrix(&m, false).is_err());
    }

    #[test]
    fn sym_poly_special_cases() {
        let n = 9;
        let zero = sym_poly(n, &GammaCoefficients::ZERO).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let x = build_nx(n).unwrap();
        let lin = sym_poly(n, &GammaCoefficients::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(lin.max_abs_diff(&x) < 1e-15);

        // g4 = -8: the deterministic-driver term, compared with dense products.
        let z = build_nz(n).unwrap();
        let xm = x.matrix();
        let zm = z.matrix();
        let expect = (xm * zm + zm * xm) * (-4.0);
        let got = sym_poly(n, &GammaCoefficients::gamma4(-8.0)).unwrap();
        assert!((got.matrix() - expect).amax() < 1e-13);
    }

    #[test]
    fn sym_poly_matches_dense_products() {
        let n = 7;
        let g = [0.3, -1.1, 0.7, 2.0, -0.4, 1.3];
        let x = build_nx(n).unwrap().into_matrix();
        let z = build_nz(n).unwrap().into_matrix();
        let x2 = &x * &x;
        let z2 = &z * &z;
        let anti = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a * b + b * a) * 0.5;
        let expect = &x * g[0]
            + &x2 * g[1]
            + (&x2 * &x) * g[2]
            + anti(&x, &z) * g[3]
            + anti(&x, &z2) * g[4]
            + anti(&x2, &z) * g[5];
        let got = sym_poly(n, &GammaCoefficients::new(g)).unwrap();
        assert!((got.matrix() - expect).amax() < 1e-13);
        assert!(got.is_symmetric());
    }
}
