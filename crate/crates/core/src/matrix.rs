//! Dense complex linear algebra at small and moderate dimension.
//!
//! [`ComplexMatrix`] is a plain row-major square matrix. Products and sums are
//! computed directly; eigen-decompositions and LU solves are delegated to
//! `faer`. The cocycle and asymptotics code works almost exclusively with
//! 2x2 to 4x4 matrices, the spectrum code with Galerkin matrices of a few
//! hundred rows.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest dimension accepted by the dense eigensolver.
pub const MAX_EIGEN_DIM: usize = 4096;

/// Numerical thresholds used by the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative Hermitian defect tolerated by [`HermitianMatrix::new`].
    pub hermitian: f64,
    /// Smallest eigenvalue accepted by [`principal_log_hpd`].
    pub positive_definite: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-12,
            positive_definite: 1e-12,
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:>+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix must be square"));
        }
        let data: Vec<C64> = rows.into_iter().flatten().collect();
        let m = Self { dim, data };
        m.check_finite()?;
        Ok(m)
    }

    /// Builds a matrix from real-valued rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_diagonal(&diag.iter().map(|&d| C64::new(d, 0.0)).collect::<Vec<_>>())
    }

    /// `v w*` for column vectors `v`, `w`.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        assert_eq!(v.len(), w.len());
        Self::from_fn(v.len(), |i, j| v[i] * w[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("matrix has non-finite entries"))
        }
    }

    /// `max |M - M*|` entrywise.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, mut p: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.dim);
        while p > 0 {
            if p & 1 == 1 {
                acc = &acc * &base;
            }
            p >>= 1;
            if p > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.dim, self.dim, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: faer::MatRef<'_, C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_finite()?;
        let inv = Self::from_faer(self.to_faer().partial_piv_lu().inverse().as_ref());
        if !inv.is_finite() {
            return Err(Error::numerical("matrix inverse (singular matrix)"));
        }
        Ok(inv)
    }

    /// Solves `self X = rhs`.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        self.check_finite()?;
        let lu = self.to_faer().partial_piv_lu();
        let x = Self::from_faer(lu.solve(rhs.to_faer()).as_ref());
        if !x.is_finite() {
            return Err(Error::numerical("linear solve (singular matrix)"));
        }
        Ok(x)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        if n > 64 {
            let p = self.to_faer() * rhs.to_faer();
            return ComplexMatrix::from_faer(p.as_ref());
        }
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

/// A Hermitian matrix. Construction symmetrizes away rounding-level defects.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

/// Eigen-decomposition `H = U diag(values) U*`, values ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `U diag(f(values)) U*`.
    pub fn reassemble(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let u = &self.vectors;
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| u[(i, k)] * fv[k] * u[(j, k)].conj()).sum()
        })
    }
}

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().hermitian)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        m.check_finite()?;
        let defect = m.hermitian_defect();
        if defect > tol * (1.0 + m.norm_max()) {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (defect {defect:e})"
            )));
        }
        Ok(Self::symmetrized(&m))
    }

    /// `(M + M*) / 2` without any check.
    pub fn symmetrized(m: &ComplexMatrix) -> Self {
        let n = m.dim();
        let mut h = ComplexMatrix::zeros(n);
        for i in 0..n {
            h[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in i + 1..n {
                let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        Self(h)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_real_diagonal(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale_real(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn eigh(&self) -> Result<HermitianEigen> {
        let n = self.dim();
        if n == 1 {
            return Ok(HermitianEigen {
                values: vec![self.0[(0, 0)].re],
                vectors: ComplexMatrix::identity(1),
            });
        }
        let Some((unit, scale)) = normalized(&self.0) else {
            return Ok(HermitianEigen {
                values: vec![0.0; n],
                vectors: ComplexMatrix::identity(n),
            });
        };
        let evd = unit
            .to_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::numerical(format!("Hermitian eigensolver: {e:?}")))?;
        let s = evd.S().column_vector();
        let values = (0..n).map(|i| s[i].re * scale).collect();
        let vectors = ComplexMatrix::from_faer(evd.U());
        Ok(HermitianEigen { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*self.eigenvalues()?.last().unwrap())
    }

    /// `exp(t H)` through the eigen-decomposition.
    pub fn exp_scaled(&self, t: f64) -> Result<ComplexMatrix> {
        let e = self.eigh()?;
        let m = e.reassemble(|l| C64::new((t * l).exp(), 0.0));
        if !m.is_finite() {
            return Err(Error::numerical("Hermitian exponential overflow"));
        }
        Ok(m)
    }
}

/// Largest singular value, as the square root of the top eigenvalue of `M* M`.
pub fn spectral_norm(m: &ComplexMatrix) -> Result<f64> {
    m.check_finite()?;
    if m.dim() == 1 {
        return Ok(m[(0, 0)].norm());
    }
    let Some((unit, scale)) = normalized(m) else {
        return Ok(0.0);
    };
    let gram = HermitianMatrix::symmetrized(&(&unit.adjoint() * &unit));
    Ok(gram.max_eigenvalue()?.max(0.0).sqrt() * scale)
}

/// `(m / s, s)` with `s = max |m_ij|`, or `None` for the zero matrix. Keeps
/// subnormal or huge entries away from the iterative eigensolvers.
fn normalized(m: &ComplexMatrix) -> Option<(ComplexMatrix, f64)> {
    let s = m.norm_max();
    // divide rather than multiply: 1 / s overflows for subnormal s
    (s > 0.0).then(|| (ComplexMatrix::from_fn(m.dim(), |i, j| m[(i, j)] / s), s))
}

pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    m.check_finite()?;
    if m.dim() > MAX_EIGEN_DIM {
        return Err(Error::invalid(format!(
            "eigensolver limited to dimension {MAX_EIGEN_DIM}, got {}",
            m.dim()
        )));
    }
    if m.dim() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let Some((unit, scale)) = normalized(m) else {
        return Ok(vec![C64::new(0.0, 0.0); m.dim()]);
    };
    let vals: Vec<C64> = unit
        .to_faer()
        .eigenvalues()
        .map_err(|e| Error::numerical(format!("complex eigensolver: {e:?}")))?
        .into_iter()
        .map(|z: C64| z * scale)
        .collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("complex eigensolver returned non-finite values"));
    }
    Ok(vals)
}

/// Eigenvalues and unit-norm right eigenvectors (columns of `vectors`).
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: ComplexMatrix,
}

pub fn eigen(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    m.check_finite()?;
    if m.dim() > MAX_EIGEN_DIM {
        return Err(Error::invalid(format!(
            "eigensolver limited to dimension {MAX_EIGEN_DIM}, got {}",
            m.dim()
        )));
    }
    let Some((unit, scale)) = normalized(m) else {
        return Ok(EigenDecomposition {
            values: vec![C64::new(0.0, 0.0); m.dim()],
            vectors: ComplexMatrix::identity(m.dim()),
        });
    };
    let evd = unit
        .to_faer()
        .eigen()
        .map_err(|e| Error::numerical(format!("complex eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<C64> = (0..m.dim()).map(|i| s[i] * scale).collect();
    let mut vectors = ComplexMatrix::from_faer(evd.U());
    let n = m.dim();
    for j in 0..n {
        let norm = (0..n).map(|i| vectors[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vectors[(i, j)] /= norm;
            }
        }
    }
    if !vectors.is_finite() {
        return Err(Error::numerical("complex eigensolver returned non-finite vectors"));
    }
    Ok(EigenDecomposition { values, vectors })
}

pub fn spectral_radius(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    m.check_finite()?;
    let n = m.dim();
    let norm = m.norm_one();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale_real(0.5f64.powi(squarings));
    let id = ComplexMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> ComplexMatrix {
        let mut s = a6.scale_real(c6);
        s += &a4.scale_real(c4);
        s += &a2.scale_real(c2);
        s += &id.scale_real(c0);
        s
    };
    let u_inner = {
        let mut t = &a6 * &lin(b[13], b[11], b[9], 0.0);
        t += &lin(b[7], b[5], b[3], b[1]);
        t
    };
    let u = &a * &u_inner;
    let v = {
        let mut t = &a6 * &lin(b[12], b[10], b[8], 0.0);
        t += &lin(b[6], b[4], b[2], b[0]);
        t
    };
    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
        if !r.is_finite() {
            return Err(Error::numerical("matrix exponential overflow"));
        }
    }
    if !r.is_finite() {
        return Err(Error::numerical("matrix exponential overflow"));
    }
    Ok(r)
}

/// Principal logarithm of a Hermitian positive definite matrix.
pub fn principal_log_hpd(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    principal_log_hpd_with(m, &Tolerances::default())
}

pub fn principal_log_hpd_with(m: &HermitianMatrix, tol: &Tolerances) -> Result<HermitianMatrix> {
    let e = m.eigh()?;
    let min = e.values[0];
    if min <= tol.positive_definite {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(HermitianMatrix::symmetrized(
        &e.reassemble(|l| C64::new(l.ln(), 0.0)),
    ))
}

/// Projects a Hermitian matrix onto `{X : floor <= X <= ceiling}` by clamping
/// its eigenvalues.
pub fn clamp_spectrum(m: &HermitianMatrix, floor: f64, ceiling: f64) -> Result<HermitianMatrix> {
    let e = m.eigh()?;
    Ok(HermitianMatrix::symmetrized(
        &e.reassemble(|l| C64::new(l.clamp(floor, ceiling), 0.0)),
    ))
}
