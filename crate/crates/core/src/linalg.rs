//! Dense complex matrices over composite Hilbert spaces.
//!
//! Everything here is small and dense: the largest space the crate is meant
//! for is 256-dimensional (eight qubits, or six qubits with a small cavity
//! factor). Matrices are stored row-major as [`C64`] entries.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Maximum absolute deviation of `m - m†` accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Largest Hilbert-space dimension the model builders will produce.
pub const MAX_DIM: usize = 256;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended
    /// for literals in code and tests.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: n_rows, cols: n_cols, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                m.data[i * b.len() + j] = ai * bj.conj();
            }
        }
        m
    }

    /// Projector `|a⟩⟨a|`.
    pub fn projector(a: &[C64]) -> Self {
        Self::outer(a, a)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn require_square(&self, what: &str) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::Dimension(format!("{what} must be square, got {}x{}", self.rows, self.cols)))
        }
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|self - other|`. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Max-abs deviation from Hermiticity, `‖m − m†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = self.data[i * n + j] - self.data[j * n + i].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let mut m = self.clone();
        m.symmetrize_in_place();
        m
    }

    pub(crate) fn symmetrize_in_place(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                let s = (a + b.conj()) * 0.5;
                self.data[i * n + j] = s;
                self.data[j * n + i] = s.conj();
            }
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Checked matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!((self.cols, self.rows), (other.rows, other.cols), "shape mismatch");
        let mut acc = ZERO;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += self.data[i * self.cols + j] * other.data[j * other.cols + i];
            }
        }
        acc
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "shape mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

// Operator impls panic on shape mismatch, like indexing does. Use
// `matmul` where the shapes come from user input.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in product");
        self.mul_unchecked(rhs)
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: C64) -> ComplexMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: f64) -> ComplexMatrix {
        self.scale_real(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sum");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in difference");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// Tensor-factor dimensions of a composite Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HilbertStructure {
    dims: Vec<usize>,
}

impl HilbertStructure {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("subsystem dimensions must be positive, got {dims:?}")));
        }
        Ok(Self { dims })
    }

    /// System of dimension `d` and environment of dimension `env`.
    pub fn bipartite(d: usize, env: usize) -> Self {
        Self::new(vec![d, env]).expect("positive dimensions")
    }

    pub fn qubits(n: usize) -> Self {
        Self::new(vec![2; n]).expect("positive dimensions")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Total dimension, the product of the factor dimensions.
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub(crate) fn check_matrix(&self, m: &ComplexMatrix) -> Result<()> {
        let n = m.require_square("operator")?;
        if n != self.dim() {
            return Err(Error::Dimension(format!(
                "matrix is {n}x{n} but structure {:?} has dimension {}",
                self.dims,
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (p, q) = (b.rows, b.cols);
    let rows = a.rows * p;
    let cols = a.cols * q;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.data[i * a.cols + j];
            if aij == ZERO {
                continue;
            }
            for k in 0..p {
                let base = (i * p + k) * cols + j * q;
                for l in 0..q {
                    out.data[base + l] = aij * b.data[k * q + l];
                }
            }
        }
    }
    out
}

/// Kronecker product of several factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors.into_iter().fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// Tensor product of state vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Places `op` on factor `site` of `structure`, with identities elsewhere.
pub fn embed(op: &ComplexMatrix, structure: &HilbertStructure, site: usize) -> Result<ComplexMatrix> {
    let dims = structure.dims();
    if site >= dims.len() {
        return Err(Error::Dimension(format!("subsystem {site} out of range for {dims:?}")));
    }
    let d = op.require_square("embedded operator")?;
    if d != dims[site] {
        return Err(Error::Dimension(format!(
            "operator of dimension {d} cannot act on subsystem {site} of dimension {}",
            dims[site]
        )));
    }
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    Ok(kron(&kron(&ComplexMatrix::identity(left), op), &ComplexMatrix::identity(right)))
}

/// Traces out every subsystem not listed in `keep`. Kept factors stay in
/// their original order; an empty `keep` yields the 1x1 scalar trace.
pub fn partial_trace(m: &ComplexMatrix, structure: &HilbertStructure, keep: &[usize]) -> Result<ComplexMatrix> {
    structure.check_matrix(m)?;
    let dims = structure.dims();
    let n_sub = dims.len();
    let mut kept = vec![false; n_sub];
    for &k in keep {
        if k >= n_sub {
            return Err(Error::Dimension(format!("subsystem {k} out of range for {dims:?}")));
        }
        kept[k] = true;
    }

    let keep_dims: Vec<usize> = (0..n_sub).filter(|&s| kept[s]).map(|s| dims[s]).collect();
    let trace_dims: Vec<usize> = (0..n_sub).filter(|&s| !kept[s]).map(|s| dims[s]).collect();
    let d_keep: usize = keep_dims.iter().product();
    let d_trace: usize = trace_dims.iter().product();

    // Row-major strides of each factor in the full index.
    let mut strides = vec![1usize; n_sub];
    for s in (0..n_sub.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * dims[s + 1];
    }
    let offsets = |kept_flag: bool, local: usize| -> usize {
        // Decompose `local` over the selected factors and map to a full offset.
        let mut rem = local;
        let mut off = 0;
        for s in (0..n_sub).rev() {
            if kept[s] == kept_flag {
                let idx = rem % dims[s];
                rem /= dims[s];
                off += idx * strides[s];
            }
        }
        off
    };
    let keep_off: Vec<usize> = (0..d_keep).map(|a| offsets(true, a)).collect();
    let trace_off: Vec<usize> = (0..d_trace).map(|t| offsets(false, t)).collect();

    let n = structure.dim();
    let mut out = ComplexMatrix::zeros(d_keep, d_keep);
    for (a, &ra) in keep_off.iter().enumerate() {
        for (b, &rb) in keep_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &trace_off {
                acc += m.data[(ra + t) * n + rb + t];
            }
            out.data[a * d_keep + b] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: ComplexMatrix,
}

impl HermEig {
    /// `V f(Λ) V†` for a scalar function of the eigenvalues.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let mut scaled = self.vectors.clone();
        for row in scaled.data.chunks_mut(n) {
            for (x, f) in row.iter_mut().zip(&fv) {
                *x *= f;
            }
        }
        &scaled * &self.vectors.dagger()
    }

    /// Eigenvector `k` as a column.
    pub fn vector(&self, k: usize) -> Vec<C64> {
        let n = self.values.len();
        (0..n).map(|i| self.vectors.data[i * n + k]).collect()
    }
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    m.require_square("Hermitian operator")?;
    let err = m.hermiticity_error();
    if err > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: err });
    }
    Ok(())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn herm_eig(m: &ComplexMatrix) -> Result<HermEig> {
    check_hermitian(m)?;
    let n = m.rows;
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: ComplexMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(m.hermitian_part().to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors.data[i * n + col] = eig.eigenvectors[(i, k)];
        }
    }
    Ok(HermEig { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn herm_eigvals(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    let mut vals: Vec<f64> = m.hermitian_part().to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// `exp(scale · h)` for Hermitian `h`, through its eigendecomposition.
/// With `scale = -i t` this is the propagator `exp(-i h t)`.
pub fn expm_herm_factor(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    Ok(herm_eig(h)?.map(|l| (scale * l).exp()))
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_same_square(a, b)?;
    Ok(&(a * b) - &(b * a))
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_same_square(a, b)?;
    Ok(&(a * b) + &(b * a))
}

fn check_same_square(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    let n = a.require_square("left operand")?;
    let m = b.require_square("right operand")?;
    if n != m {
        return Err(Error::Dimension(format!("operands have dimensions {n} and {m}")));
    }
    Ok(())
}

/// Pauli matrices and single-qubit states. Basis order is `|0⟩, |1⟩` with
/// `σ_z|0⟩ = |0⟩`.
pub mod pauli {
    use super::{ComplexMatrix, C64, I, ONE, ZERO};

    pub fn identity() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ONE, ZERO], [ZERO, -ONE]])
    }

    /// `[σ_x, σ_y, σ_z]`.
    pub fn all() -> [ComplexMatrix; 3] {
        [x(), y(), z()]
    }

    /// `|0⟩⟨1|`, which maps `|1⟩` to `|0⟩`.
    pub fn lowering() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, ONE], [ZERO, ZERO]])
    }

    /// `|1⟩⟨0|`.
    pub fn raising() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, ZERO], [ONE, ZERO]])
    }

    /// Eigenstates of the Pauli operators: `axis` is 0, 1, 2 for x, y, z and
    /// `positive` picks the +1 eigenvector.
    pub fn eigenstate(axis: usize, positive: bool) -> Vec<C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = if positive { 1.0 } else { -1.0 };
        match axis {
            0 => vec![C64::new(h, 0.0), C64::new(s * h, 0.0)],
            1 => vec![C64::new(h, 0.0), C64::new(0.0, s * h)],
            2 if positive => vec![ONE, ZERO],
            2 => vec![ZERO, ONE],
            _ => panic!("Pauli axis must be 0, 1 or 2"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_identities() {
        let i4 = kron(&pauli::identity(), &pauli::identity());
        assert_eq!(i4, ComplexMatrix::identity(4));
        let zz = kron(&pauli::z(), &pauli::z());
        assert_eq!(zz, ComplexMatrix::from_real_diagonal(&[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn kron_matches_index_formula() {
        let (a, b) = (pauli::x(), pauli::y());
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        assert_eq!(k[(i * 2 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
        // σ_x ⊗ σ_y written out by hand.
        let expected = ComplexMatrix::from_rows(&[
            [ZERO, ZERO, ZERO, -I],
            [ZERO, ZERO, I, ZERO],
            [ZERO, -I, ZERO, ZERO],
            [I, ZERO, ZERO, ZERO],
        ]);
        assert_eq!(k, expected);
    }

    #[test]
    fn partial_trace_of_product_and_bell() {
        let rho = ComplexMatrix::from_rows(&[[c(0.7, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.3, 0.0)]]);
        let tau = ComplexMatrix::from_rows(&[[c(0.4, 0.0), c(0.0, 0.3)], [c(0.0, -0.3), c(0.6, 0.0)]]);
        let s = HilbertStructure::bipartite(2, 2);
        let joint = kron(&rho, &tau);
        assert!(partial_trace(&joint, &s, &[1]).unwrap().max_abs_diff(&tau) < 1e-15);
        assert!(partial_trace(&joint, &s, &[0]).unwrap().max_abs_diff(&rho) < 1e-15);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)];
        let p = ComplexMatrix::projector(&bell);
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        for keep in [0, 1] {
            assert!(partial_trace(&p, &s, &[keep]).unwrap().max_abs_diff(&half) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_keeps_middle_factor() {
        let a = pauli::x();
        let b = ComplexMatrix::from_real_diagonal(&[1.0, 2.0, 3.0]);
        let cc = ComplexMatrix::from_real_diagonal(&[0.25, 0.75]);
        let s = HilbertStructure::new(vec![2, 3, 2]).unwrap();
        let m = kron_all([&ComplexMatrix::identity(2), &b, &cc]);
        // Tr(I₂)·Tr(cc) = 2
        let kept = partial_trace(&m, &s, &[1]).unwrap();
        assert!(kept.max_abs_diff(&b.scale_real(2.0)) < 1e-15);
        let m2 = kron_all([&a, &b, &cc]);
        let kept = partial_trace(&m2, &s, &[0, 2]).unwrap();
        assert!(kept.max_abs_diff(&kron(&a, &cc).scale_real(6.0)) < 1e-14);
    }

    #[test]
    fn partial_trace_rejects_mismatched_structure() {
        let s = HilbertStructure::bipartite(2, 3);
        assert!(matches!(partial_trace(&ComplexMatrix::identity(4), &s, &[0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn eig_of_paulis() {
        let e = herm_eig(&pauli::z()).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        let e = herm_eig(&pauli::x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        // Eigenvectors (|0⟩ ∓ |1⟩)/√2 up to phase.
        let minus = pauli::eigenstate(0, false);
        let plus = pauli::eigenstate(0, true);
        for (k, want) in [(0, &minus), (1, &plus)] {
            let v = e.vector(k);
            let overlap: C64 = v.iter().zip(want.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_of_xx_coupling() {
        // λ^{xx}=4 with S = σ/2 gives (σ_x⊗σ_x), eigenvalues ±1 twice.
        let h = kron(&pauli::x(), &pauli::x());
        let vals = herm_eigvals(&h).unwrap();
        let want = [-1.0, -1.0, 1.0, 1.0];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(&[[ONE, ONE], [ZERO, ONE]]);
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
        assert!(matches!(expm_herm_factor(&m, -I), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn exponential_examples() {
        let h = kron(&pauli::x(), &pauli::z());
        let u = expm_herm_factor(&h, ZERO).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);

        let a = pauli::z().scale_real(0.5);
        let u = expm_herm_factor(&a, c(0.0, -FRAC_PI_2)).unwrap();
        let want = ComplexMatrix::from_rows(&[
            [C64::from_polar(1.0, -FRAC_PI_4), ZERO],
            [ZERO, C64::from_polar(1.0, FRAC_PI_4)],
        ]);
        assert!(u.max_abs_diff(&want) < 1e-14);

        let u = expm_herm_factor(&pauli::x().scale_real(0.5), c(0.0, -PI)).unwrap();
        assert!(u.max_abs_diff(&pauli::x().scale(-I)) < 1e-14);
    }

    #[test]
    fn commutator_examples() {
        let cxy = commutator(&pauli::x(), &pauli::y()).unwrap();
        assert!(cxy.max_abs_diff(&pauli::z().scale(c(0.0, 2.0))) < 1e-15);
        let axx = anticommutator(&pauli::x(), &pauli::x()).unwrap();
        assert!(axx.max_abs_diff(&ComplexMatrix::identity(2).scale_real(2.0)) < 1e-15);
        let h = kron(&pauli::y(), &pauli::z());
        assert_eq!(commutator(&h, &h).unwrap().max_abs(), 0.0);
        assert!(commutator(&pauli::x(), &ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn embed_places_operator() {
        let s = HilbertStructure::qubits(3);
        let e = embed(&pauli::x(), &s, 1).unwrap();
        let want = kron_all([&pauli::identity(), &pauli::x(), &pauli::identity()]);
        assert_eq!(e, want);
        assert!(embed(&pauli::x(), &s, 3).is_err());
        assert!(embed(&ComplexMatrix::identity(3), &s, 0).is_err());
    }
}
