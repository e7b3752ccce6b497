//! Small dense complex linear algebra: just what the estimators and
//! coherence routines need (products, Gram blocks, Hermitian solves).

use crate::error::{Error, Result};
use crate::scalar::{dot_conj, Cx, Real};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Cx::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Cx<T>>]) -> Self {
        Self::from_fn(rows, columns.len(), |r, c| columns[c][r])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Cx<T> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Cx<T>) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Cx<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Cx<T>> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<Cx<T>>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    /// Copy of the contiguous column block `start..start + count`.
    pub fn column_block(&self, start: usize, count: usize) -> Self {
        Self::from_fn(self.rows, count, |r, c| self.get(r, start + c))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cx<T>> {
        self.data.iter()
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| *v * s).collect(),
        }
    }

    /// `diag(d) · self`.
    pub fn scale_rows(&self, d: &[Cx<T>]) -> Self {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |r, c| d[r] * self.get(r, c))
    }

    pub fn mul_vec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(Cx::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// `self^H · v`.
    pub fn adjoint_mul_vec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![Cx::new(T::zero(), T::zero()); self.cols];
        for (r, vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }
}

/// Solves `G x = rhs` for a Hermitian positive definite `G` (given as columns
/// of a square matrix) via Cholesky. Returns `None` when a pivot is not
/// strictly positive.
pub fn cholesky_solve<T: Real>(g: &CMatrix<T>, rhs: &[Cx<T>]) -> Option<Vec<Cx<T>>> {
    let n = g.rows();
    assert_eq!(n, g.cols());
    assert_eq!(rhs.len(), n);
    let zero = Cx::new(T::zero(), T::zero());
    let mut l = vec![zero; n * n];
    for j in 0..n {
        let mut d = g.get(j, j).re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = Cx::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    // forward: L y = rhs
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i].re;
    }
    // backward: L^H x = y
    let mut x = y;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * x[k];
        }
        x[i] = s / l[i * n + i].re;
    }
    Some(x)
}

/// Least-squares fit of `y` on the given columns through the normal equations.
/// When the Gram matrix is numerically singular a ridge of `1e-12·trace/n` is
/// added and the second tuple element is `true`.
pub fn least_squares<T: Real>(columns: &[&[Cx<T>]], y: &[Cx<T>]) -> Result<(Vec<Cx<T>>, bool)> {
    let n = columns.len();
    if n == 0 {
        return Ok((Vec::new(), false));
    }
    let mut gram = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot_conj(columns[i], columns[j]);
            gram.set(i, j, v);
            gram.set(j, i, v.conj());
        }
    }
    let rhs: Vec<Cx<T>> = columns.iter().map(|c| dot_conj(c, y)).collect();
    if let Some(x) = cholesky_solve(&gram, &rhs) {
        return Ok((x, false));
    }
    let trace = (0..n).fold(T::zero(), |acc, i| acc + gram.get(i, i).re);
    let ridge = T::lit(1e-12) * (trace / T::from_usize_lossy(n)).max(T::min_positive_value());
    for i in 0..n {
        let v = gram.get(i, i) + Cx::new(ridge, T::zero());
        gram.set(i, i, v);
    }
    cholesky_solve(&gram, &rhs)
        .map(|x| (x, true))
        .ok_or_else(|| Error::Singular("least-squares Gram matrix".into()))
}
