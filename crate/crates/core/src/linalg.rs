//! Dense row-major vectors and matrices in `f64`.
//!
//! Only what the integrators and network code need: products, axpy-style
//! combinations, an LU solve and a scaling-and-squaring matrix exponential.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Non-empty vector of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `entries`; fails on an empty vector.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("vector must have at least one entry".into()));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "vector length must be at least 1");
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        assert!(len >= 1, "vector length must be at least 1");
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Concatenation `self ∥ tail`.
    pub fn concat(&self, tail: &[f64]) -> DenseVector {
        let mut v = Vec::with_capacity(self.len() + tail.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(tail);
        DenseVector(v)
    }

    pub fn scaled(&self, factor: f64) -> DenseVector {
        DenseVector(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_len("dot", self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &DenseVector) -> Result<f64> {
        check_len("max_abs_diff", self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Squared Euclidean distance.
    pub fn dist_sq(&self, other: &DenseVector) -> Result<f64> {
        check_len("dist_sq", self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &DenseVector) -> Result<DenseVector> {
        check_len("hadamard", self.len(), other.len())?;
        Ok(DenseVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect(),
        ))
    }
}

impl From<f64> for DenseVector {
    fn from(x: f64) -> Self {
        Self(vec![x])
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            op,
            left: (a, 1),
            right: (b, 1),
        });
    }
    Ok(())
}

/// Dense matrix, row-major: `entries[i * cols + j] = A[i, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// Builds a matrix from equally long rows.
    ///
    /// Panics on ragged or empty input; intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            entries.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self + other`.
    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.entries[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "max_abs_diff",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// `A · x`.
pub fn matvec(a: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    if a.cols != x.len() {
        return Err(Error::Dimension {
            op: "matvec",
            left: a.shape(),
            right: (x.len(), 1),
        });
    }
    let out = (0..a.rows)
        .map(|i| a.row(i).iter().zip(x.iter()).map(|(p, q)| p * q).sum())
        .collect();
    Ok(DenseVector(out))
}

/// `a·x + b·y`, elementwise.
pub fn scale_add(a: f64, x: &DenseVector, b: f64, y: &DenseVector) -> Result<DenseVector> {
    check_len("scale_add", x.len(), y.len())?;
    Ok(DenseVector(
        x.iter().zip(y.iter()).map(|(p, q)| a * p + b * q).collect(),
    ))
}

/// Solves `A z = b` by LU factorization with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows != b.len() {
        return Err(Error::Dimension {
            op: "solve",
            left: a.shape(),
            right: (b.len(), 1),
        });
    }
    let n = a.rows;
    let mut lu = a.entries.clone();
    let mut rhs = b.0.clone();
    let scale = a.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tiny = scale * n as f64 * f64::EPSILON;

    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= tiny || pmax == 0.0 {
            return Err(Error::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            rhs.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[i * n + k] = factor;
            for j in (k + 1)..n {
                lu[i * n + j] -= factor * lu[k * n + j];
            }
            rhs[i] -= factor * rhs[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in (i + 1)..n {
            acc -= lu[i * n + j] * rhs[j];
        }
        rhs[i] = acc / lu[i * n + i];
    }
    Ok(DenseVector(rhs))
}

const MAX_TAYLOR_ORDER: usize = 40;
const SCALED_NORM_TARGET: f64 = 0.5;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// `A` is scaled by `2^-s` so that `‖A/2^s‖₁ ≤ 1/2`; the series order is the
/// smallest one whose tail bound, inflated by the `2^s` error growth of the
/// squaring phase, falls below `tol`.
pub fn expm(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("expm tolerance must be positive, got {tol}")));
    }
    let n = a.rows;
    let norm = a.norm_one();
    if norm == 0.0 {
        return Ok(DenseMatrix::identity(n));
    }
    if !norm.is_finite() {
        return Err(Error::Config("expm of a non-finite matrix".into()));
    }

    let squarings = if norm > SCALED_NORM_TARGET {
        (norm / SCALED_NORM_TARGET).log2().ceil() as u32
    } else {
        0
    };
    let b = a.scaled(0.5_f64.powi(squarings as i32));
    let b_norm = norm * 0.5_f64.powi(squarings as i32);

    let order = taylor_order(b_norm, tol / 2.0_f64.powi(squarings as i32));

    // Horner: I + B(I + B/2(I + B/3(... (I + B/q))))
    let id = DenseMatrix::identity(n);
    let mut acc = id.clone();
    for k in (1..=order).rev() {
        acc = id.add(&b.matmul(&acc)?.scaled(1.0 / k as f64))?;
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc)?;
    }
    Ok(acc)
}

/// Smallest q with `x^{q+1}/(q+1)! / (1 - x/(q+2)) ≤ tol`, capped.
fn taylor_order(x: f64, tol: f64) -> usize {
    let mut term = x; // x^{q+1}/(q+1)! at q = 0
    for q in 0..MAX_TAYLOR_ORDER {
        let tail = term / (1.0 - x / (q as f64 + 2.0));
        if tail <= tol {
            return q.max(1);
        }
        term *= x / (q as f64 + 2.0);
    }
    MAX_TAYLOR_ORDER
}
