//! Minimal dense matrix support for the small (1–4 state) systems used by the
//! load models: products, the matrix exponential, and a linear solve for DC
//! gain checks. Row-major storage.

use crate::num::{lit, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[&[F]]) -> Self {
        let nr = rows.len();
        let nc = if nr == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(nr * nc);
        for r in rows {
            assert_eq!(r.len(), nc, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nr,
            cols: nc,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o = *o + *b;
        }
        out
    }

    pub fn scale(&self, s: F) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v * s;
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> F {
        let mut best = F::zero();
        for i in 0..self.rows {
            let mut sum = F::zero();
            for j in 0..self.cols {
                sum = sum + self[(i, j)].abs();
            }
            if sum > best {
                best = sum;
            }
        }
        best
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        let mut out = Self::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` for a singular system.
    pub fn solve(&self, b: &[F]) -> Option<Vec<F>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(b.len(), self.rows);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col] == F::zero() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / d;
                if factor == F::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j] * factor;
                    a[r * n + j] = a[r * n + j] - v;
                }
                x[r] = x[r] - factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut v = x[col];
            for j in col + 1..n {
                v = v - a[col * n + j] * x[j];
            }
            x[col] = v / a[col * n + col];
        }
        Some(x)
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (r, c): (usize, usize)) -> &F {
        &self.data[r * self.cols + c]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut F {
        &mut self.data[r * self.cols + c]
    }
}

/// Matrix exponential by scaling and squaring with a Taylor series.
///
/// The argument is scaled down until its infinity norm is at most 1/4, the
/// series is summed to machine precision, and the result squared back up.
/// For the small, mildly scaled matrices produced by ZOH discretization this
/// is accurate to a few ulps.
pub fn expm<F: Scalar>(a: &Matrix<F>) -> Matrix<F> {
    assert_eq!(a.rows(), a.cols(), "expm needs a square matrix");
    let n = a.rows();
    let norm = a.norm_inf();
    let quarter: F = lit(0.25);
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    if norm > quarter {
        let ratio: f64 = (norm / quarter).to_f64().unwrap();
        squarings = ratio.log2().ceil() as u32;
        let factor = F::from_f64(0.5f64.powi(squarings as i32)).unwrap();
        scaled = a.scale(factor);
    }

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..64 {
        term = term.matmul(&scaled).scale(F::one() / lit(k as f64));
        sum = sum.add(&term);
        if term.norm_inf() <= F::epsilon() * sum.norm_inf() {
            break;
        }
    }

    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}
