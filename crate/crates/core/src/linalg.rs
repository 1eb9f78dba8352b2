//! Small dense linear algebra for the handful of systems the verifiers solve:
//! Newton steps for changes of variables, least squares for control
//! multipliers and the positive-independence test for active gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Row vector times matrix: `w^T * self`.
    pub fn vec_mul(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += wi * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &Mat) -> Result<Lu> {
        if a.rows != a.cols {
            return Err(Error::Invalid("LU of a non-square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut p = k;
            let mut best = libm::fabs(lu[(k, k)]);
            for i in k + 1..n {
                let v = libm::fabs(lu[(i, k)]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::Singular("pivot below threshold in LU".into()));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= factor * v;
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        let n = self.lu.rows;
        (0..n).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Mat {
        let n = self.lu.rows;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::new(a)?.solve(b))
}

/// Least-squares solution of `sum_k coef[k] * vectors[k] ≈ target`.
///
/// Uses modified Gram-Schmidt on the given vectors; a vector that is
/// (numerically) in the span of the preceding ones receives a zero
/// coefficient, which yields a basic solution for rank-deficient sets.
/// Returns the coefficients and the Euclidean norm of the residual.
pub fn least_squares_combination(vectors: &[Vec<f64>], target: &[f64]) -> (Vec<f64>, f64) {
    let k = vectors.len();
    let dim = target.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    // r[i][j]: coefficient of q_i in vector j (upper triangular over kept columns)
    let mut r = vec![vec![0.0; k]; k];
    let mut kept: Vec<usize> = Vec::with_capacity(k);
    for (j, v) in vectors.iter().enumerate() {
        debug_assert_eq!(v.len(), dim);
        let scale = norm(v).max(f64::MIN_POSITIVE);
        let mut w = v.clone();
        for (qi_idx, qi) in q.iter().enumerate() {
            let c = dot(qi, &w);
            r[qi_idx][j] = c;
            for (wv, qv) in w.iter_mut().zip(qi) {
                *wv -= c * qv;
            }
        }
        let nw = norm(&w);
        if nw > 1e-12 * scale {
            r[q.len()][j] = nw;
            w.iter_mut().for_each(|x| *x /= nw);
            q.push(w);
            kept.push(j);
        }
    }
    let rank = q.len();
    let rhs: Vec<f64> = q.iter().map(|qi| dot(qi, target)).collect();
    let mut coef_kept = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for l in i + 1..rank {
            s -= r[i][kept[l]] * coef_kept[l];
        }
        coef_kept[i] = s / r[i][kept[i]];
    }
    let mut coef = vec![0.0; k];
    for (l, &j) in kept.iter().enumerate() {
        coef[j] = coef_kept[l];
    }
    let mut resid = target.to_vec();
    for (c, v) in coef.iter().zip(vectors) {
        for (rv, vv) in resid.iter_mut().zip(v) {
            *rv -= c * vv;
        }
    }
    (coef, norm(&resid))
}

/// Distance from the origin to the convex hull of `vectors`.
///
/// The vectors are positively independent exactly when no non-negative
/// nontrivial combination vanishes, i.e. when this distance is positive
/// (after normalizing each vector to unit length, which the caller may do).
/// The minimum is found by enumerating supports: for every subset the
/// affine minimum-norm point is computed from its KKT system and kept if
/// its weights are non-negative. Active sets here are small, so the
/// enumeration is cheap; sets larger than 16 are rejected.
pub fn convex_hull_distance(vectors: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let k = vectors.len();
    if k == 0 {
        return Ok((f64::INFINITY, Vec::new()));
    }
    if k > 16 {
        return Err(Error::Invalid("too many active gradients for support enumeration".into()));
    }
    let mut best = f64::INFINITY;
    let mut best_w = vec![0.0; k];
    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        // [G 1; 1^T 0] [w; nu] = [0; 1]
        let mut kkt = Mat::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = dot(&vectors[i], &vectors[j]);
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = vec![0.0; s + 1];
        rhs[s] = 1.0;
        let Ok(sol) = solve(&kkt, &rhs) else { continue };
        if sol[..s].iter().any(|w| *w < -1e-12) {
            continue;
        }
        let mut p = vec![0.0; vectors[0].len()];
        for (a, &i) in support.iter().enumerate() {
            for (pv, vv) in p.iter_mut().zip(&vectors[i]) {
                *pv += sol[a] * vv;
            }
        }
        let d = norm(&p);
        if d < best {
            best = d;
            best_w.iter_mut().for_each(|w| *w = 0.0);
            for (a, &i) in support.iter().enumerate() {
                best_w[i] = sol[a];
            }
        }
    }
    Ok((best, best_w))
}
