//! Dense linear-algebra helpers on top of `faer`.

use crate::error::{Error, Result};
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, Side};

pub fn to_complex(a: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn max_abs_c(a: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

pub fn matvec_c(a: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).fold(c64::new(0.0, 0.0), |s, j| s + a[(i, j)] * x[j]))
        .collect()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Unconjugated bilinear form `sum x_i y_i`.
pub fn bilinear(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).fold(c64::new(0.0, 0.0), |s, (a, b)| s + a * b)
}

/// Hermitian inner product `sum conj(x_i) y_i`.
pub fn hermitian(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).fold(c64::new(0.0, 0.0), |s, (a, b)| s + a.conj() * b)
}

pub fn norm_c(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn real_to_c(x: &[f64]) -> Vec<c64> {
    x.iter().map(|&v| c64::new(v, 0.0)).collect()
}

/// Ascending eigenvalues and eigenvectors of a real symmetric matrix.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = e.S().column_vector();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

/// Eigenpairs of a complex matrix, computed per block when the matrix
/// decouples over the given index sets. Eigenvectors are embedded in the
/// full space; the returned list is unsorted.
pub fn eigen_blocks(a: &Mat<c64>, blocks: &[Vec<usize>]) -> Result<(Vec<c64>, Vec<Vec<c64>>)> {
    let n = a.nrows();
    let scale = max_abs_c(a).max(f64::MIN_POSITIVE);
    let mut owner = vec![usize::MAX; n];
    for (b, idx) in blocks.iter().enumerate() {
        for &i in idx {
            owner[i] = b;
        }
    }
    let decoupled = owner.iter().all(|&o| o != usize::MAX)
        && (0..n).all(|i| (0..n).all(|j| owner[i] == owner[j] || a[(i, j)].norm() <= 1e-12 * scale));
    let full: Vec<Vec<usize>> = vec![(0..n).collect()];
    let blocks = if decoupled { blocks } else { &full[..] };
    let mut vals = Vec::with_capacity(n);
    let mut vecs = Vec::with_capacity(n);
    for idx in blocks {
        let m = idx.len();
        let sub = Mat::from_fn(m, m, |i, j| a[(idx[i], idx[j])]);
        let e = sub.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = e.S().column_vector();
        let u = e.U();
        for k in 0..m {
            vals.push(s[k]);
            let mut v = vec![c64::new(0.0, 0.0); n];
            for i in 0..m {
                v[idx[i]] = u[(i, k)];
            }
            vecs.push(v);
        }
    }
    Ok((vals, vecs))
}

/// Solver for `L x = P1 y` on the orthogonal complement of the null space,
/// via the Cholesky factor of the positive definite `P0 - L`.
pub struct DeflatedSolver {
    llt: faer::linalg::solvers::Llt<f64>,
    p1: Mat<f64>,
}

impl DeflatedSolver {
    pub fn new(l: &Mat<f64>, p0: &Mat<f64>, p1: &Mat<f64>) -> Result<Self> {
        let a = Mat::from_fn(l.nrows(), l.ncols(), |i, j| p0[(i, j)] - l[(i, j)]);
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::DeflatedSolve(format!("P0 - L is not positive definite: {e:?}")))?;
        Ok(Self { llt, p1: p1.clone() })
    }

    /// Returns `L^{-1} P1 y`, an element of the complement.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let rhs = matvec(&self.p1, y);
        let b = Mat::from_fn(rhs.len(), 1, |i, _| -rhs[i]);
        let x = self.llt.solve(&b);
        let x: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
        matvec(&self.p1, &x)
    }

    pub fn solve_c(&self, y: &[c64]) -> Vec<c64> {
        let re: Vec<f64> = y.iter().map(|z| z.re).collect();
        let im: Vec<f64> = y.iter().map(|z| z.im).collect();
        let (xr, xi) = (self.solve(&re), self.solve(&im));
        xr.iter().zip(&xi).map(|(&a, &b)| c64::new(a, b)).collect()
    }
}

/// LU-factored complex matrix.
pub struct ComplexLu {
    lu: faer::linalg::solvers::PartialPivLu<c64>,
    n: usize,
    rcond: f64,
}

impl ComplexLu {
    pub fn new(a: &Mat<c64>) -> Self {
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..a.nrows() {
            let d = u[(i, i)].norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
        Self { lu, n: a.nrows(), rcond }
    }

    /// Ratio of smallest to largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, y: &[c64]) -> Vec<c64> {
        let b = Mat::from_fn(self.n, 1, |i, _| y[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn inverse(&self) -> Mat<c64> {
        self.lu.inverse()
    }
}

fn one_norm(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with the degree 13 Padé approximant.
pub fn expm_pade13(a: &Mat<c64>) -> Mat<c64> {
    const B: [f64; 14] = [
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
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = c64::new(0.5f64.powi(s), 0.0);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let id = Mat::<c64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c: [f64; 4], x6: &Mat<c64>| {
        Mat::from_fn(n, n, |i, j| {
            (x6[(i, j)] * c[0] + a4[(i, j)] * c[1] + a2[(i, j)] * c[2]) + id[(i, j)] * c[3]
        })
    };
    let u_inner = &a6 * &lin([B[13], B[11], B[9], 0.0], &a6);
    let u_tail = lin([B[7], B[5], B[3], B[1]], &a6);
    let u = &a * Mat::from_fn(n, n, |i, j| u_inner[(i, j)] + u_tail[(i, j)]);
    let v_inner = &a6 * &lin([B[12], B[10], B[8], 0.0], &a6);
    let v_tail = lin([B[6], B[4], B[2], B[0]], &a6);
    let v = Mat::from_fn(n, n, |i, j| v_inner[(i, j)] + v_tail[(i, j)]);
    let p = Mat::from_fn(n, n, |i, j| v[(i, j)] + u[(i, j)]);
    let q = Mat::from_fn(n, n, |i, j| v[(i, j)] - u[(i, j)]);
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pade_matches_diagonal_exponential() {
        let n = 4;
        let d = [c64::new(-3.0, 2.0), c64::new(0.5, -1.0), c64::new(-40.0, 7.0), c64::new(0.0, 0.0)];
        let a = Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) });
        let e = expm_pade13(&a);
        for i in 0..n {
            assert!((e[(i, i)] - d[i].exp()).norm() < 1e-12 * d[i].exp().norm().max(1e-300));
        }
    }

    #[test]
    fn pade_matches_nilpotent_series() {
        // exp of a Jordan block [[x, 1], [0, x]] = e^x [[1, 1], [0, 1]]
        let x = c64::new(-2.5, 0.3);
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => x,
            (0, 1) => c64::new(1.0, 0.0),
            _ => c64::new(0.0, 0.0),
        });
        let e = expm_pade13(&a);
        assert!((e[(0, 1)] - x.exp()).norm() < 1e-13);
        assert!((e[(0, 0)] - x.exp()).norm() < 1e-13);
        assert!(e[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn block_eigen_reassembles_matrix() {
        let a = Mat::from_fn(4, 4, |i, j| {
            if (i < 2) == (j < 2) { c64::new((i + 2 * j) as f64, (i as f64) - (j as f64)) } else { c64::new(0.0, 0.0) }
        });
        let (vals, vecs) = eigen_blocks(&a, &[vec![0, 1], vec![2, 3]]).unwrap();
        for (l, v) in vals.iter().zip(&vecs) {
            let av = matvec_c(&a, v);
            let res: f64 = av.iter().zip(v).map(|(x, y)| (x - l * y).norm()).sum();
            assert!(res < 1e-12);
        }
    }
}
