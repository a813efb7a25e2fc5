//! Sparse/dense linear algebra support: CSR matrices assembled from
//! triplets, Cholesky solver wrappers, dense symmetric eigensolves,
//! tridiagonal solves and finite-difference weights.

use crate::{Error, Result};
use faer::linalg::triangular_solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

/// Compressed sparse row matrix with f64 entries.
///
/// Built from (row, col, value) triplets; duplicate entries are summed.
/// Row-major, columns sorted within each row, deterministic layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                return self.values[k];
            }
        }
        0.0
    }

    /// Quadratic form x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(ay.iter()).map(|(a, b)| a * b).sum()
    }

    /// Square submatrix keeping the given (sorted, unique) indices on both sides.
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n_cols.max(self.n_rows)];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            for k in self.row_ptr[old_r]..self.row_ptr[old_r + 1] {
                let c = map[self.col_idx[k]];
                if c != usize::MAX {
                    trip.push((new_r, c, self.values[k]));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), trip)
    }

    /// Rectangular restriction: keep `rows` on rows, all columns.
    pub fn restrict_rows(&self, rows: &[usize]) -> CsrMatrix {
        let mut trip = Vec::new();
        for (new_r, &old_r) in rows.iter().enumerate() {
            for k in self.row_ptr[old_r]..self.row_ptr[old_r + 1] {
                trip.push((new_r, self.col_idx[k], self.values[k]));
            }
        }
        CsrMatrix::from_triplets(rows.len(), self.n_cols, trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max_ij |A_ij - A_ji| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                m = m.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        m
    }

    /// Coordinate text lines "row col value", row-major, ties by column.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{} {} {}\n", self.n_rows, self.n_cols, self.nnz()));
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s.push_str(&format!("{} {} {:.16e}\n", r, self.col_idx[k], self.values[k]));
            }
        }
        s
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<Triplet<usize, usize, f64>> = (0..self.n_rows)
            .flat_map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(move |k| Triplet::new(r, self.col_idx[k], self.values[k]))
            })
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trip)
            .map_err(|e| Error::Numerical(format!("sparse build failed: {e:?}")))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
///
/// Solves are followed by iterative refinement against the stored matrix:
/// the factorization alone can lose accuracy on larger systems, and two or
/// three refinement sweeps restore it to near machine precision.
pub struct SparseLlt {
    n: usize,
    a: CsrMatrix,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseLlt {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::InvalidArgument("cholesky of non-square matrix".into()));
        }
        let f = a.to_faer()?;
        let llt = f
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Numerical(format!("sparse cholesky failed (matrix not SPD?): {e:?}")))?;
        Ok(SparseLlt { n: a.n_rows, a: a.clone(), llt })
    }

    fn apply_factor(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::zeros(self.n, 1);
        for i in 0..self.n {
            m[(i, 0)] = rhs[i];
        }
        use faer::linalg::solvers::SolveCore;
        self.llt.solve_in_place_with_conj(faer::Conj::No, m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Factor-preconditioned conjugate gradients. With an accurate factor
    /// this exits after one iteration; when the factorization loses digits
    /// on large systems the Krylov correction restores full accuracy.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let bn = norm2(rhs).max(1e-300);
        let mut x = self.apply_factor(rhs);
        let ax = self.a.mul_vec(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if norm2(&r) <= 1e-14 * bn {
            return x;
        }
        let mut z = self.apply_factor(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..60 {
            let ap = self.a.mul_vec(&p);
            let pap = dot(&p, &ap);
            if pap.abs() < 1e-300 {
                break;
            }
            let alpha = rz / pap;
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            if norm2(&r) <= 1e-14 * bn {
                break;
            }
            z = self.apply_factor(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..self.n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

/// Dense symmetric eigendecomposition. Returns eigenvalues ascending with
/// matching eigenvectors as columns.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = faer::linalg::solvers::SelfAdjointEigen::new(a.as_ref(), Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let n = a.nrows();
    let mut vals: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut vecs = Mat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, new)] = eig.U()[(r, old)];
        }
    }
    Ok((vals, vecs))
}

/// Generalized symmetric eigenvalues of (A, B) with B SPD, ascending.
/// Solved densely via B = L L^T and the congruent standard problem.
pub fn generalized_sym_eigenvalues(a: &CsrMatrix, b: &CsrMatrix) -> Result<Vec<f64>> {
    let n = a.n_rows;
    let bd = b.to_dense();
    let llt = bd
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("gram matrix not SPD".into()))?;
    let l = llt.L().to_owned();
    // C = L^-1 A L^-T
    let mut c = a.to_dense();
    triangular_solve::solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    triangular_solve::solve_lower_triangular_in_place(l.as_ref(), ct.as_mut(), Par::Seq);
    // symmetrize against roundoff
    let mut s = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = 0.5 * (ct[(i, j)] + ct[(j, i)]);
        }
    }
    let (vals, _) = sym_eigen(&s)?;
    Ok(vals)
}

/// Smallest generalized eigenpairs of (K, M), both symmetric, M SPD, K
/// positive semidefinite. Shifted block inverse iteration: factor K + M,
/// iterate X <- (K+M)^-1 M X with M-orthonormalization.
pub fn smallest_gen_eigenpairs(
    k: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    use rand::{Rng, SeedableRng};
    let n = k.n_rows;
    let shifted = add_scaled(k, m, 1.0);
    let f = SparseLlt::new(&shifted)?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for _ in 0..iters {
        for x in xs.iter_mut() {
            let mx = m.mul_vec(x);
            *x = f.solve(&mx);
        }
        m_orthonormalize(&mut xs, m);
    }
    let mut out: Vec<(f64, Vec<f64>)> = xs
        .into_iter()
        .map(|x| {
            let num = k.bilinear(&x, &x);
            let den = m.bilinear(&x, &x);
            (num / den, x)
        })
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

fn m_orthonormalize(xs: &mut [Vec<f64>], m: &CsrMatrix) {
    for i in 0..xs.len() {
        for j in 0..i {
            let proj = m.bilinear(&xs[j], &xs[i]);
            let (a, b) = xs.split_at_mut(i);
            for (t, s) in b[0].iter_mut().zip(a[j].iter()) {
                *t -= proj * s;
            }
        }
        let nrm = m.bilinear(&xs[i], &xs[i]).sqrt();
        for t in xs[i].iter_mut() {
            *t /= nrm;
        }
    }
}

/// A + c * B for matching sparsity unions.
pub fn add_scaled(a: &CsrMatrix, b: &CsrMatrix, c: f64) -> CsrMatrix {
    assert_eq!(a.n_rows, b.n_rows);
    assert_eq!(a.n_cols, b.n_cols);
    let mut trip = Vec::with_capacity(a.nnz() + b.nnz());
    for r in 0..a.n_rows {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            trip.push((r, a.col_idx[k], a.values[k]));
        }
        for k in b.row_ptr[r]..b.row_ptr[r + 1] {
            trip.push((r, b.col_idx[k], c * b.values[k]));
        }
    }
    CsrMatrix::from_triplets(a.n_rows, a.n_cols, trip)
}

/// Exact discrete dual norm sqrt(f^T G^-1 f) via dense Cholesky.
/// Fails if the Gram matrix is not SPD.
pub fn riesz_dual_norm_dense(f: &[f64], gram: &Mat<f64>) -> Result<f64> {
    let n = f.len();
    assert_eq!(gram.nrows(), n);
    let llt = gram
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("gram matrix not SPD".into()))?;
    let mut rhs = Mat::zeros(n, 1);
    for i in 0..n {
        rhs[(i, 0)] = f[i];
    }
    use faer::linalg::solvers::Solve;
    let x = llt.solve(rhs.as_ref());
    let mut acc = 0.0;
    for i in 0..n {
        acc += f[i] * x[(i, 0)];
    }
    // guard tiny negative from roundoff
    Ok(acc.max(0.0).sqrt())
}

/// Riesz representer G^-1 f (dense).
pub fn riesz_representer_dense(f: &[f64], gram: &Mat<f64>) -> Result<Vec<f64>> {
    let n = f.len();
    let llt = gram
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("gram matrix not SPD".into()))?;
    let mut rhs = Mat::zeros(n, 1);
    for i in 0..n {
        rhs[(i, 0)] = f[i];
    }
    use faer::linalg::solvers::Solve;
    let x = llt.solve(rhs.as_ref());
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Solve a symmetric positive definite tridiagonal system in place.
/// `diag` has length n, `off` length n-1 (sub = super).
pub fn tridiag_solve(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n);
    assert_eq!(rhs.len(), n);
    // LDL^T without pivoting
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = diag[0];
    for i in 1..n {
        l[i - 1] = off[i - 1] / d[i - 1];
        d[i] = diag[i] - l[i - 1] * off[i - 1];
    }
    for i in 1..n {
        rhs[i] -= l[i - 1] * rhs[i - 1];
    }
    for i in 0..n {
        rhs[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= l[i] * rhs[i + 1];
    }
}

/// Finite-difference weights for the m-th derivative at `x0` on the given
/// nodes (Fornberg's algorithm).
pub fn fornberg_weights(nodes: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > m, "need at least m+1 nodes");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * ((k as f64) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - (k as f64) * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Least-squares slope of y against x.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (t, s) in y.iter_mut().zip(x) {
        *t += alpha * s;
    }
}
