//! Sparse kernels and a banded Cholesky factorization.

use std::io::Write;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};

pub type SparseMatrix = CsMat<f64>;

/// `y = A x` for a CSR matrix.
pub fn spmv_into(a: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    debug_assert!(a.is_csr());
    debug_assert_eq!(a.cols(), x.len());
    debug_assert_eq!(a.rows(), y.len());
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let indices = a.indices();
    let data = a.data();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in indptr[i]..indptr[i + 1] {
            acc += data[k] * x[indices[k]];
        }
        *yi = acc;
    }
}

pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    spmv_into(a, x, &mut y);
    y
}

/// `y = A^T x` for a CSR matrix, without forming the transpose.
pub fn spmv_transpose(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.rows(), x.len());
    let mut y = vec![0.0; a.cols()];
    for (row, xi) in a.outer_iterator().zip(x) {
        for (j, v) in row.iter() {
            y[j] += v * xi;
        }
    }
    y
}

/// `x^T A x`.
pub fn quad_form(a: &SparseMatrix, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (row, xi) in a.outer_iterator().zip(x) {
        let mut r = 0.0;
        for (j, v) in row.iter() {
            r += v * x[j];
        }
        acc += xi * r;
    }
    acc
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `A + β B` for matrices sharing one sparsity pattern, entry by entry.
pub fn add_scaled_same_pattern(a: &SparseMatrix, b: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
    if a.shape() != b.shape() || a.indptr() != b.indptr() || a.indices() != b.indices() {
        return Err(Error::Config("matrices do not share a sparsity pattern".into()));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + beta * y).collect();
    Ok(CsMat::new(
        a.shape(),
        a.indptr().raw_storage().to_vec(),
        a.indices().to_vec(),
        data,
    ))
}

/// Diagonal of a square CSR matrix.
pub fn diagonal(a: &SparseMatrix) -> Vec<f64> {
    a.outer_iterator()
        .enumerate()
        .map(|(i, row)| row.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// `‖b - A x‖₂ / ‖b‖₂`, or the absolute residual when `b = 0`.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = spmv(a, x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

/// Sparse product `P^T A P`, formed densely per column block. Used for
/// verification only, so simplicity beats speed.
pub fn galerkin_product(a: &SparseMatrix, p: &SparseMatrix) -> SparseMatrix {
    let pt = p.transpose_view().to_csr();
    let ap = a * p;
    let mut out: SparseMatrix = &pt * &ap;
    out = out.to_csr();
    out
}

/// Builds a CSR matrix from triplets, rejecting out-of-range indices.
pub fn csr_from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
    let mut tri = TriMat::with_capacity((rows, cols), triplets.len());
    for &(i, j, v) in triplets {
        tri.add_triplet(i, j, v);
    }
    tri.to_csr()
}

/// Writes a matrix in coordinate text form: a `rows cols nnz` header line
/// followed by one `i j value` line per stored entry (zero-based indices).
pub fn write_coordinate<W: Write>(a: &SparseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {}", a.rows(), a.cols(), a.nnz())?;
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, v) in row.iter() {
            writeln!(out, "{i} {j} {v:e}")?;
        }
    }
    Ok(())
}

/// Cholesky factor `A = L L^T` of a symmetric positive-definite band matrix.
///
/// Row `i` of `L` is stored in `bandwidth + 1` slots covering columns
/// `i - bandwidth ..= i`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    factor: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::shape(n, a.cols()));
        }
        let mut bandwidth = 0;
        for (i, row) in a.outer_iterator().enumerate() {
            for (j, _) in row.iter() {
                bandwidth = bandwidth.max(i.abs_diff(j));
            }
        }
        let w = bandwidth + 1;
        let mut f = vec![0.0; n * w];
        // lower triangle into band storage
        for (i, row) in a.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                if j <= i {
                    f[i * w + (j + bandwidth - i)] = v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bandwidth);
            for j in lo..=i {
                let jlo = j.saturating_sub(bandwidth).max(lo);
                let mut s = f[i * w + (j + bandwidth - i)];
                for k in jlo..j {
                    s -= f[i * w + (k + bandwidth - i)] * f[j * w + (k + bandwidth - j)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numeric(format!(
                            "matrix not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    f[i * w + bandwidth] = s.sqrt();
                } else {
                    f[i * w + (j + bandwidth - i)] = s / f[j * w + bandwidth];
                }
            }
        }
        Ok(Self { n, bandwidth, factor: f })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::shape(self.n, rhs.len()));
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bandwidth);
        let w = bw + 1;
        let f = &self.factor;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= f[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / f[i * w + bw];
        }
        for i in (0..n).rev() {
            let s = x[i] / f[i * w + bw];
            x[i] = s;
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                x[k] -= f[i * w + (k + bw - i)] * s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        csr_from_triplets(n, n, &t)
    }

    #[test]
    fn band_cholesky_solves_tridiagonal() {
        let a = tridiag(7);
        let chol = BandCholesky::factor(&a).unwrap();
        assert_eq!(chol.bandwidth(), 1);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let x = chol.solve(&b).unwrap();
        assert!(relative_residual(&a, &x, &b) < 1e-15);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = csr_from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(BandCholesky::factor(&a), Err(Error::Numeric(_))));
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let a = csr_from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let y = spmv_transpose(&a, &[1.0, -1.0]);
        assert_eq!(y, vec![1.0, -3.0, 2.0]);
    }

    #[test]
    fn coordinate_export_has_header() {
        let a = tridiag(3);
        let mut buf = Vec::new();
        write_coordinate(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("3 3 7"));
        assert_eq!(lines.count(), 7);
    }
}
