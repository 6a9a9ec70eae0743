//! Sparse row storage and direct solvers.
//!
//! Matrices are assembled as compressed rows. Solves go through a banded LU
//! factorization with partial pivoting, optionally after a symmetric
//! permutation that shrinks the bandwidth (the coupled systems interleave
//! their two components so 1D Jacobians stay pentadiagonal).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("non-finite entry encountered in column {column}")]
    NonFinite { column: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Square matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            rows[i].push((j, v));
        }
        Self::from_rows(rows)
    }

    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                assert!(j < n, "column {j} outside {n}x{n}");
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// Column indices of stored entries in row `i`.
    pub fn row_pattern(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Mutable access to a stored entry. Panics if `(i, j)` is not in the pattern.
    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        let k = self.cols[range.clone()]
            .binary_search(&j)
            .unwrap_or_else(|_| panic!("entry ({i}, {j}) not in sparsity pattern"));
        &mut self.vals[range.start + k]
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Lower and upper bandwidth under the ordering `perm` (new -> old).
    pub fn bandwidths(&self, perm: Option<&[usize]>) -> (usize, usize) {
        let inverse = perm.map(invert_permutation);
        let pos = |old: usize| inverse.as_ref().map_or(old, |inv| inv[old]);
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            let pi = pos(i);
            for &j in self.row_pattern(i) {
                let pj = pos(j);
                if pj < pi {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        (kl, ku)
    }

    /// Banded LU factorization of `P^T A P` where `perm[new] = old`.
    pub fn factor_banded(&self, perm: Option<&[usize]>) -> Result<BandedLu, LinalgError> {
        if let Some(p) = perm {
            if p.len() != self.n {
                return Err(LinalgError::Dimension {
                    expected: self.n,
                    got: p.len(),
                });
            }
        }
        let (kl, ku) = self.bandwidths(perm);
        let mut band = Band::zeros(self.n, kl, ku);
        let inverse = perm.map(invert_permutation);
        let pos = |old: usize| inverse.as_ref().map_or(old, |inv| inv[old]);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                *band.at_mut(pos(i), pos(j)) += v;
            }
        }
        band.factor()?;
        Ok(BandedLu {
            band,
            perm: perm.map(|p| p.to_vec()),
        })
    }

    pub fn solve(&self, rhs: &[f64], perm: Option<&[usize]>) -> Result<Vec<f64>, LinalgError> {
        self.factor_banded(perm)?.solve(rhs)
    }
}

fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Band storage with room for the fill-in created by row interchanges.
#[derive(Debug, Clone)]
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl Band {
    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        // Row i stores columns i - kl ..= i + ku + kl.
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: Vec::new(),
        }
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.offset(i, j);
        &mut self.data[k]
    }

    fn factor(&mut self) -> Result<(), LinalgError> {
        let n = self.n;
        let reach = self.kl + self.ku;
        self.pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !best.is_finite() {
                return Err(LinalgError::NonFinite { column: k });
            }
            if best == 0.0 {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                for j in k..=last_col {
                    let a = self.offset(k, j);
                    let b = self.offset(p, j);
                    self.data.swap(a, b);
                }
            }
            self.pivots.push(p);
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                *self.at_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let ukj = self.at(k, j);
                        *self.at_mut(i, j) -= l * ukj;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let last_row = (k + self.kl).min(n - 1);
            let bk = b[k];
            for i in k + 1..=last_row {
                b[i] -= self.at(i, k) * bk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
    }
}

/// Factorized matrix ready for repeated solves.
#[derive(Debug, Clone)]
pub struct BandedLu {
    band: Band,
    perm: Option<Vec<usize>>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.band.kl, self.band.ku)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.band.n;
        if rhs.len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut b: Vec<f64> = match &self.perm {
            Some(p) => p.iter().map(|&old| rhs[old]).collect(),
            None => rhs.to_vec(),
        };
        self.band.solve_in_place(&mut b);
        Ok(match &self.perm {
            Some(p) => {
                let mut x = vec![0.0; n];
                for (new, &old) in p.iter().enumerate() {
                    x[old] = b[new];
                }
                x
            }
            None => b,
        })
    }
}

/// Gauss-Jordan inverse with partial pivoting. Intended for small
/// diagnostic matrices.
pub fn dense_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = a.len();
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: row.len(),
        });
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[p][col] == 0.0 {
            return Err(LinalgError::Singular { column: col });
        }
        m.swap(col, p);
        inv.swap(col, p);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let factor = m[i][col];
                if factor != 0.0 {
                    for j in 0..n {
                        m[i][j] -= factor * m[col][j];
                        inv[i][j] -= factor * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, lo));
            }
            if i + 1 < n {
                t.push((i, i + 1, up));
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn tridiagonal_solve() {
        let a = tridiag(6, -1.0, 4.0, -1.0);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b = a.mul_vec(&x);
        let lu = a.factor_banded(None).unwrap();
        assert_eq!(lu.bandwidths(), (1, 1));
        let got = lu.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-13);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap.
        let a = SparseMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let x = a.solve(&[3.0, 5.0], None).unwrap();
        assert_eq!(x, vec![5.0, 3.0]);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 1, 1.0)]);
        assert!(matches!(
            a.factor_banded(None),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn permutation_reduces_bandwidth() {
        // Two coupled chains: entries (i, n+i) are far apart in block order.
        let n = 5;
        let mut t = Vec::new();
        for b in 0..2 {
            for i in 0..n {
                t.push((b * n + i, b * n + i, 3.0));
                if i + 1 < n {
                    t.push((b * n + i, b * n + i + 1, -1.0));
                    t.push((b * n + i + 1, b * n + i, -1.0));
                }
            }
            t.push((b * n, (1 - b) * n, -0.5));
        }
        let a = SparseMatrix::from_triplets(2 * n, &t);
        assert_eq!(a.bandwidths(None), (n, n));
        let interleave: Vec<usize> = (0..2 * n).map(|k| (k % 2) * n + k / 2).collect();
        assert_eq!(a.bandwidths(Some(&interleave)), (2, 2));
        let x: Vec<f64> = (0..2 * n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let got = a.solve(&b, Some(&interleave)).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_inverse_identity() {
        let a = tridiag(4, -1.0, 2.5, -1.0).to_dense();
        let inv = dense_inverse(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
        assert!(dense_inverse(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }

    proptest! {
        #[test]
        fn banded_solve_matches_dense_inverse(
            n in 2usize..12,
            entries in prop::collection::vec(-1.0f64..1.0, 3 * 12),
            rhs in prop::collection::vec(-5.0f64..5.0, 12),
        ) {
            // Random pentadiagonal matrix, made nonsingular by a dominant diagonal.
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 4.0 + entries[i]));
                if i + 1 < n { t.push((i, i + 1, entries[12 + i])); }
                if i + 2 < n { t.push((i + 2, i, entries[24 + i])); }
            }
            let a = SparseMatrix::from_triplets(n, &t);
            let x = a.solve(&rhs[..n], None).unwrap();
            let inv = dense_inverse(&a.to_dense()).unwrap();
            for i in 0..n {
                let e: f64 = (0..n).map(|j| inv[i][j] * rhs[j]).sum();
                prop_assert!((x[i] - e).abs() < 1e-10);
            }
        }
    }
}
