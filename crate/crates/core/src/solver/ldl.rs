//! Sparse LDLᵀ factorisation of symmetric quasi-definite matrices.
//!
//! Up-looking factorisation in the style of QDLDL: the elimination tree and
//! column counts are computed once per sparsity pattern, the numeric factor
//! is recomputed every interior-point iteration. Pivots whose sign disagrees
//! with the expected inertia are replaced by a small signed value.

use super::SolverError;

const NONE: usize = usize::MAX;

/// Upper-triangular CSC pattern plus values of a symmetric matrix that has
/// already been permuted into elimination order.
#[derive(Debug, Clone)]
pub(crate) struct UpperCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LdlFactor {
    n: usize,
    etree: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    /// Expected pivot sign per (permuted) column.
    signs: Vec<f64>,
    dynamic_eps: f64,
    dynamic_delta: f64,
    /// Number of pivots bumped by dynamic regularisation in the last factorisation.
    pub bumped: usize,
    // workspaces
    y_vals: Vec<f64>,
    y_idx: Vec<usize>,
    y_mark: Vec<bool>,
    elim_buf: Vec<usize>,
    next_in_col: Vec<usize>,
}

impl LdlFactor {
    /// Symbolic analysis: elimination tree and storage for `L`.
    pub fn analyse(a: &UpperCsc, signs: Vec<f64>) -> Result<Self, SolverError> {
        let n = a.n;
        let mut work = vec![NONE; n];
        let mut l_nz = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            let (start, end) = (a.col_ptr[j], a.col_ptr[j + 1]);
            if start == end {
                return Err(SolverError::Numerical(format!("empty KKT column {j}")));
            }
            for p in start..end {
                let mut i = a.row_idx[p];
                if i > j {
                    return Err(SolverError::Numerical(
                        "KKT pattern is not upper triangular".into(),
                    ));
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    l_nz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_ptr[i + 1] = l_ptr[i] + l_nz[i];
        }
        let nnz = l_ptr[n];
        Ok(Self {
            n,
            etree,
            l_ptr,
            l_idx: vec![0; nnz],
            l_val: vec![0.0; nnz],
            d: vec![0.0; n],
            d_inv: vec![0.0; n],
            signs,
            dynamic_eps: 1e-13,
            dynamic_delta: 1e-7,
            bumped: 0,
            y_vals: vec![0.0; n],
            y_idx: vec![0; n],
            y_mark: vec![false; n],
            elim_buf: vec![0; n],
            next_in_col: vec![0; n],
        })
    }

    fn regularise_pivot(&mut self, k: usize) {
        let sign = self.signs[k];
        if !(sign * self.d[k] > self.dynamic_eps) {
            self.d[k] = sign * self.dynamic_delta;
            self.bumped += 1;
        }
    }

    /// Numeric factorisation of a matrix with the analysed pattern.
    pub fn factor(&mut self, a: &UpperCsc) -> Result<(), SolverError> {
        let n = self.n;
        self.bumped = 0;
        for i in 0..n {
            self.y_mark[i] = false;
            self.y_vals[i] = 0.0;
            self.d[i] = 0.0;
            self.next_in_col[i] = self.l_ptr[i];
        }
        for k in 0..n {
            let mut nnz_y = 0;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let b = a.row_idx[p];
                if b == k {
                    self.d[k] = a.values[p];
                    continue;
                }
                self.y_vals[b] = a.values[p];
                if !self.y_mark[b] {
                    self.y_mark[b] = true;
                    self.elim_buf[0] = b;
                    let mut n_e = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if self.y_mark[next] {
                            break;
                        }
                        self.y_mark[next] = true;
                        self.elim_buf[n_e] = next;
                        n_e += 1;
                        next = self.etree[next];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        self.y_idx[nnz_y] = self.elim_buf[n_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = self.y_idx[i];
                let tmp = self.next_in_col[c];
                let yc = self.y_vals[c];
                for j in self.l_ptr[c]..tmp {
                    self.y_vals[self.l_idx[j]] -= self.l_val[j] * yc;
                }
                self.l_idx[tmp] = k;
                let lv = yc * self.d_inv[c];
                if !lv.is_finite() {
                    return Err(SolverError::Numerical(format!(
                        "non-finite factor entry in row {k}"
                    )));
                }
                self.l_val[tmp] = lv;
                self.d[k] -= yc * lv;
                self.next_in_col[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_mark[c] = false;
            }
            self.regularise_pivot(k);
            if !self.d[k].is_finite() {
                return Err(SolverError::Numerical(format!(
                    "non-finite pivot at column {k}"
                )));
            }
            self.d_inv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                    x[self.l_idx[p]] -= self.l_val[p] * xi;
                }
            }
        }
        for i in 0..self.n {
            x[i] *= self.d_inv[i];
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                acc -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[i] = acc;
        }
    }
}

/// Fill-reducing ordering of a symmetric pattern given as an upper or full
/// CSC structure. Returns `perm` with `perm[k]` the original index placed
/// at position `k`.
pub(crate) fn fill_reducing_order(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    match amd::order(n, col_ptr, row_idx, &amd::Control::default()) {
        Ok((p, _, _)) => p,
        Err(_) => (0..n).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense symmetric matrix to upper CSC.
    fn upper(a: &[Vec<f64>]) -> UpperCsc {
        let n = a.len();
        let mut col_ptr = vec![0];
        let mut row_idx = vec![];
        let mut values = vec![];
        for j in 0..n {
            for i in 0..=j {
                if a[i][j] != 0.0 || i == j {
                    row_idx.push(i);
                    values.push(a[i][j]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        UpperCsc {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    #[test]
    fn quasi_definite_solve_matches_dense() {
        // [[4, 1, 2], [1, 3, 0], [2, 0, -5]] : two positive pivots, one negative
        let a = vec![
            vec![4.0, 1.0, 2.0],
            vec![1.0, 3.0, 0.0],
            vec![2.0, 0.0, -5.0],
        ];
        let m = upper(&a);
        let mut f = LdlFactor::analyse(&m, vec![1.0, 1.0, -1.0]).unwrap();
        f.factor(&m).unwrap();
        assert_eq!(f.bumped, 0);
        let b = [1.0, -2.0, 3.0];
        let mut x = b.to_vec();
        f.solve_in_place(&mut x);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_bumped() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = upper(&a);
        let mut f = LdlFactor::analyse(&m, vec![1.0, -1.0]).unwrap();
        f.factor(&m).unwrap();
        assert!(f.bumped >= 1);
    }

    #[test]
    fn ordering_is_a_permutation() {
        // arrow matrix: ordering should move the hub last
        let n = 6;
        let mut col_ptr = vec![0];
        let mut row_idx = vec![];
        for j in 0..n {
            if j == 0 {
                row_idx.push(0);
            } else {
                row_idx.push(0);
                row_idx.push(j);
            }
            col_ptr.push(row_idx.len());
        }
        let p = fill_reducing_order(n, &col_ptr, &row_idx);
        let mut sorted = p.clone();
        sorted.sort();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        assert_eq!(p[n - 1], 0);
    }
}
