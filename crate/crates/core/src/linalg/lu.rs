//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Columns are processed in nested-dissection order; each column is obtained by a
//! sparse triangular solve against the columns already factored, whose nonzero
//! pattern is found by depth-first search through the graph of `L`. Pivots prefer
//! the diagonal of the symmetrically permuted matrix when it is within a factor
//! [`DIAGONAL_PREFERENCE`] of the column maximum.

use super::ordering::nested_dissection;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

const DIAGONAL_PREFERENCE: f64 = 1e-6;
/// Pivots below this multiple of `max |a_ij|` flag the matrix as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// `P A(q, q) = L U`, immutable after construction.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    /// Column `k` of the permuted matrix is column `q[k]` of `A` (same for rows).
    q: Vec<usize>,
    /// Permuted row `i` became pivot row `pinv[i]`.
    pinv: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
}

/// Factorizes a square sparse matrix.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let n = a.nrows();
    let q = nested_dissection(a);
    let mut qinv = vec![0usize; n];
    for (k, &c) in q.iter().enumerate() {
        qinv[c] = k;
    }
    // Columns of A are rows of A^T.
    let at = a.transpose();
    let threshold = SINGULAR_PIVOT_RATIO * a.max_abs();

    const NONE: usize = usize::MAX;
    let mut pinv = vec![NONE; n];
    let mut l_ptr = Vec::with_capacity(n + 1);
    let mut l_idx: Vec<usize> = Vec::with_capacity(4 * a.nnz());
    let mut l_val: Vec<f64> = Vec::with_capacity(4 * a.nnz());
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_idx: Vec<usize> = Vec::with_capacity(4 * a.nnz());
    let mut u_val: Vec<f64> = Vec::with_capacity(4 * a.nnz());
    l_ptr.push(0);
    u_ptr.push(0);

    let mut x = vec![0.0; n];
    let mut mark = vec![NONE; n];
    let mut xi = vec![0usize; n];
    let mut stack = vec![0usize; n];
    let mut child = vec![0usize; n];

    for k in 0..n {
        let (cols, vals) = at.row(q[k]);
        // Pattern of the solution: reach of the column's rows in the graph of L.
        let mut top = n;
        for &r in cols {
            let start = qinv[r];
            if mark[start] == k {
                continue;
            }
            // Iterative DFS.
            let mut head = 0usize;
            stack[0] = start;
            mark[start] = k;
            child[start] = match pinv[start] {
                NONE => 0,
                j => l_ptr[j],
            };
            while head != usize::MAX {
                let v = stack[head];
                let jv = pinv[v];
                let end = if jv == NONE { 0 } else { l_ptr[jv + 1] };
                let mut pushed = false;
                if jv != NONE {
                    while child[v] < end {
                        let w = l_idx[child[v]];
                        child[v] += 1;
                        if mark[w] != k {
                            mark[w] = k;
                            child[w] = match pinv[w] {
                                NONE => 0,
                                j => l_ptr[j],
                            };
                            head += 1;
                            stack[head] = w;
                            pushed = true;
                            break;
                        }
                    }
                }
                if !pushed {
                    top -= 1;
                    xi[top] = v;
                    head = head.wrapping_sub(1);
                }
            }
        }
        for (&r, &v) in cols.iter().zip(vals) {
            x[qinv[r]] = v;
        }
        // Numeric triangular solve in topological order.
        for p in top..n {
            let j = xi[p];
            let jj = pinv[j];
            if jj == NONE {
                continue;
            }
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for t in l_ptr[jj]..l_ptr[jj + 1] {
                x[l_idx[t]] -= l_val[t] * xj;
            }
        }
        // Split into U entries and pivot candidates.
        let mut best = NONE;
        let mut best_abs = -1.0f64;
        for p in top..n {
            let i = xi[p];
            if pinv[i] == NONE {
                let v = x[i].abs();
                if v > best_abs {
                    best_abs = v;
                    best = i;
                }
            } else {
                u_idx.push(pinv[i]);
                u_val.push(x[i]);
            }
        }
        if best == NONE || !(best_abs > threshold) {
            return Err(Error::SingularMatrix { column: q[k] });
        }
        if pinv[k] == NONE && mark[k] == k && x[k].abs() >= DIAGONAL_PREFERENCE * best_abs {
            best = k;
        }
        let pivot = x[best];
        u_idx.push(k);
        u_val.push(pivot);
        u_ptr.push(u_idx.len());
        pinv[best] = k;
        for p in top..n {
            let i = xi[p];
            if pinv[i] == NONE {
                l_idx.push(i);
                l_val.push(x[i] / pivot);
            }
            x[i] = 0.0;
        }
        l_ptr.push(l_idx.len());
    }
    for r in l_idx.iter_mut() {
        *r = pinv[*r];
    }
    Ok(Factorization {
        n,
        q,
        pinv,
        l_ptr,
        l_idx,
        l_val,
        u_ptr,
        u_idx,
        u_val,
    })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L + U`.
    pub fn fill(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let mut c = vec![0.0; n];
        for i in 0..n {
            c[self.pinv[i]] = rhs[self.q[i]];
        }
        for j in 0..n {
            let cj = c[j];
            if cj != 0.0 {
                for t in self.l_ptr[j]..self.l_ptr[j + 1] {
                    c[self.l_idx[t]] -= self.l_val[t] * cj;
                }
            }
        }
        for k in (0..n).rev() {
            let last = self.u_ptr[k + 1] - 1;
            c[k] /= self.u_val[last];
            let ck = c[k];
            if ck != 0.0 {
                for t in self.u_ptr[k]..last {
                    c[self.u_idx[t]] -= self.u_val[t] * ck;
                }
            }
        }
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[self.q[j]] = c[j];
        }
        Ok(x)
    }

    /// Solves `A^T x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let mut w: Vec<f64> = (0..n).map(|i| rhs[self.q[i]]).collect();
        for k in 0..n {
            let last = self.u_ptr[k + 1] - 1;
            let mut s = w[k];
            for t in self.u_ptr[k]..last {
                s -= self.u_val[t] * w[self.u_idx[t]];
            }
            w[k] = s / self.u_val[last];
        }
        for j in (0..n).rev() {
            let mut s = w[j];
            for t in self.l_ptr[j]..self.l_ptr[j + 1] {
                s -= self.l_val[t] * w[self.l_idx[t]];
            }
            w[j] = s;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.q[i]] = w[self.pinv[i]];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::norm2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let f = factorize(&SparseMatrix::identity(5)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn permutation_matrix() {
        let a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f = factorize(&a).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn singular_rank_two() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(factorize(&a), Err(Error::SingularMatrix { .. })));
        let zero_col = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(factorize(&zero_col), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn diagonal_and_zero_rhs() {
        let a = SparseMatrix::from_diagonal(&[2.0, 4.0]);
        let f = factorize(&a).unwrap();
        assert_eq!(f.solve(&[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(f.solve(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let g: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| g[k][i] * g[k][j]).sum::<f64>();
            }
            a[i][i] += 1.0;
        }
        let a = SparseMatrix::from_dense(&a).unwrap();
        let f = factorize(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = f.solve(&b).unwrap();
        let r: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn saddle_point_with_zero_block() {
        // [[A, B^T], [B, 0]] with a zero diagonal block forces off-diagonal pivots.
        let a = SparseMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0, -1.0, 1.0],
            vec![0.0, 1.0, 2.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        let f = factorize(&a).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let b = a.matvec(&x_true).unwrap();
        let x = f.solve(&b).unwrap();
        let bt = a.matvec_transpose(&x_true).unwrap();
        let xt = f.solve_transpose(&bt).unwrap();
        for i in 0..5 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
            assert!((xt[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unsymmetric_transpose_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 0.1 + rng.gen_range(0.0..1.0)));
            for _ in 0..4 {
                t.push((i, rng.gen_range(0..n), rng.gen_range(-1.0..1.0)));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let f = factorize(&a).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&a.matvec(&x_true).unwrap()).unwrap();
        let y = f.solve_transpose(&a.matvec_transpose(&x_true).unwrap()).unwrap();
        let ex: f64 = x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ey: f64 = y.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(ex < 1e-8 && ey < 1e-8, "{ex} {ey}");
    }
}
