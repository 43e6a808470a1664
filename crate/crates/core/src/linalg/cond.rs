//! 2-norm condition numbers.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lu::{factorize, Factorization};
use super::sparse::{dot, norm2, SparseMatrix};
use crate::error::{Error, Result};

/// Largest dimension accepted by the dense route.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CondMethod {
    /// Full singular values (or eigenvalues when symmetric).
    Dense,
    /// Power iteration for `sigma_max` and LU-based inverse iteration for `sigma_min`.
    Iterative,
    /// Dense up to [`DENSE_LIMIT`], iterative beyond.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondEstimate {
    pub value: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

/// `kappa_2(a) = sigma_max / sigma_min`; infinite when numerically singular.
pub fn condition_number(a: &SparseMatrix, method: CondMethod) -> Result<f64> {
    condition_estimate(a, method).map(|c| c.value)
}

pub fn condition_estimate(a: &SparseMatrix, method: CondMethod) -> Result<CondEstimate> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    match method {
        CondMethod::Dense => dense(a),
        CondMethod::Iterative => iterative(a),
        CondMethod::Auto if a.nrows() <= DENSE_LIMIT => dense(a),
        CondMethod::Auto => iterative(a),
    }
}

fn dense(a: &SparseMatrix) -> Result<CondEstimate> {
    let n = a.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense condition number limited to dimension {DENSE_LIMIT}, got {n}"
        )));
    }
    let mut m = Mat::<f64>::zeros(n, n);
    for (i, j, v) in a.triplets() {
        m[(i, j)] = v;
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let sym = a.symmetry_defect() <= 1e-13 * scale;
    let sv: Vec<f64> = if sym {
        m.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::DegenerateInput(format!("eigenvalue solver failed: {e:?}")))?
            .into_iter()
            .map(f64::abs)
            .collect()
    } else {
        m.singular_values()
            .map_err(|e| Error::DegenerateInput(format!("svd failed: {e:?}")))?
    };
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(finish(n, smax, smin))
}

fn finish(n: usize, smax: f64, smin: f64) -> CondEstimate {
    let value = if smin <= n as f64 * f64::EPSILON * smax {
        f64::INFINITY
    } else {
        smax / smin
    };
    CondEstimate {
        value,
        sigma_max: smax,
        sigma_min: smin,
    }
}

const ITER_TOL: f64 = 1e-7;
const ITER_CAP: usize = 10_000;

fn iterative(a: &SparseMatrix) -> Result<CondEstimate> {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let smax = power(n, &start, |x| {
        let y = a.matvec(x)?;
        a.matvec_transpose(&y)
    })?
    .sqrt();
    let lu: Factorization = match factorize(a) {
        Ok(f) => f,
        Err(Error::SingularMatrix { .. }) => return Ok(finish(n, smax, 0.0)),
        Err(e) => return Err(e),
    };
    // Largest eigenvalue of (A^T A)^{-1} = A^{-1} A^{-T}.
    let inv = power(n, &start, |x| {
        let y = lu.solve_transpose(x)?;
        lu.solve(&y)
    })?;
    let smin = if inv.is_finite() && inv > 0.0 {
        1.0 / inv.sqrt()
    } else {
        0.0
    };
    Ok(finish(n, smax, smin))
}

/// Dominant eigenvalue of a symmetric positive semidefinite operator.
fn power<F>(n: usize, start: &[f64], mut op: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = start.to_vec();
    let s = norm2(&x);
    x.iter_mut().for_each(|v| *v /= s);
    let mut lambda = 0.0;
    for it in 0..ITER_CAP {
        let y = op(&x)?;
        let next = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 || !ny.is_finite() {
            return Ok(if ny == 0.0 { 0.0 } else { f64::INFINITY });
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if it > 2 && (next - lambda).abs() <= ITER_TOL * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::Convergence {
        iterations: ITER_CAP,
        last_value: lambda,
        last_vector: x.iter().take(n).cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                t.push((k, k, 4.0));
                if i > 0 {
                    t.push((k, k - n, -1.0));
                }
                if i + 1 < n {
                    t.push((k, k + n, -1.0));
                }
                if j > 0 {
                    t.push((k, k - 1, -1.0));
                }
                if j + 1 < n {
                    t.push((k, k + 1, -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(n * n, n * n, &t).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        for m in [CondMethod::Dense, CondMethod::Iterative] {
            let c = condition_number(&SparseMatrix::identity(4), m).unwrap();
            assert!((c - 1.0).abs() < 1e-9, "{m:?} {c}");
            let c = condition_number(&SparseMatrix::from_diagonal(&[1.0, 10.0]), m).unwrap();
            assert!((c - 10.0).abs() < 1e-3, "{m:?} {c}");
        }
    }

    #[test]
    fn laplacian_closed_form() {
        // Eigenvalues 4 - 2cos(i pi/(n+1)) - 2cos(j pi/(n+1)).
        let n = 8;
        let t = std::f64::consts::PI / (n as f64 + 1.0);
        let lmin = 4.0 - 4.0 * t.cos();
        let lmax = 4.0 + 4.0 * t.cos();
        let exact = lmax / lmin;
        let a = laplacian(n);
        let d = condition_number(&a, CondMethod::Dense).unwrap();
        let it = condition_number(&a, CondMethod::Iterative).unwrap();
        assert!((d - exact).abs() < 1e-9 * exact);
        assert!((it - d).abs() < 1e-2 * d, "{it} vs {d}");
    }

    #[test]
    fn unsymmetric_routes_agree() {
        let a = SparseMatrix::from_dense(&[vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let d = condition_number(&a, CondMethod::Dense).unwrap();
        let it = condition_number(&a, CondMethod::Iterative).unwrap();
        assert!((it - d).abs() < 1e-3 * d, "{it} vs {d}");
    }

    #[test]
    fn scale_invariant_and_singular() {
        let a = laplacian(5);
        let c1 = condition_number(&a, CondMethod::Dense).unwrap();
        let c2 = condition_number(&a.scaled(-7.5), CondMethod::Dense).unwrap();
        assert!((c1 - c2).abs() < 1e-10 * c1);
        let s = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(condition_number(&s, CondMethod::Dense).unwrap().is_infinite());
        assert!(condition_number(&s, CondMethod::Iterative).unwrap().is_infinite());
    }

    #[test]
    fn dense_limit_enforced() {
        let a = SparseMatrix::identity(DENSE_LIMIT + 1);
        assert!(condition_number(&a, CondMethod::Dense).is_err());
        assert!(condition_number(&a, CondMethod::Auto).is_ok());
    }
}
