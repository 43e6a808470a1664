//! Smallest eigenpairs of symmetric definite pencils `S q = lambda M q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lu::{factorize, Factorization};
use super::sparse::{dot, SparseMatrix};
use crate::error::{Error, Result};

/// Relative eigenvalue tolerance reported to callers.
pub const EIGEN_TOL: f64 = 1e-6;
const INTERNAL_TOL: f64 = 1e-9;
pub const EIGEN_CAP: usize = 1000;

/// Shifted inverse of a pencil: `y -> (S - shift M)^{-1} y`, plus products with `M`.
pub trait ShiftInvert {
    fn dim(&self) -> usize;
    fn shift(&self) -> f64;
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn solve_shifted(&self, y: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// `M`-normalized.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Explicit sparse pencil with a factorized `S - shift M`.
pub struct SparsePencil<'a> {
    m: &'a SparseMatrix,
    lu: Factorization,
    shift: f64,
}

impl<'a> SparsePencil<'a> {
    pub fn new(s: &SparseMatrix, m: &'a SparseMatrix, shift: f64) -> Result<Self> {
        if s.nrows() != m.nrows() || !s.is_square() || !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: s.nrows(),
                found: m.nrows(),
            });
        }
        let shifted = if shift == 0.0 {
            s.clone()
        } else {
            s.add_scaled(-shift, m)?
        };
        Ok(SparsePencil {
            m,
            lu: factorize(&shifted)?,
            shift,
        })
    }
}

impl ShiftInvert for SparsePencil<'_> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn shift(&self) -> f64 {
        self.shift
    }
    fn apply_m(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.m.matvec(x)
    }
    fn solve_shifted(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.lu.solve(y)
    }
}

/// Smallest eigenvalue of `S q = lambda M q` above `shift`, with `q^T M q = 1`.
pub fn smallest_generalized_eigenpair(s: &SparseMatrix, m: &SparseMatrix, shift: f64) -> Result<EigenPair> {
    let pencil = SparsePencil::new(s, m, shift)?;
    inverse_subspace_iteration(&pencil, None, 8, 0x1a2b)
}

/// Block inverse iteration with Rayleigh-Ritz in the `M` inner product.
///
/// `deflate`, when given, is removed from every iterate by `M`-orthogonal projection
/// (e.g. the constant vector for a pencil whose `S` annihilates constants).
pub fn inverse_subspace_iteration<O: ShiftInvert + ?Sized>(
    op: &O,
    deflate: Option<&[f64]>,
    block: usize,
    seed: u64,
) -> Result<EigenPair> {
    let n = op.dim();
    let avail = n - usize::from(deflate.is_some());
    if avail == 0 {
        return Err(Error::DegenerateInput("pencil has no admissible directions".into()));
    }
    let k = block.clamp(1, avail);
    let defl = match deflate {
        Some(c) => {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.len(),
                });
            }
            let mc = op.apply_m(c)?;
            let cmc = dot(c, &mc);
            if !(cmc > 0.0) {
                return Err(Error::DegenerateInput("deflation vector has zero M-norm".into()));
            }
            Some((c.to_vec(), mc, cmc))
        }
        None => None,
    };
    let project = |x: &mut Vec<f64>| {
        if let Some((c, mc, cmc)) = &defl {
            let a = dot(mc, x) / cmc;
            x.iter_mut().zip(c).for_each(|(v, ci)| *v -= a * ci);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            project(&mut v);
            v
        })
        .collect();
    let mut mx = m_orthonormalize(op, &mut x)?;
    let mut last = f64::NAN;
    let mut streak = 0;
    let mut best = (f64::NAN, Vec::new());
    for it in 1..=EIGEN_CAP {
        // Y = (S - sM)^{-1} M X, then Ritz values of that operator on span X.
        let mut y = Vec::with_capacity(x.len());
        for mxi in &mx {
            let mut v = op.solve_shifted(mxi)?;
            project(&mut v);
            y.push(v);
        }
        let kk = x.len();
        let mut h = vec![vec![0.0; kk]; kk];
        for i in 0..kk {
            for j in 0..kk {
                h[i][j] = dot(&mx[i], &y[j]);
            }
        }
        for i in 0..kk {
            for j in 0..i {
                let a = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = a;
                h[j][i] = a;
            }
        }
        let (mu, vecs) = jacobi_eigen(&h);
        // Largest positive mu is the eigenvalue nearest above the shift.
        let mut order: Vec<usize> = (0..kk).collect();
        order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]));
        let top = order[0];
        if !(mu[top] > 0.0) {
            return Err(Error::DegenerateInput("no eigenvalue above the shift".into()));
        }
        let lambda = op.shift() + 1.0 / mu[top];
        let ritz: Vec<f64> = combine(&x, &vecs, top);
        best = (lambda, ritz);
        if last.is_finite() && (lambda - last).abs() <= INTERNAL_TOL * lambda.abs().max(1e-300) {
            streak += 1;
            if streak >= 2 {
                let (value, mut vector) = best;
                let mv = op.apply_m(&vector)?;
                let nrm = dot(&vector, &mv).sqrt();
                vector.iter_mut().for_each(|v| *v /= nrm);
                return Ok(EigenPair {
                    value,
                    vector,
                    iterations: it,
                });
            }
        } else {
            streak = 0;
        }
        last = lambda;
        // Next basis: Y rotated onto the Ritz directions, sorted by mu.
        let mut next: Vec<Vec<f64>> = order.iter().map(|&c| combine(&y, &vecs, c)).collect();
        next.iter_mut().for_each(|v| project(v));
        mx = m_orthonormalize(op, &mut next)?;
        x = next;
    }
    Err(Error::Convergence {
        iterations: EIGEN_CAP,
        last_value: best.0,
        last_vector: best.1,
    })
}

fn combine(basis: &[Vec<f64>], vecs: &[Vec<f64>], col: usize) -> Vec<f64> {
    let n = basis[0].len();
    let mut out = vec![0.0; n];
    for (b, row) in basis.iter().zip(vecs) {
        let c = row[col];
        out.iter_mut().zip(b).for_each(|(o, v)| *o += c * v);
    }
    out
}

/// Modified Gram-Schmidt in the `M` inner product (applied twice); drops dependent
/// vectors. Returns `M x_i` for the surviving vectors.
fn m_orthonormalize<O: ShiftInvert + ?Sized>(op: &O, x: &mut Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut mout: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    for v in x.drain(..) {
        let mut v = v;
        let mut mv = op.apply_m(&v)?;
        let start = dot(&v, &mv).max(0.0).sqrt();
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let a = dot(mq, &v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= a * qi);
            }
            mv = op.apply_m(&v)?;
        }
        let nrm = dot(&v, &mv).max(0.0).sqrt();
        if nrm <= 1e-10 * start || nrm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|e| *e /= nrm);
        mv.iter_mut().for_each(|e| *e /= nrm);
        out.push(v);
        mout.push(mv);
    }
    if out.is_empty() {
        return Err(Error::DegenerateInput("iteration subspace collapsed".into()));
    }
    *x = out;
    Ok(mout)
}

/// Cyclic Jacobi for a small symmetric matrix. Returns eigenvalues and the
/// eigenvector matrix with eigenvectors in columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::{Mat, Side};

    fn random_spd(n: usize, rng: &mut ChaCha8Rng, shift: f64) -> Vec<Vec<f64>> {
        let g: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| g[k][i] * g[k][j]).sum();
            }
            a[i][i] += shift;
        }
        a
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]];
        let (mut w, _) = jacobi_eigen(&a);
        w.sort_by(f64::total_cmp);
        let r = 2f64.sqrt();
        for (x, e) in w.iter().zip([2.0 - r, 2.0, 2.0 + r]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SparseMatrix::from_dense(&random_spd(6, &mut rng, 1.0)).unwrap();
        let e = smallest_generalized_eigenpair(&m, &m, 0.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_pencil() {
        let s = SparseMatrix::from_diagonal(&[1.0, 4.0]);
        let m = SparseMatrix::identity(2);
        let e = smallest_generalized_eigenpair(&s, &m, 0.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        assert!((e.vector[0].abs() - 1.0).abs() < 1e-9 && e.vector[1].abs() < 1e-6);
        let above = smallest_generalized_eigenpair(&s, &m, 2.0).unwrap();
        assert!((above.value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn random_pencil_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let s = random_spd(n, &mut rng, 0.5);
        let m = random_spd(n, &mut rng, 1.0);
        // Oracle: eigenvalues of M^{-1/2} S M^{-1/2}.
        let mm = Mat::<f64>::from_fn(n, n, |i, j| m[i][j]);
        let evd = mm.self_adjoint_eigen(Side::Lower).unwrap();
        let u = evd.U();
        let d = evd.S().column_vector();
        let mhalf = Mat::<f64>::from_fn(n, n, |i, j| (0..n).map(|k| u[(i, k)] * u[(j, k)] / d[k].sqrt()).sum());
        let ss = Mat::<f64>::from_fn(n, n, |i, j| s[i][j]);
        let c = &mhalf * &ss * &mhalf;
        let w = c.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let oracle = w.iter().cloned().fold(f64::INFINITY, f64::min);

        let sm = SparseMatrix::from_dense(&s).unwrap();
        let msp = SparseMatrix::from_dense(&m).unwrap();
        let e = smallest_generalized_eigenpair(&sm, &msp, 0.0).unwrap();
        assert!((e.value - oracle).abs() <= 1e-6 * oracle, "{} vs {oracle}", e.value);
        let sq = dot(&e.vector, &sm.matvec(&e.vector).unwrap());
        let mq = dot(&e.vector, &msp.matvec(&e.vector).unwrap());
        assert!((mq - 1.0).abs() < 1e-10);
        assert!(e.value <= sq / mq * (1.0 + 1e-9));
        assert!((e.value - sq / mq).abs() <= 1e-6 * e.value);
    }

    #[test]
    fn deflation_skips_null_direction() {
        // Path-graph Laplacian: S 1 = 0, next eigenvalue 2 - 2cos(pi/n).
        let n = 12;
        let mut t = Vec::new();
        for i in 0..n {
            let deg = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            t.push((i, i, deg));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let s = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let m = SparseMatrix::identity(n);
        // Shift slightly below zero so S - shift M is invertible.
        let pencil = SparsePencil::new(&s, &m, -1e-3).unwrap();
        let ones = vec![1.0; n];
        let e = inverse_subspace_iteration(&pencil, Some(&ones), 4, 3).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / n as f64).cos();
        assert!((e.value - exact).abs() < 1e-8 * exact.max(1.0), "{} {exact}", e.value);
    }
}
