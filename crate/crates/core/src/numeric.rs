//! Dense symmetric linear algebra used throughout the crate.
//!
//! Everything here works on small matrices (dimension well below 100), so
//! the eigensolver is a plain cyclic Jacobi iteration. All thresholds are
//! relative to the largest absolute eigenvalue unless stated otherwise.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// A square matrix that has been symmetrized on construction.
///
/// The defect `max |m_ij - m_ji|` of the input is recorded so callers can
/// decide whether the input was symmetric enough to begin with.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
    defect: f64,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut defect = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                defect = defect.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        let inner = (&m + m.transpose()) * 0.5;
        Ok(Self { inner, defect })
    }

    /// Wraps a matrix known to be symmetric up to rounding.
    pub(crate) fn from_symmetric(m: DMatrix<f64>) -> Self {
        Self::new(m).expect("square matrix")
    }

    pub fn identity(t: usize) -> Self {
        Self {
            inner: DMatrix::identity(t, t),
            defect: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    /// Largest asymmetry seen in the matrix passed to [`SymMatrix::new`].
    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Eigen-decomposition `M = Q diag(values) Qᵀ` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalue cut-off `rel_tol * max |λ|`.
    pub fn threshold(&self, rel_tol: f64) -> f64 {
        rel_tol * self.max_abs()
    }

    /// Rebuilds `Q f(Λ) Qᵀ`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let t = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..t {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        let out = scaled * self.vectors.transpose();
        (&out + out.transpose()) * 0.5
    }
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomp> {
    let n = m.dim();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let mut a = m.inner.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();

    let mut converged = scale == 0.0 || n < 2;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // skip rotations below the rounding floor of the diagonal
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(&a) <= f64::EPSILON * scale;
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if off > 1e-12 * scale {
            return Err(Error::Eigen(format!(
                "Jacobi iteration stalled after {MAX_SWEEPS} sweeps (off-diagonal {off:.3e})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(EigDecomp { values, vectors })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clipping).
pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    Ok(SymMatrix::from_symmetric(eig.map_values(|l| l.max(0.0))))
}

/// Minimum-norm least-squares solution of `M x = rhs`, discarding the part
/// of the spectrum below `rel_tol * max |λ|`.
pub fn pinv_solve(m: &SymMatrix, rhs: &DVector<f64>, rel_tol: f64) -> Result<DVector<f64>> {
    if rhs.len() != m.dim() {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, matrix is {}x{}",
            rhs.len(),
            m.dim(),
            m.dim()
        )));
    }
    let eig = sym_eig(m)?;
    Ok(pinv_apply(&eig, rhs, rel_tol))
}

/// Applies the truncated pseudo-inverse of an already decomposed matrix.
pub fn pinv_apply(eig: &EigDecomp, rhs: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let thr = eig.threshold(rel_tol);
    let mut x = DVector::zeros(rhs.len());
    for (j, &l) in eig.values.iter().enumerate() {
        if l.abs() > thr && l != 0.0 {
            let q = eig.vectors.column(j);
            x.axpy(q.dot(rhs) / l, &q, 1.0);
        }
    }
    x
}

/// Minimum eigenvalue and the PSD verdict `λ_min ≥ -tol · max(1, |λ_max|)`.
pub fn psd_check(m: &SymMatrix, tol: f64) -> Result<(bool, f64)> {
    if m.dim() == 0 {
        return Ok((true, 0.0));
    }
    let eig = sym_eig(m)?;
    let min = eig.min();
    let max = eig.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min >= -tol * max.abs().max(1.0), min))
}

/// Numerical rank: number of eigenvalues with `|λ| > tol · max |λ|`.
pub fn rank(m: &SymMatrix, tol: f64) -> Result<usize> {
    let eig = sym_eig(m)?;
    let thr = eig.threshold(tol);
    Ok(eig.values.iter().filter(|l| l.abs() > thr && **l != 0.0).count())
}

/// Greedy column selection: walks the columns in `order` and keeps each one
/// whose component orthogonal to the columns kept so far has norm above
/// `threshold`. Stops early once `limit` columns are kept.
pub fn select_columns(
    m: &DMatrix<f64>,
    order: impl IntoIterator<Item = usize>,
    threshold: f64,
    limit: usize,
) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in order {
        if kept.len() >= limit {
            break;
        }
        let mut r: DVector<f64> = m.column(j).into_owned();
        // two passes of Gram-Schmidt keep the residual honest
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&r);
                r.axpy(-d, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm > threshold {
            basis.push(r / norm);
            kept.push(j);
        }
    }
    kept
}

/// Rank together with pivot columns chosen greedily in natural order.
pub fn rank_with_pivots(m: &SymMatrix, tol: f64) -> Result<(usize, Vec<usize>)> {
    let eig = sym_eig(m)?;
    let thr = eig.threshold(tol);
    let r = eig.values.iter().filter(|l| l.abs() > thr && **l != 0.0).count();
    let pivots = select_columns(m, 0..m.dim(), thr, r);
    Ok((r, pivots))
}

/// Square root and pseudo-inverse square root of a PSD matrix.
pub fn psd_sqrt_pair(m: &SymMatrix, rel_tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = sym_eig(m)?;
    let thr = eig.threshold(rel_tol);
    let root = eig.map_values(|l| l.max(0.0).sqrt());
    let inv_root = eig.map_values(|l| if l > thr { 1.0 / l.sqrt() } else { 0.0 });
    Ok((root, inv_root))
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q).
pub fn random_orthogonal<R: Rng + ?Sized>(t: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..t {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random symmetric matrix with standard normal entries on and above the diagonal.
pub fn random_symmetric<R: Rng + ?Sized>(t: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let x: f64 = rng.sample(StandardNormal);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// Nonnegative least squares `min ‖A x - b‖, x ≥ 0` (Lawson-Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let eps = 1e-13 * scale * cols.max(1) as f64;
    for _ in 0..3 * cols + 10 {
        let grad = a.transpose() * (b - a * &x);
        let Some(j) = (0..cols)
            .filter(|&j| !passive[j] && grad[j] > eps)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]))
        else {
            break;
        };
        passive[j] = true;
        loop {
            let s = passive_solve(a, b, &passive);
            if (0..cols).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            // step back to the boundary and release the blocking columns
            let alpha = (0..cols)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(1.0f64, f64::min);
            x += (s - &x) * alpha;
            for i in 0..cols {
                if passive[i] && x[i] <= 1e-15 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Unconstrained least squares on the passive columns; zero elsewhere.
fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut out = DVector::zeros(passive.len());
    if idx.is_empty() {
        return out;
    }
    let sub = a.select_columns(&idx);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("both singular vector sets requested");
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sol[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        let n = rows.len();
        SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    // Roots of det(λI - A) for a symmetric 3x3, via the trigonometric form
    // of Cardano's formula.
    fn cubic_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut e = [e1, e2, e3];
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn diagonal_and_swap() {
        let e = sym_eig(&sym(&[&[3.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 3.0]);
        let e = sym_eig(&sym(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_six_by_six_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = SymMatrix::new(random_symmetric(6, &mut rng)).unwrap();
            let e = sym_eig(&m).unwrap();
            let recon = e.map_values(|l| l);
            assert!((&recon - &*m).norm() <= 1e-10 * m.norm());
            let qtq = e.vectors.transpose() * &e.vectors;
            assert!((qtq - DMatrix::identity(6, 6)).norm() < 1e-10);
            let sum: f64 = e.values.iter().sum();
            assert!((sum - m.trace()).abs() <= 1e-10 * 6.0 * m.norm());
            // independent solver as a second route
            let reference = nalgebra::SymmetricEigen::new(m.clone().into_inner());
            let mut rv: Vec<f64> = reference.eigenvalues.iter().copied().collect();
            rv.sort_by(f64::total_cmp);
            for (a, b) in e.values.iter().zip(&rv) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn three_by_three_matches_cubic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_symmetric(3, &mut rng);
            let expect = cubic_eigenvalues(&a);
            let e = sym_eig(&SymMatrix::new(a).unwrap()).unwrap();
            for (x, y) in e.values.iter().zip(expect) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = sym(&[&[f64::NAN, 0.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig(&m), Err(Error::Eigen(_))));
    }

    #[test]
    fn psd_projection_examples() {
        let p = psd_project(&sym(&[&[1.0, 0.0], &[0.0, -2.0]])).unwrap();
        assert!((&*p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
        let psd = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((&*psd_project(&psd).unwrap() - &*psd).norm() < 1e-14);
    }

    #[test]
    fn psd_projection_is_nearest_among_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SymMatrix::new(random_symmetric(5, &mut rng)).unwrap();
        let p = psd_project(&m).unwrap();
        let (ok, _) = psd_check(&p, 1e-12).unwrap();
        assert!(ok);
        let best = (&*p - &*m).norm();
        for _ in 0..100 {
            let g = random_symmetric(5, &mut rng);
            let cand = &g * g.transpose();
            assert!(best <= (&cand - &*m).norm() + 1e-12);
        }
        let again = psd_project(&p).unwrap();
        assert!((&*again - &*p).norm() < 1e-12);
    }

    #[test]
    fn pinv_examples() {
        let rhs = DVector::from_vec(vec![0.3, -1.2]);
        let x = pinv_solve(&SymMatrix::identity(2), &rhs, 1e-12).unwrap();
        assert!((x - &rhs).norm() < 1e-15);
        let ones = sym(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let x = pinv_solve(&ones, &DVector::from_vec(vec![2.0, 2.0]), 1e-12).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn pinv_residual_is_orthogonal_to_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = DMatrix::from_fn(6, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = SymMatrix::new(&g * g.transpose()).unwrap();
            let b = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = pinv_solve(&m, &b, 1e-10).unwrap();
            let resid = &*m * &x - &b;
            let proj = m.transpose() * resid;
            assert!(proj.norm() < 1e-9 * m.norm() * b.norm());
            // recovers the range component of a random vector
            let y = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = pinv_solve(&m, &(&*m * &y), 1e-10).unwrap();
            let e = sym_eig(&m).unwrap();
            let range_part = e.map_values(|l| if l.abs() > 1e-10 * e.max_abs() { 1.0 } else { 0.0 }) * &y;
            assert!((x - range_part).norm() < 1e-9 * y.norm().max(1.0));
        }
    }

    #[test]
    fn checks_and_rank() {
        assert_eq!(psd_check(&SymMatrix::identity(3), 1e-9).unwrap(), (true, 1.0));
        let (ok, min) = psd_check(&sym(&[&[1.0, 0.0], &[0.0, -1.0]]), 1e-9).unwrap();
        assert!(!ok);
        assert_eq!(min, -1.0);
        assert_eq!(rank(&SymMatrix::new(DMatrix::zeros(3, 3)).unwrap(), 1e-8).unwrap(), 0);
        let (r, piv) = rank_with_pivots(&sym(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]), 1e-8).unwrap();
        assert_eq!(r, 2);
        assert_eq!(piv, vec![0, 2]);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(5, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn nnls_examples() {
        // interior solution equals plain least squares
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b);
        assert!((x - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-12);
        // unconstrained optimum has a negative entry: clamp it
        let b = DVector::from_vec(vec![-1.0, 2.0, 1.0]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn nnls_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = DMatrix::from_fn(8, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = nnls(&a, &b);
            let grad = a.transpose() * (&b - &a * &x);
            for j in 0..4 {
                assert!(x[j] >= 0.0);
                assert!(grad[j] < 1e-10);
                if x[j] > 0.0 {
                    assert!(grad[j].abs() < 1e-10);
                }
            }
        }
    }
}
