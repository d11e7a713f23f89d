//! Dense complex linear algebra shared by the solvers.
//!
//! Vectors and matrices are `nalgebra` dense types over `Complex64`. Everything
//! here is deterministic: eigenvectors carry a fixed global phase (largest
//! magnitude component real and positive) so results are reproducible.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Relative asymmetry tolerated before a Hermitian routine rejects its input.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular system: matrix is not positive definite")]
    Singular,
}

/// Eigendecomposition `X = Q diag(λ) Qᴴ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermEig {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                scaled[(i, j)] *= lam;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }
}

pub fn cvec(entries: &[Complex64]) -> CVector {
    CVector::from_column_slice(entries)
}

pub fn is_finite_c(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn unit_phase(angle: f64) -> Complex64 {
    Complex64::from_polar(1.0, angle)
}

fn check_square(rows: usize, cols: usize) -> Result<(), LinalgError> {
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    Ok(())
}

/// Returns `(X + Xᴴ)/2` after checking the asymmetry is within tolerance.
pub fn symmetrize(x: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_square(x.nrows(), x.ncols())?;
    if !is_finite_c(x) {
        return Err(LinalgError::NonFinite);
    }
    let adj = x.adjoint();
    let norm = x.norm();
    let asym = (x - &adj).norm();
    if norm > 0.0 && asym > HERMITIAN_TOL * norm {
        return Err(LinalgError::NotHermitian(asym / norm));
    }
    Ok((x + adj) * Complex64::new(0.5, 0.0))
}

/// Rotates a column so its largest-magnitude entry is real and positive.
/// Ties go to the lowest index.
fn fix_phase(col: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in col.iter().enumerate() {
        let m = z.norm();
        if m > best_mag * (1.0 + 1e-12) + 1e-300 {
            best = i;
            best_mag = m;
        }
    }
    if best_mag <= 0.0 {
        return;
    }
    let rot = col[best].conj() / best_mag;
    for z in col.iter_mut() {
        *z *= rot;
    }
    col[best] = Complex64::new(col[best].re, 0.0);
}

pub fn hermitian_eig(x: &CMatrix) -> Result<HermEig, LinalgError> {
    let sym = symmetrize(x)?;
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col: Vec<Complex64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_phase(&mut col);
        for (i, z) in col.into_iter().enumerate() {
            vectors[(i, dst)] = z;
        }
    }
    Ok(HermEig {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Solves `A x = y` for Hermitian positive-definite `A` by Cholesky.
pub fn solve_hpd(a: &CMatrix, y: &CVector) -> Result<CVector, LinalgError> {
    check_square(a.nrows(), a.ncols())?;
    if a.nrows() != y.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            got: y.len(),
        });
    }
    if !is_finite_c(a) || y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = herm.cholesky().ok_or(LinalgError::Singular)?;
    // the complex factorization takes complex square roots of negative pivots
    let pivots_ok = chol.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
    if !pivots_ok {
        return Err(LinalgError::Singular);
    }
    let x = chol.solve(y);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn psd_project(x: &CMatrix) -> Result<CMatrix, LinalgError> {
    let mut eig = hermitian_eig(x)?;
    for lam in eig.eigenvalues.iter_mut() {
        *lam = lam.max(0.0);
    }
    let out = eig.reconstruct();
    Ok((&out + out.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Largest eigenvalue with its unit eigenvector (phase fixed as in `hermitian_eig`).
pub fn leading_eigpair(x: &CMatrix) -> Result<(f64, CVector), LinalgError> {
    let eig = hermitian_eig(x)?;
    let n = eig.eigenvalues.len();
    if n == 0 {
        return Err(LinalgError::NotSquare { rows: 0, cols: 0 });
    }
    Ok((
        eig.eigenvalues[n - 1],
        eig.eigenvectors.column(n - 1).into_owned(),
    ))
}

/// Real symmetric eigendecomposition, eigenvalues ascending. Used by the
/// PSD cone projection in the conic solver.
pub fn symmetric_eig(x: &RMatrix) -> (Vec<f64>, RMatrix) {
    let n = x.nrows();
    let eig = SymmetricEigen::new(x.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = RMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Real symmetric counterpart of [`psd_project`]; `x` is assumed symmetric.
pub fn psd_project_real(x: &RMatrix) -> RMatrix {
    let n = x.nrows();
    let eig = SymmetricEigen::new(x.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return x.clone();
    }
    let mut out = RMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(k);
        for j in 0..n {
            let qj = lam * q[j];
            for i in j..n {
                out[(i, j)] += q[i] * qj;
            }
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

/// Complex counterpart of [`psd_project_real`] without the phase fixing of
/// [`psd_project`]; `x` is assumed Hermitian.
pub fn psd_project_hermitian(x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    let eig = SymmetricEigen::new(x.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return x.clone();
    }
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(k);
        for j in 0..n {
            let qj = q[j].conj() * lam;
            for i in j..n {
                out[(i, j)] += q[i] * qj;
            }
        }
    }
    for j in 0..n {
        out[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            out[(j, i)] = out[(i, j)].conj();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_herm(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&g + g.adjoint()) * c(0.5, 0.0)
    }

    fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &g * g.adjoint() + CMatrix::identity(n, n) * c(0.1, 0.0)
    }

    #[test]
    fn diagonal_and_identity_eigenvalues() {
        let d = CMatrix::from_diagonal(&cvec(&[c(2.0, 0.0), c(1.0, 0.0)]));
        let e = hermitian_eig(&d).unwrap();
        assert_eq!(e.eigenvalues.len(), 2);
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-15);
        let e = hermitian_eig(&CMatrix::identity(3, 3)).unwrap();
        for lam in e.eigenvalues {
            assert!((lam - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_reconstruction_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 5, 17, 64] {
            let x = random_herm(n, &mut rng);
            let e = hermitian_eig(&x).unwrap();
            let err = (e.reconstruct() - &x).norm();
            assert!(err <= 1e-9 * (1.0 + x.norm()), "n={n} err={err}");
            let qq = e.eigenvectors.adjoint() * &e.eigenvectors;
            assert!((qq - CMatrix::identity(n, n)).norm() < 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(hermitian_eig(&rect), Err(LinalgError::NotSquare { .. })));
        let mut nan = CMatrix::identity(2, 2);
        nan[(0, 1)] = c(f64::NAN, 0.0);
        assert_eq!(hermitian_eig(&nan).unwrap_err(), LinalgError::NonFinite);
        let mut asym = CMatrix::identity(2, 2);
        asym[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(hermitian_eig(&asym), Err(LinalgError::NotHermitian(_))));
    }

    #[test]
    fn eigenvector_phase_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_herm(6, &mut rng);
        let e = hermitian_eig(&x).unwrap();
        for j in 0..6 {
            let col = e.eigenvectors.column(j);
            let (imax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            assert!(col[imax].im.abs() < 1e-14 && col[imax].re > 0.0);
        }
    }

    #[test]
    fn hpd_solves() {
        let y = cvec(&[c(1.0, 2.0), c(-3.0, 0.5)]);
        let x = solve_hpd(&CMatrix::identity(2, 2), &y).unwrap();
        assert!((x - &y).norm() < 1e-15);
        let a = CMatrix::from_diagonal(&cvec(&[c(2.0, 0.0), c(4.0, 0.0)]));
        let x = solve_hpd(&a, &cvec(&[c(2.0, 0.0), c(4.0, 0.0)])).unwrap();
        assert!((x - cvec(&[c(1.0, 0.0), c(1.0, 0.0)])).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_hpd(6, &mut rng);
            let y = CVector::from_fn(6, |_, _| c(rng.random(), rng.random()));
            let x = solve_hpd(&a, &y).unwrap();
            assert!((&a * &x - &y).norm() <= 1e-9 * (1.0 + y.norm()));
            let x_true = CVector::from_fn(6, |_, _| c(rng.random(), rng.random()));
            let back = solve_hpd(&a, &(&a * &x_true)).unwrap();
            assert!((back - &x_true).norm() <= 1e-8 * x_true.norm());
        }
    }

    #[test]
    fn hpd_rejects_indefinite() {
        let a = CMatrix::from_diagonal(&cvec(&[c(1.0, 0.0), c(-1.0, 0.0)]));
        let y = cvec(&[c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(solve_hpd(&a, &y).unwrap_err(), LinalgError::Singular);
        assert!(matches!(
            solve_hpd(&a, &cvec(&[c(1.0, 0.0)])),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psd_projection_examples() {
        let x = CMatrix::from_diagonal(&cvec(&[c(1.0, 0.0), c(-2.0, 0.0)]));
        let p = psd_project(&x).unwrap();
        let want = CMatrix::from_diagonal(&cvec(&[c(1.0, 0.0), c(0.0, 0.0)]));
        assert!((p - want).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hpd(4, &mut rng);
        assert!((psd_project(&a).unwrap() - &a).norm() < 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn psd_projection_beats_random_psd_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let x = random_herm(4, &mut rng);
            let p = psd_project(&x).unwrap();
            let eig = hermitian_eig(&p).unwrap();
            assert!(eig.eigenvalues[0] >= -1e-10);
            let best = (&p - &x).norm();
            for _ in 0..100 {
                let g = CMatrix::from_fn(4, 4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let cand = &g * g.adjoint();
                assert!((cand - &x).norm() >= best - 1e-12);
            }
            // idempotent
            assert!((psd_project(&p).unwrap() - &p).norm() < 1e-10);
        }
    }

    #[test]
    fn leading_pair_examples() {
        let d = CMatrix::from_diagonal(&cvec(&[c(3.0, 0.0), c(1.0, 0.0)]));
        let (lam, q) = leading_eigpair(&d).unwrap();
        assert!((lam - 3.0).abs() < 1e-14);
        assert!((q[0].norm() - 1.0).abs() < 1e-14 && q[1].norm() < 1e-14);

        let v = cvec(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let (lam, q) = leading_eigpair(&(&v * v.adjoint())).unwrap();
        assert!((lam - 1.0).abs() < 1e-14);
        let overlap = (q.adjoint() * &v)[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_herm(5, &mut rng);
        let (lam, q) = leading_eigpair(&x).unwrap();
        let full = hermitian_eig(&x).unwrap();
        assert!((lam - full.eigenvalues[4]).abs() < 1e-12);
        assert!((&x * &q - &q * c(lam, 0.0)).norm() <= 1e-8 * (1.0 + lam.abs()));
    }

    #[test]
    fn real_projection_matches_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = RMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let x = (&g + g.transpose()) * 0.5;
        let p = psd_project_real(&x);
        let pc = psd_project(&x.map(|r| c(r, 0.0))).unwrap();
        assert!((p.map(|r| c(r, 0.0)) - pc).norm() < 1e-12);
        let (vals, vecs) = symmetric_eig(&x);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = &vecs * RMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        assert!((rebuilt - x).norm() < 1e-12);
    }
}
