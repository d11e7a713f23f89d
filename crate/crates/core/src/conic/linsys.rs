//! Factorization of the iteration-independent matrix `σI + Aᵀ R A`.
//!
//! Rows of `A` with a single nonzero contribute a diagonal term. When the
//! remaining ("dense") rows are fewer than the number of variables the system
//! is solved with the Woodbury identity around that diagonal, which only
//! needs a Cholesky factor of a `dense × dense` capacitance matrix. PSD cone
//! rows `−x + s = 0` are all single-entry rows, so lifted SDPs take that path.

use super::SparseMatrix;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) enum KktSolver {
    Direct(Cholesky<f64, Dyn>),
    LowRank {
        lambda_inv: DVector<f64>,
        w: DMatrix<f64>,
        cap: Cholesky<f64, Dyn>,
    },
}

impl KktSolver {
    pub(crate) fn factor(a: &SparseMatrix, rho: &[f64], sigma: f64) -> Option<Self> {
        let n = a.ncols();
        let mut diag = vec![sigma; n];
        let mut dense = Vec::new();
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            match cols.len() {
                0 => {}
                1 => diag[cols[0]] += rho[i] * vals[0] * vals[0],
                _ => dense.push(i),
            }
        }

        let well_covered = dense.iter().all(|&i| a.row(i).0.iter().all(|&j| diag[j] > 1e3 * sigma));
        if dense.len() < n && well_covered {
            let lambda_inv = DVector::from_iterator(n, diag.iter().map(|d| 1.0 / d));
            let mut w = DMatrix::zeros(dense.len(), n);
            for (r, &i) in dense.iter().enumerate() {
                let (cols, vals) = a.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    w[(r, j)] = v;
                }
            }
            let mut ws = w.clone();
            for j in 0..n {
                let f = lambda_inv[j].sqrt();
                ws.column_mut(j).scale_mut(f);
            }
            let mut cap = &ws * ws.transpose();
            for (r, &i) in dense.iter().enumerate() {
                cap[(r, r)] += 1.0 / rho[i];
            }
            let cap = Cholesky::new(cap)?;
            return Some(Self::LowRank { lambda_inv, w, cap });
        }

        let mut k = DMatrix::from_diagonal(&DVector::from_vec(diag));
        for &i in &dense {
            let (cols, vals) = a.row(i);
            for (p, &ci) in cols.iter().enumerate() {
                for (q, &cj) in cols.iter().enumerate() {
                    k[(ci, cj)] += rho[i] * vals[p] * vals[q];
                }
            }
        }
        Cholesky::new(k).map(Self::Direct)
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Self::Direct(chol) => {
                let x = chol.solve(&DVector::from_column_slice(rhs));
                x.as_slice().to_vec()
            }
            Self::LowRank { lambda_inv, w, cap } => {
                let u = DVector::from_column_slice(rhs).component_mul(lambda_inv);
                let t = cap.solve(&(w * &u));
                let corr = (w.transpose() * t).component_mul(lambda_inv);
                (u - corr).as_slice().to_vec()
            }
        }
    }
}
