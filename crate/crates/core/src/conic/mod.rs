//! First-order solver for cone programs
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x + s = b,   s ∈ K
//! ```
//!
//! where `K` is a product of (in row order) a zero cone, a nonnegative orthant,
//! second-order cones, real symmetric PSD cones and complex Hermitian PSD
//! cones. Real PSD blocks are stored in `svec` form: the lower triangle, column
//! by column, with off-diagonal entries scaled by √2 so that
//! `⟨svec X, svec Y⟩ = Tr(XY)`. Hermitian blocks use the analogous `hvec`
//! form with the real and imaginary parts of each off-diagonal entry.
//!
//! The dual returned with a solution satisfies `Aᵀy + c = 0`, `y ∈ K*`.

mod admm;
mod builder;
mod cones;
mod dump;
mod linsys;
mod sparse;

pub use admm::{solve_conic, solve_conic_warm};
pub use builder::{ProgramBuilder, Row};
pub use cones::{
    hmat, hvec, hvec_index, hvec_len, project_cone, project_dual_cone, smat, soc_project, svec, svec_index, svec_len,
};
pub use dump::{read_program, write_program};
pub use sparse::SparseMatrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("cone dimensions sum to {cones} but the program has {rows} rows")]
    ConeMismatch { cones: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("program data contains non-finite values")]
    NonFinite,
    #[error("malformed program dump: {0}")]
    Parse(String),
}

/// Block structure of the cone `K`, in row order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
    pub soc: Vec<usize>,
    /// Matrix orders of the real PSD blocks.
    pub psd: Vec<usize>,
    /// Matrix orders of the Hermitian PSD blocks.
    pub hpsd: Vec<usize>,
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        self.zero
            + self.nonneg
            + self.soc.iter().sum::<usize>()
            + self.psd.iter().map(|&n| svec_len(n)).sum::<usize>()
            + self.hpsd.iter().map(|&n| hvec_len(n)).sum::<usize>()
    }

    /// `(start, len)` of every SOC and PSD block, used where scaling must be
    /// uniform inside a block.
    pub(crate) fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut off = self.zero + self.nonneg;
        for &d in &self.soc {
            out.push((off, d));
            off += d;
        }
        for &n in &self.psd {
            let d = svec_len(n);
            out.push((off, d));
            off += d;
        }
        for &n in &self.hpsd {
            let d = hvec_len(n);
            out.push((off, d));
            off += d;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: ConeSpec,
}

impl ConicProgram {
    pub fn validate(&self) -> Result<(), ConicError> {
        if self.a.ncols() != self.c.len() {
            return Err(ConicError::Dimension(format!(
                "A has {} columns, c has {} entries",
                self.a.ncols(),
                self.c.len()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(ConicError::Dimension(format!(
                "A has {} rows, b has {} entries",
                self.a.nrows(),
                self.b.len()
            )));
        }
        if self.cones.dim() != self.b.len() {
            return Err(ConicError::ConeMismatch {
                cones: self.cones.dim(),
                rows: self.b.len(),
            });
        }
        let finite = self.c.iter().chain(self.b.iter()).chain(self.a.values()).all(|v| v.is_finite());
        if !finite {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }

    /// Recomputes the residuals reported by the solver for an arbitrary
    /// primal-dual triple.
    pub fn residuals(&self, x: &[f64], s: &[f64], y: &[f64]) -> Residuals {
        let m = self.b.len();
        let mut ax = vec![0.0; m];
        self.a.mul_vec(x, &mut ax);
        let mut aty = vec![0.0; self.c.len()];
        self.a.tmul_vec(y, &mut aty);

        let primal_err = (0..m).map(|i| (ax[i] + s[i] - self.b[i]).abs()).fold(0.0, f64::max);
        let primal_scale = inf_norm(&ax).max(inf_norm(s)).max(inf_norm(&self.b));
        let dual_err = aty.iter().zip(&self.c).map(|(a, c)| (a + c).abs()).fold(0.0, f64::max);
        let dual_scale = inf_norm(&aty).max(inf_norm(&self.c));
        let pobj = dot(&self.c, x);
        let dobj = -dot(&self.b, y);
        Residuals {
            primal: primal_err / (1.0 + primal_scale),
            dual: dual_err / (1.0 + dual_scale),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        }
    }
}

/// Relative KKT residuals, each normalized by `1 + scale`:
/// `‖Ax+s−b‖∞`, `‖Aᵀy+c‖∞` and `|cᵀx + bᵀy|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub status: ConicStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub objective: f64,
    /// Penalty in effect when the iteration stopped.
    pub rho: f64,
}

/// Starting point for a related program with the same dimensions; values are
/// in the units of a [`ConicSolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
}

impl ConicSolution {
    /// Solver state to resume from; also offered after an iteration cap.
    pub fn warm_start(&self) -> Option<WarmStart> {
        let finite = self.x.iter().chain(&self.s).chain(&self.y).all(|v| v.is_finite());
        let usable = matches!(self.status, ConicStatus::Optimal | ConicStatus::MaxIter);
        (finite && usable).then(|| WarmStart {
            x: self.x.clone(),
            s: self.s.clone(),
            y: self.y.clone(),
            rho: self.rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConicSettings {
    pub max_iter: usize,
    pub eps: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub check_interval: usize,
    pub adaptive_rho: bool,
    pub infeasibility_tol: f64,
    pub infeasibility_grace: usize,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            eps: 1e-7,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            check_interval: 10,
            adaptive_rho: true,
            infeasibility_tol: 1e-7,
            infeasibility_grace: 500,
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
