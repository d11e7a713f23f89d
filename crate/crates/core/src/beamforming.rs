//! Receive beamformer by the Lagrange dual method.
//!
//! Each iteration computes the closed-form minimizer of the Lagrangian in `b`
//! and then takes a projected subgradient step on the multipliers of the SINR
//! rows (`λ`) and the SIC gap rows (`μ`).

use crate::linalg::{solve_hpd, CMatrix, CVector, LinalgError};
use crate::metrics::{gap_residuals, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("Lagrangian matrix stayed indefinite after {0} dual halvings")]
    Indefinite(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `H_k = h̄_k h̄_kᴴ` and the constraint matrices built from it.
#[derive(Debug, Clone)]
pub struct QuadForms {
    pub h: Vec<CMatrix>,
    pub a: Vec<CMatrix>,
    pub bq: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// The last entry is always zero.
    pub mu: Vec<f64>,
}

impl DualState {
    pub fn zeros(k: usize) -> Self {
        Self {
            lambda: vec![0.0; k],
            mu: vec![0.0; k],
        }
    }

    fn halve(&mut self) {
        self.lambda.iter_mut().for_each(|l| *l *= 0.5);
        self.mu.iter_mut().for_each(|m| *m *= 0.5);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSettings {
    pub delta1: f64,
    pub delta2: f64,
    /// Stop once `‖b⁽ᵗ⁾ − b⁽ᵗ⁻¹⁾‖ ≤ eps1 · ‖b⁽ᵗ⁾‖`.
    pub eps1: f64,
    pub t1_max: usize,
    /// Ridge added to the Lagrangian matrix, relative to its trace scale.
    pub reg: f64,
    pub max_halvings: usize,
}

impl Default for BeamSettings {
    fn default() -> Self {
        Self {
            delta1: 0.05,
            delta2: 0.05,
            eps1: 1e-5,
            t1_max: 1_000_000,
            reg: 1e-9,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub b: CVector,
    pub dual: DualState,
    pub iters: usize,
    pub converged: bool,
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn build_quadforms(hbar: &[CVector], p: &[f64], sp: &SystemParams) -> Result<QuadForms, BeamError> {
    let k = hbar.len();
    if p.len() != k {
        return Err(BeamError::Dimension(format!("{} channels but {} powers", k, p.len())));
    }
    let nr = hbar.first().map_or(0, |h| h.len());
    if hbar.iter().any(|h| h.len() != nr) {
        return Err(BeamError::Dimension("channels differ in length".into()));
    }
    let h: Vec<CMatrix> = hbar.iter().map(|v| v * v.adjoint()).collect();
    let eye = CMatrix::identity(nr, nr);
    let mut a = Vec::with_capacity(k);
    let mut bq = Vec::with_capacity(k);
    for i in 0..k {
        let own = &h[i] * real(p[i]);
        let mut tail = CMatrix::zeros(nr, nr);
        for j in (i + 1)..k {
            tail += &h[j] * real(p[j]);
        }
        a.push(&own - &tail * real(sp.gamma_min) - &eye * real(sp.gamma_min * sp.sigma2));
        bq.push(if i + 1 < k { &own - &tail } else { own });
    }
    Ok(QuadForms { h, a, bq })
}

fn quad(b: &CVector, m: &CMatrix) -> f64 {
    b.dotc(&(m * b)).re
}

/// Lagrangian matrix `Σ_k H̄_k + σ²I` with `H̄_k = p_k H_k − λ_k A_k − μ_k B_k`.
pub fn lagrangian_matrix(qf: &QuadForms, dual: &DualState, p: &[f64], sigma2: f64) -> CMatrix {
    let nr = qf.h.first().map_or(0, |h| h.nrows());
    let mut m = CMatrix::identity(nr, nr) * real(sigma2);
    for k in 0..qf.h.len() {
        m += &qf.h[k] * real(p[k]);
        if dual.lambda[k] != 0.0 {
            m -= &qf.a[k] * real(dual.lambda[k]);
        }
        if dual.mu[k] != 0.0 {
            m -= &qf.bq[k] * real(dual.mu[k]);
        }
    }
    m
}

pub fn matched_sum(hbar: &[CVector], p: &[f64]) -> CVector {
    let nr = hbar.first().map_or(0, |h| h.len());
    let mut rhs = CVector::zeros(nr);
    for (h, &pk) in hbar.iter().zip(p) {
        rhs.axpy(real(pk.sqrt()), h, real(1.0));
    }
    rhs
}

/// Absolute ridge `reg · (tr(Σ p_k H_k)/Nr + σ²)`.
pub fn ridge(qf: &QuadForms, p: &[f64], sigma2: f64, reg: f64) -> f64 {
    let nr = qf.h.first().map_or(1, |h| h.nrows()).max(1);
    let tr: f64 = qf.h.iter().zip(p).map(|(h, pk)| h.trace().re * pk).sum();
    reg * (tr / nr as f64 + sigma2)
}

/// `b = (Σ_k H̄_k + σ²I + ε_r I)⁻¹ Σ_k h̄_k √p_k` with an absolute ridge `ridge_abs`.
pub fn mmse_step(
    qf: &QuadForms,
    dual: &DualState,
    hbar: &[CVector],
    p: &[f64],
    sigma2: f64,
    ridge_abs: f64,
) -> Result<CVector, BeamError> {
    let mut m = lagrangian_matrix(qf, dual, p, sigma2);
    for i in 0..m.nrows() {
        m[(i, i)] += real(ridge_abs);
    }
    Ok(solve_hpd(&m, &matched_sum(hbar, p))?)
}

pub fn dual_step(dual: &DualState, b: &CVector, qf: &QuadForms, p_gap: f64, delta1: f64, delta2: f64) -> DualState {
    let k = dual.lambda.len();
    let lambda = (0..k).map(|i| (dual.lambda[i] - delta1 * quad(b, &qf.a[i])).max(0.0)).collect();
    let mu = (0..k)
        .map(|i| {
            if i + 1 == k {
                0.0
            } else {
                (dual.mu[i] - delta2 * (quad(b, &qf.bq[i]) - p_gap)).max(0.0)
            }
        })
        .collect();
    DualState { lambda, mu }
}

/// MMSE step with dual halving when the Lagrangian matrix is indefinite.
/// `dual` is updated in place to the multipliers actually used.
fn robust_mmse(
    qf: &QuadForms,
    dual: &mut DualState,
    hbar: &[CVector],
    p: &[f64],
    sigma2: f64,
    ridge_abs: f64,
    max_halvings: usize,
) -> Result<CVector, BeamError> {
    for _ in 0..=max_halvings {
        match mmse_step(qf, dual, hbar, p, sigma2, ridge_abs) {
            Ok(b) => return Ok(b),
            Err(BeamError::Linalg(LinalgError::Singular)) => dual.halve(),
            Err(e) => return Err(e),
        }
    }
    Err(BeamError::Indefinite(max_halvings))
}

pub fn solve_beamforming(
    hbar: &[CVector],
    p: &[f64],
    sp: &SystemParams,
    settings: &BeamSettings,
    dual0: &DualState,
    b0: &CVector,
) -> Result<BeamResult, BeamError> {
    let qf = build_quadforms(hbar, p, sp)?;
    let ridge_abs = ridge(&qf, p, sp.sigma2, settings.reg);
    let mut dual = dual0.clone();
    if let Some(last) = dual.mu.last_mut() {
        *last = 0.0;
    }
    let mut b_prev = b0.clone();
    let mut b = b0.clone();
    let mut iters = 0;
    let mut converged = false;
    while iters < settings.t1_max {
        iters += 1;
        b = robust_mmse(&qf, &mut dual, hbar, p, sp.sigma2, ridge_abs, settings.max_halvings)?;
        dual = dual_step(&dual, &b, &qf, sp.p_gap, settings.delta1, settings.delta2);
        if (&b - &b_prev).norm() <= settings.eps1 * b.norm() {
            converged = true;
            break;
        }
        b_prev.copy_from(&b);
    }
    Ok(BeamResult {
        b,
        dual,
        iters,
        converged,
    })
}

/// Scales `b` up just enough for every SIC gap row to hold with relative
/// slack `margin`. The SINR rows are invariant to the scale of `b`. Returns
/// `None` when some gap row is nonpositive, which no scaling can fix.
pub fn repair_gaps(b: &CVector, hbar: &[CVector], p: &[f64], p_gap: f64, margin: f64) -> Option<CVector> {
    let lhs = gap_residuals(b, hbar, p, 0.0);
    let target = p_gap * (1.0 + margin);
    let mut t2: f64 = 1.0;
    for l in lhs {
        if !(l > 0.0) {
            return None;
        }
        t2 = t2.max(target / l);
    }
    Some(if t2 > 1.0 { b * real(t2.sqrt()) } else { b.clone() })
}
