//! Phase-shift step: lifting, semidefinite relaxation and phase recovery.
//!
//! With `b` and `p` fixed, the scaled gain of device `k` is affine in `v`:
//! `bᴴh̄_k√p_k = ρ_k* + Φ_kᴴ v` with `ρ_k = h_kᴴ b √p_k` and
//! `Φ_k = D_kᴴ b √p_k`. Every quantity of interest is then a quadratic form
//! in `v̄ = (v, 1)`, which is lifted to `V = v̄v̄ᴴ`.
//!
//! The relaxation keeps `V` as a Hermitian PSD cone block in `hvec` form, so
//! `Tr(FV) = ⟨hvec F, hvec V⟩` for Hermitian `F`.

use crate::beamforming::repair_gaps;
use crate::channel::{effective_hbar, ChannelSet};
use crate::conic::{
    hmat, hvec, hvec_index, hvec_len, solve_conic_warm, ConicSettings, ConicStatus, ProgramBuilder, WarmStart,
};
use crate::linalg::{hermitian_eig, leading_eigpair, CMatrix, CVector};
use crate::metrics::{check_feasibility, mse, Solution, SystemParams, Tolerances};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSettings {
    /// Gaussian candidates drawn when the leading-eigenvector point is rejected.
    pub randomizations: usize,
    /// Candidates are accepted when their MSE is at most `old + accept_tol`.
    pub accept_tol: f64,
    /// Relative slack restored on the SIC gap rows by scaling `b` when a
    /// candidate breaks them.
    pub gap_margin: f64,
    /// Majorize-minimize sweeps from the current phases, offered as one more
    /// candidate.
    pub refine_iters: usize,
    pub conic: ConicSettings,
}

impl Default for PhaseSettings {
    fn default() -> Self {
        Self {
            randomizations: 50,
            accept_tol: 1e-9,
            gap_margin: 1e-5,
            refine_iters: 20,
            conic: ConicSettings {
                eps: 1e-5,
                max_iter: 300,
                ..ConicSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftedData {
    pub d: Vec<CMatrix>,
    pub phi: Vec<CVector>,
    pub rho: Vec<Complex64>,
    pub alpha: Vec<CVector>,
    pub beta: Vec<CVector>,
    pub omega: Vec<CVector>,
    pub f0: CMatrix,
    pub f1: Vec<CMatrix>,
    pub f2: Vec<CMatrix>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// `Σ_k |ρ_k − 1|² + ‖b‖²σ²`.
    pub constant: f64,
    /// Whether the SINR rows take part in the program.
    pub qos: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdrStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub v: CMatrix,
    pub objective: f64,
    pub rank1_gap: f64,
    pub status: SdrStatus,
    pub iterations: usize,
    /// Solver state for warm-starting the next relaxation.
    pub warm: Option<WarmStart>,
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub v: CVector,
    /// Receiver to use with `v`; a scaled copy of the input when the gap
    /// rows needed restoring.
    pub b: CVector,
    pub accepted: bool,
    pub sdr: Option<LiftedSolution>,
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `[[Q, l], [lᴴ, 0]]`.
fn bordered(q: &CMatrix, l: &CVector) -> CMatrix {
    let m = q.nrows();
    let mut out = CMatrix::zeros(m + 1, m + 1);
    out.view_mut((0, 0), (m, m)).copy_from(q);
    for i in 0..m {
        out[(i, m)] = l[i];
        out[(m, i)] = l[i].conj();
    }
    out
}

/// Devices are taken in the channel set's order, which must be the decoding order.
pub fn build_lifted(b: &CVector, p: &[f64], ch: &ChannelSet, sp: &SystemParams) -> LiftedData {
    let k = ch.k();
    let m = ch.m();
    let gamma = sp.gamma_min;
    let d: Vec<CMatrix> = (0..k).map(|i| ch.cascade(i)).collect();
    let phi: Vec<CVector> = (0..k).map(|i| d[i].adjoint() * b * re(p[i].sqrt())).collect();
    let rho: Vec<Complex64> = (0..k).map(|i| ch.h[i].dotc(b) * p[i].sqrt()).collect();
    let outer: Vec<CMatrix> = phi.iter().map(|f| f * f.adjoint()).collect();
    let alpha: Vec<CVector> = (0..k).map(|i| &phi[i] * (rho[i].conj() - 1.0)).collect();

    let weighted = |i: usize, g: f64| -> (CMatrix, CVector) {
        let mut q = outer[i].clone();
        let mut l = &phi[i] * rho[i].conj();
        for j in (i + 1)..k {
            q -= &outer[j] * re(g);
            l -= &phi[j] * (rho[j].conj() * g);
        }
        (q, l)
    };
    let tail_rho = |i: usize| -> f64 { ((i + 1)..k).map(|j| rho[j].norm_sqr()).sum() };

    let mut f0 = CMatrix::zeros(m + 1, m + 1);
    for i in 0..k {
        f0 += bordered(&outer[i], &alpha[i]);
    }
    let noise = sp.sigma2 * b.norm_squared();
    let mut beta = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    let mut c1 = Vec::with_capacity(k);
    for i in 0..k {
        let (q, l) = weighted(i, gamma);
        f1.push(bordered(&q, &l));
        beta.push(l);
        c1.push(gamma * tail_rho(i) + gamma * noise - rho[i].norm_sqr());
    }
    let mut omega = Vec::with_capacity(k.saturating_sub(1));
    let mut f2 = Vec::with_capacity(k.saturating_sub(1));
    let mut c2 = Vec::with_capacity(k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        let (q, l) = weighted(i, 1.0);
        f2.push(bordered(&q, &l));
        omega.push(l);
        c2.push(tail_rho(i) + sp.p_gap - rho[i].norm_sqr());
    }
    let constant = rho.iter().map(|r| (r - 1.0).norm_sqr()).sum::<f64>() + noise;
    LiftedData {
        d,
        phi,
        rho,
        alpha,
        beta,
        omega,
        f0,
        f1,
        f2,
        c1,
        c2,
        constant,
        qos: gamma > 0.0,
    }
}

/// `v̄ᴴ F v̄` for Hermitian `F`.
pub fn lifted_form(f: &CMatrix, vbar: &CVector) -> f64 {
    vbar.dotc(&(f * vbar)).re
}

pub fn lift(v: &CVector) -> CVector {
    let m = v.len();
    CVector::from_fn(m + 1, |i, _| if i < m { v[i] } else { re(1.0) })
}

fn trace_row(f: &CMatrix) -> Vec<(usize, f64)> {
    hvec(f).into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
}

/// `min Tr(F₀V)` s.t. `diag V = 1`, `Tr(F₁ₖV) ≥ C₁ₖ`, `Tr(F₂ₖV) ≥ C₂ₖ`, `V ⪰ 0`.
pub fn solve_sdr(ld: &LiftedData, settings: &ConicSettings) -> LiftedSolution {
    solve_sdr_warm(ld, settings, None)
}

/// [`solve_sdr`] started from the solver state of a previous relaxation.
pub fn solve_sdr_warm(ld: &LiftedData, settings: &ConicSettings, warm: Option<&WarmStart>) -> LiftedSolution {
    let n = ld.f0.nrows();
    let dim = hvec_len(n);
    let mut pb = ProgramBuilder::new(dim);
    for (j, v) in trace_row(&ld.f0) {
        pb.add_cost(j, v);
    }
    for i in 0..n {
        pb.eq(vec![(hvec_index(n, i, i).0, 1.0)], 1.0);
    }
    if ld.qos {
        for (f, &c) in ld.f1.iter().zip(&ld.c1) {
            pb.geq(trace_row(f), c);
        }
    }
    for (f, &c) in ld.f2.iter().zip(&ld.c2) {
        pb.geq(trace_row(f), c);
    }
    pb.hpsd(n, (0..dim).map(|j| (vec![(j, 1.0)], 0.0)).collect());
    let prog = pb.build();

    let (x, status, iterations, next) = match solve_conic_warm(&prog, settings, warm) {
        Ok(sol) => {
            let st = match sol.status {
                ConicStatus::Optimal => SdrStatus::Optimal,
                ConicStatus::Infeasible => SdrStatus::Infeasible,
                ConicStatus::Unbounded | ConicStatus::MaxIter => SdrStatus::MaxIter,
            };
            let next = sol.warm_start();
            (sol.x, st, sol.iterations, next)
        }
        Err(e) => {
            log::warn!("lifted program rejected: {e}");
            (vec![f64::NAN; dim], SdrStatus::MaxIter, 0, None)
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return LiftedSolution {
            v: CMatrix::identity(n, n),
            objective: f64::NAN,
            rank1_gap: f64::NAN,
            status: SdrStatus::MaxIter,
            iterations,
            warm: None,
        };
    }
    let v = hmat(&x, n);
    let objective = (&ld.f0 * &v).trace().re;
    let rank1_gap = match hermitian_eig(&v) {
        Ok(eig) => {
            let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
            let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
            if total > 0.0 {
                1.0 - top / total
            } else {
                0.0
            }
        }
        Err(_) => f64::NAN,
    };
    LiftedSolution {
        v,
        objective,
        rank1_gap,
        status,
        iterations,
        warm: next,
    }
}

/// `√λ_max · q` for the leading eigenpair of `V`.
pub fn recover_rank1(v: &CMatrix) -> CVector {
    match leading_eigpair(v) {
        Ok((lam, q)) => q * re(lam.max(0.0).sqrt()),
        Err(_) => CVector::from_element(v.nrows(), re(1.0)),
    }
}

/// Rotates `v̄` so its last entry is real-positive, drops that entry and
/// projects the rest onto the unit circle (zeros map to 1).
pub fn project_phases(vbar: &CVector) -> CVector {
    let m = vbar.len().saturating_sub(1);
    let t = vbar[m];
    let rot = if t.norm() > 0.0 { t.conj() / t.norm() } else { re(1.0) };
    CVector::from_fn(m, |i, _| {
        let z = vbar[i] * rot;
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            re(1.0)
        }
    })
}

/// Unit-modulus descent on `vᴴQv + 2Re(vᴴl)`, the `v`-dependent part of the
/// lifted objective. Each sweep `v ← e^{j∠((λI − Q)v − l)}` with
/// `λ = λ_max(Q)` does not increase it.
pub fn refine_phases(ld: &LiftedData, v: &CVector, iters: usize) -> CVector {
    let m = v.len();
    let q = ld.f0.view((0, 0), (m, m)).into_owned();
    let l: CVector = ld.f0.view((0, m), (m, 1)).column(0).into_owned();
    let lam = hermitian_eig(&q).ok().and_then(|e| e.eigenvalues.last().copied()).unwrap_or(0.0);
    let mut v = v.clone();
    for _ in 0..iters {
        let target = &v * re(lam) - &q * &v - &l;
        v = CVector::from_fn(m, |i, _| {
            let r = target[i].norm();
            if r > 0.0 {
                target[i] / r
            } else {
                v[i]
            }
        });
    }
    v
}

fn cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * FRAC_1_SQRT_2
}

/// Factor `L` with `L Lᴴ = V₊` (negative eigenvalues clipped).
fn psd_factor(v: &CMatrix) -> Option<CMatrix> {
    let eig = hermitian_eig(v).ok()?;
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    Some(l)
}

struct Candidate {
    v: CVector,
    b: CVector,
    mse: f64,
}

struct Context<'a> {
    b: &'a CVector,
    p: &'a [f64],
    ch: &'a ChannelSet,
    sp: &'a SystemParams,
    tol: &'a Tolerances,
    gap_margin: f64,
}

impl Context<'_> {
    fn evaluate(&self, v: CVector) -> Option<Candidate> {
        let hbar = effective_hbar(self.ch, &v).ok()?;
        let mut sol = Solution {
            b: self.b.clone(),
            p: self.p.to_vec(),
            v,
        };
        if !check_feasibility(&sol, &hbar, self.sp, self.tol).feasible {
            sol.b = repair_gaps(self.b, &hbar, self.p, self.sp.p_gap, self.gap_margin)?;
            if !check_feasibility(&sol, &hbar, self.sp, self.tol).feasible {
                return None;
            }
        }
        Some(Candidate {
            mse: mse(&sol.b, &hbar, self.p, self.sp.sigma2),
            v: sol.v,
            b: sol.b,
        })
    }
}

/// One phase update. Returns the old phases with `accepted = false` unless a
/// feasible candidate does not raise the MSE.
#[allow(clippy::too_many_arguments)]
pub fn phase_step<R: Rng + ?Sized>(
    b: &CVector,
    p: &[f64],
    ch: &ChannelSet,
    sp: &SystemParams,
    v_old: &CVector,
    settings: &PhaseSettings,
    tol: &Tolerances,
    warm: Option<&WarmStart>,
    rng: &mut R,
) -> PhaseOutcome {
    let reject = |sdr| PhaseOutcome {
        v: v_old.clone(),
        b: b.clone(),
        accepted: false,
        sdr,
    };
    if ch.m() == 0 {
        return reject(None);
    }
    let old_mse = match effective_hbar(ch, v_old) {
        Ok(h) => mse(b, &h, p, sp.sigma2),
        Err(_) => return reject(None),
    };
    let ld = build_lifted(b, p, ch, sp);
    let sdr = solve_sdr_warm(&ld, &settings.conic, warm);
    if sdr.status == SdrStatus::Infeasible || !sdr.objective.is_finite() {
        return reject(Some(sdr));
    }
    let limit = old_mse + settings.accept_tol;
    let ctx = Context {
        b,
        p,
        ch,
        sp,
        tol,
        gap_margin: settings.gap_margin,
    };

    let first = project_phases(&recover_rank1(&sdr.v));
    if let Some(c) = ctx.evaluate(first) {
        if c.mse <= limit {
            return PhaseOutcome {
                v: c.v,
                b: c.b,
                accepted: true,
                sdr: Some(sdr),
            };
        }
    }

    let mut best: Option<Candidate> = None;
    let mut offer = |c: Option<Candidate>| {
        if let Some(c) = c {
            if best.as_ref().is_none_or(|bst| c.mse < bst.mse) {
                best = Some(c);
            }
        }
    };
    if let Some(l) = psd_factor(&sdr.v) {
        let n = l.nrows();
        for _ in 0..settings.randomizations {
            let z = CVector::from_fn(n, |_, _| cn(rng));
            offer(ctx.evaluate(project_phases(&(&l * z))));
        }
    }
    if settings.refine_iters > 0 {
        offer(ctx.evaluate(refine_phases(&ld, v_old, settings.refine_iters)));
    }
    match best {
        Some(c) if c.mse <= limit => PhaseOutcome {
            v: c.v,
            b: c.b,
            accepted: true,
            sdr: Some(sdr),
        },
        _ => reject(Some(sdr)),
    }
}
