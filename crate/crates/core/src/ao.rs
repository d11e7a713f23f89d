//! Alternating optimization over `(b, p, v)`.
//!
//! Each outer iteration runs the beamforming, power and phase steps in turn.
//! A step's output is kept only if it is feasible and does not raise the MSE;
//! for `b` and `p` the step is otherwise retried along the segment towards the
//! current point (`x + θ(x_new − x)`, `θ = ½, ¼, …`).

use crate::beamforming::{
    build_quadforms, lagrangian_matrix, matched_sum, mmse_step, repair_gaps, ridge, solve_beamforming, BeamError,
    BeamSettings, DualState,
};
use crate::channel::{effective_hbar, sic_order, ChannelError, ChannelSet};
use crate::conic::WarmStart;
use crate::linalg::{leading_eigpair, solve_hpd, CMatrix, CVector};
use crate::metrics::{check_feasibility, gap_residuals, mse, rates, Solution, SystemParams, Tolerances};
use crate::phase::{phase_step, PhaseSettings, SdrStatus};
use crate::power::{build_power_program, solve_power, PowerSettings, PowerStatus};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AoError {
    #[error("no feasible initial point after {0} attempts")]
    NoFeasiblePoint(usize),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Beam(#[from] BeamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoSettings {
    pub t0_max: usize,
    pub eps0: f64,
    pub init_retries: usize,
    /// Halvings tried when a `b` or `p` update is rejected.
    pub backtrack_steps: usize,
    /// Ladder ratios tried during initialization are `2^(−i/ladder_density)`.
    pub ladder_density: usize,
    pub ladder_steps: usize,
    /// Relative slack restored on the SIC gap rows after the beamforming step.
    pub gap_margin: f64,
    /// Fixed-point sweeps when aligning the initial phases.
    pub align_iters: usize,
    /// With QoS disabled, also start from the solution of the same trial
    /// with QoS enabled.
    pub seed_from_qos: bool,
}

impl Default for AoSettings {
    fn default() -> Self {
        Self {
            t0_max: 40,
            eps0: 1e-5,
            init_retries: 50,
            backtrack_steps: 6,
            ladder_density: 4,
            ladder_steps: 80,
            gap_margin: 1e-5,
            align_iters: 100,
            seed_from_qos: true,
        }
    }
}

/// Per-step solver settings used inside the loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSettings {
    pub beamforming: BeamSettings,
    pub power: PowerSettings,
    pub phase: PhaseSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accepted {
    pub beam: bool,
    pub power: bool,
    pub phase: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub mse: f64,
    pub min_rate_bps: f64,
    pub feasible: bool,
    pub accepted: Accepted,
    /// Iterations of the conic solver spent on the relaxation, 0 without IRS.
    pub sdr_iterations: usize,
}

pub type MseTrace = Vec<TraceRecord>;

/// Feasible starting point together with the decoding order it fixes.
#[derive(Debug, Clone)]
pub struct Initial {
    /// Original device index of each decoded position.
    pub order: Vec<usize>,
    /// Channels relabelled in decoding order.
    pub channels: ChannelSet,
    pub solution: Solution,
    /// Random phase draws used; 0 for the aligned phases.
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct AoOutcome {
    pub solution: Solution,
    pub trace: MseTrace,
    pub converged: bool,
}

pub fn random_phases<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector {
    CVector::from_fn(m, |_, _| Complex64::from_polar(1.0, rng.random::<f64>() * TAU))
}

fn ladder(k: usize, p_max: f64, r: f64) -> Vec<f64> {
    (0..k).map(|i| p_max * r.powi(i as i32)).collect()
}

fn zero_dual_mmse(hbar: &[CVector], p: &[f64], sp: &SystemParams, beam: &BeamSettings) -> Result<CVector, BeamError> {
    let qf = build_quadforms(hbar, p, sp)?;
    let r = ridge(&qf, p, sp.sigma2, beam.reg);
    mmse_step(&qf, &DualState::zeros(hbar.len()), hbar, p, sp.sigma2, r)
}

/// Regularized receiver whose gains approach `targets` at full power:
/// `b = (Σ_k p_k h̄_k h̄_kᴴ + σ²I)⁻¹ Σ_k √p_k t_k h̄_k`.
fn target_mmse(hbar: &[CVector], p: &[f64], targets: &[f64], sp: &SystemParams, beam: &BeamSettings) -> Result<CVector, BeamError> {
    let qf = build_quadforms(hbar, p, sp)?;
    let mut m: CMatrix = lagrangian_matrix(&qf, &DualState::zeros(hbar.len()), p, sp.sigma2);
    let r = ridge(&qf, p, sp.sigma2, beam.reg);
    for i in 0..m.nrows() {
        m[(i, i)] += Complex64::new(r, 0.0);
    }
    let weighted: Vec<f64> = p.iter().zip(targets).map(|(pk, t)| pk * t * t).collect();
    Ok(solve_hpd(&m, &matched_sum(hbar, &weighted))?)
}

/// Phases that locally maximize `Σ_k ‖h̄_k‖² / E‖h̄_k‖²`, the expectation
/// taken over uniform phases. Starts from the leading eigenvector of the
/// lifted form and applies `v̄ ← e^{j∠(Q v̄)}`, which never decreases it.
pub fn aligned_phases(ch: &ChannelSet, iters: usize) -> CVector {
    let m = ch.m();
    let mut q = CMatrix::zeros(m + 1, m + 1);
    let gh = ch.irs_bs.adjoint();
    for (h, g) in ch.h.iter().zip(&ch.g) {
        // [D_k h_k] with D_k = Gᴴ diag(g_k)
        let mut a = CMatrix::zeros(ch.nr(), m + 1);
        for j in 0..m {
            a.set_column(j, &(gh.column(j) * g[j]));
        }
        a.set_column(m, h);
        let w = a.norm_squared();
        if w > 0.0 {
            q += a.adjoint() * a / Complex64::new(w, 0.0);
        }
    }
    let mut vbar = CVector::from_element(m + 1, Complex64::new(1.0, 0.0));
    if let Ok((_, top)) = leading_eigpair(&q) {
        vbar = unit(&top);
    }
    for _ in 0..iters {
        vbar = unit(&(&q * &vbar));
    }
    let t = vbar[m];
    CVector::from_fn(m, |i, _| vbar[i] * t.conj())
}

fn unit(z: &CVector) -> CVector {
    z.map(|c| if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) })
}

/// Feasible starts for fixed phases `v`: one per ladder, the power ladder
/// with the zero-dual MMSE receiver and the gain ladder at full power. A rung
/// must satisfy the SIC gaps with a 3 dB margin.
fn ladder_starts(
    ch: &ChannelSet,
    v: &CVector,
    sp: &SystemParams,
    settings: &AoSettings,
    beam: &BeamSettings,
    tol: &Tolerances,
    attempts: usize,
) -> Result<Vec<(f64, Initial)>, AoError> {
    let k = ch.k();
    let order = sic_order(&effective_hbar(ch, v)?);
    let channels = ch.permuted(&order);
    let hbar = effective_hbar(&channels, v)?;
    let density = settings.ladder_density.max(1) as f64;
    let full = vec![sp.p_max; k];
    let mut found = Vec::new();
    for by_gain in [false, true] {
        for step in 0..=settings.ladder_steps {
            let r = (-(step as f64) / density).exp2();
            let (p, b) = if by_gain {
                let t = ladder(k, 1.0, r);
                (full.clone(), target_mmse(&hbar, &full, &t, sp, beam))
            } else {
                let p = ladder(k, sp.p_max, r);
                let b = zero_dual_mmse(&hbar, &p, sp, beam);
                (p, b)
            };
            let Ok(b) = b else { continue };
            if !gap_residuals(&b, &hbar, &p, 2.0 * sp.p_gap).iter().all(|&g| g >= 0.0) {
                continue;
            }
            let solution = Solution { b, p, v: v.clone() };
            if check_feasibility(&solution, &hbar, sp, tol).feasible {
                let m = mse(&solution.b, &hbar, &solution.p, sp.sigma2);
                found.push((
                    m,
                    Initial {
                        order: order.clone(),
                        channels: channels.clone(),
                        solution,
                        attempts,
                    },
                ));
                break;
            }
        }
    }
    Ok(found)
}

/// Every feasible start, by increasing MSE. Random phases are redrawn until
/// one draw yields a start; with an IRS the aligned phases are tried too.
pub fn initial_candidates<R: Rng + ?Sized>(
    ch: &ChannelSet,
    sp: &SystemParams,
    settings: &AoSettings,
    beam: &BeamSettings,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<Vec<Initial>, AoError> {
    ch.validate()?;
    let mut found = Vec::new();
    for attempt in 1..=settings.init_retries.max(1) {
        let v = random_phases(ch.m(), rng);
        let starts = ladder_starts(ch, &v, sp, settings, beam, tol, attempt)?;
        if !starts.is_empty() {
            found.extend(starts);
            break;
        }
    }
    if ch.m() > 0 {
        let v = aligned_phases(ch, settings.align_iters);
        found.extend(ladder_starts(ch, &v, sp, settings, beam, tol, 0)?);
    }
    if found.is_empty() {
        return Err(AoError::NoFeasiblePoint(settings.init_retries.max(1)));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found.into_iter().map(|(_, s)| s).collect())
}

/// Lowest-MSE start from [`initial_candidates`].
pub fn initialize_feasible<R: Rng + ?Sized>(
    ch: &ChannelSet,
    sp: &SystemParams,
    settings: &AoSettings,
    beam: &BeamSettings,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<Initial, AoError> {
    Ok(initial_candidates(ch, sp, settings, beam, tol, rng)?.swap_remove(0))
}

struct State<'a> {
    sp: &'a SystemParams,
    tol: &'a Tolerances,
    hbar: Vec<CVector>,
    sol: Solution,
    mse: f64,
}

impl State<'_> {
    fn feasible_mse(&self, b: &CVector, p: &[f64]) -> Option<f64> {
        let sol = Solution {
            b: b.clone(),
            p: p.to_vec(),
            v: self.sol.v.clone(),
        };
        check_feasibility(&sol, &self.hbar, self.sp, self.tol)
            .feasible
            .then(|| mse(b, &self.hbar, p, self.sp.sigma2))
    }

    fn min_rate(&self) -> f64 {
        rates(&self.sol.b, &self.hbar, &self.sol.p, self.sp.sigma2, self.sp.bandwidth_hz)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn feasible(&self) -> bool {
        check_feasibility(&self.sol, &self.hbar, self.sp, self.tol).feasible
    }
}

/// Tries `new`, then points closer to `cur`; returns the first feasible one
/// whose MSE does not exceed `limit`.
fn backtrack<T, F, G>(cur: &T, new: &T, steps: usize, limit: f64, mix: G, mut score: F) -> Option<(T, f64)>
where
    F: FnMut(&T) -> Option<f64>,
    G: Fn(&T, &T, f64) -> T,
{
    let mut theta = 1.0;
    for _ in 0..=steps {
        let cand = mix(cur, new, theta);
        if let Some(m) = score(&cand) {
            if m <= limit {
                return Some((cand, m));
            }
        }
        theta *= 0.5;
    }
    None
}

/// Runs the safeguarded loop from a feasible point. `ch` must be in decoding order.
#[allow(clippy::too_many_arguments)]
pub fn alternate<R: Rng + ?Sized>(
    ch: &ChannelSet,
    start: &Solution,
    sp: &SystemParams,
    settings: &AoSettings,
    steps: &StepSettings,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<AoOutcome, AoError> {
    let hbar = effective_hbar(ch, &start.v)?;
    let mse0 = mse(&start.b, &hbar, &start.p, sp.sigma2);
    let mut st = State {
        sp,
        tol,
        hbar,
        sol: start.clone(),
        mse: mse0,
    };
    let mut trace = vec![TraceRecord {
        iter: 0,
        mse: st.mse,
        min_rate_bps: st.min_rate(),
        feasible: st.feasible(),
        accepted: Accepted::default(),
        sdr_iterations: 0,
    }];
    let mut dual = DualState::zeros(ch.k());
    let mut warm: Option<WarmStart> = None;
    let mut converged = false;

    for iter in 1..=settings.t0_max {
        let prev = st.mse;
        let mut accepted = Accepted::default();
        let mut sdr_iterations = 0;
        let mut sdr_capped = false;

        // receive beamformer
        match solve_beamforming(&st.hbar, &st.sol.p, sp, &steps.beamforming, &dual, &st.sol.b) {
            Ok(res) => {
                dual = res.dual;
                let p = st.sol.p.clone();
                let cand = repair_gaps(&res.b, &st.hbar, &p, sp.p_gap, settings.gap_margin).unwrap_or(res.b);
                let found = backtrack(
                    &st.sol.b,
                    &cand,
                    settings.backtrack_steps,
                    st.mse,
                    |c, n, t| c + (n - c) * Complex64::new(t, 0.0),
                    |b| st.feasible_mse(b, &p),
                );
                if let Some((b, m)) = found {
                    st.sol.b = b;
                    st.mse = m;
                    accepted.beam = true;
                }
            }
            Err(e) => log::debug!("beamforming step failed: {e}"),
        }

        // transmit powers
        let prog = build_power_program(&st.sol.b, &st.hbar, sp, &steps.power);
        let ps = solve_power(&prog, &steps.power);
        if ps.status != PowerStatus::Infeasible && ps.p.iter().all(|x| x.is_finite()) {
            let b = st.sol.b.clone();
            let found = backtrack(
                &st.sol.p,
                &ps.p,
                settings.backtrack_steps,
                st.mse,
                |c, n, t| c.iter().zip(n).map(|(a, b)| a + t * (b - a)).collect::<Vec<f64>>(),
                |p| st.feasible_mse(&b, p),
            );
            if let Some((p, m)) = found {
                st.sol.p = p;
                st.mse = m;
                accepted.power = true;
            }
        }

        // IRS phases
        if ch.m() > 0 {
            let out = phase_step(&st.sol.b, &st.sol.p, ch, sp, &st.sol.v, &steps.phase, tol, warm.as_ref(), rng);
            if let Some(sdr) = &out.sdr {
                sdr_iterations = sdr.iterations;
                sdr_capped = !out.accepted && sdr.status == SdrStatus::MaxIter;
                if let Some(w) = &sdr.warm {
                    warm = Some(w.clone());
                }
            }
            if out.accepted {
                let hbar = effective_hbar(ch, &out.v)?;
                let m = mse(&out.b, &hbar, &st.sol.p, sp.sigma2);
                st.sol.b = out.b;
                st.sol.v = out.v;
                st.hbar = hbar;
                st.mse = m;
                accepted.phase = true;
            }
        }

        trace.push(TraceRecord {
            iter,
            mse: st.mse,
            min_rate_bps: st.min_rate(),
            feasible: st.feasible(),
            accepted,
            sdr_iterations,
        });
        // a rejected phase step from an unfinished relaxation is not a stationary point
        if (prev - st.mse).abs() <= settings.eps0 && !sdr_capped {
            converged = true;
            break;
        }
    }
    Ok(AoOutcome {
        solution: st.sol,
        trace,
        converged,
    })
}
