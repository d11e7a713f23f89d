//! Transmit-power step as a second-order cone program.
//!
//! With `b` fixed the MSE is `Σ_k a_k p_k − 2 c_k √p_k + const`, where
//! `a_k = |bᴴh̄_k|²` and `c_k = Re(bᴴh̄_k)`. Substituting `η_k` for `√p_k`
//! and relaxing `η_k² = p_k` to `η_k² ≤ p_k` gives
//!
//! ```text
//! minimize    Σ_k a_k p_k − 2 c_k η_k
//! subject to  gap rows, SINR rows (linear in p), p_floor ≤ p_k ≤ P_max,
//!             η_k ≥ 0,  ‖(2η_k, p_k − 1)‖ ≤ p_k + 1
//! ```
//!
//! The cone is stated on `p̃ = p/P_max`, `η̃ = η/√P_max` so that its data is
//! of unit scale.

use crate::conic::{solve_conic, ConicProgram, ConicSettings, ConicStatus, ProgramBuilder};
use crate::linalg::CVector;
use crate::metrics::{gains, SystemParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSettings {
    /// Relative slack demanded on the gap and SINR rows.
    pub margin: f64,
    pub p_floor: f64,
    /// Replace the returned `p` by `η²`.
    pub tighten: bool,
    pub conic: ConicSettings,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            margin: 1e-5,
            p_floor: 1e-12,
            tighten: false,
            conic: ConicSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerProgram {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub p_max: f64,
    pub program: ConicProgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub p: Vec<f64>,
    pub eta: Vec<f64>,
    /// `Σ a_k p_k − 2 c_k η_k` in physical units.
    pub objective: f64,
    pub status: PowerStatus,
}

/// `Σ a_k p_k − 2 c_k η_k`.
pub fn power_objective(a: &[f64], c: &[f64], p: &[f64], eta: &[f64]) -> f64 {
    (0..a.len()).map(|k| a[k] * p[k] - 2.0 * c[k] * eta[k]).sum()
}

pub fn build_power_program(b: &CVector, hbar: &[CVector], sp: &SystemParams, settings: &PowerSettings) -> PowerProgram {
    let g = gains(b, hbar);
    let a: Vec<f64> = g.iter().map(|z| z.norm_sqr()).collect();
    let c: Vec<f64> = g.iter().map(|z| z.re).collect();
    power_program_from_coefficients(a, c, b.norm_squared() * sp.sigma2, sp, settings)
}

/// Same program from raw coefficients; `noise` is `‖b‖²σ²`.
pub fn power_program_from_coefficients(
    a: Vec<f64>,
    c: Vec<f64>,
    noise: f64,
    sp: &SystemParams,
    settings: &PowerSettings,
) -> PowerProgram {
    let k = a.len();
    let pm = sp.p_max;
    let sq = pm.sqrt();
    let pv = |i: usize| i;
    let ev = |i: usize| k + i;

    let mut pb = ProgramBuilder::new(2 * k);
    for i in 0..k {
        pb.add_cost(pv(i), a[i] * pm);
        pb.add_cost(ev(i), -2.0 * c[i] * sq);
    }

    for i in 0..k.saturating_sub(1) {
        // (P_max/p_gap)(a_i p̃_i − Σ_{j>i} a_j p̃_j) ≥ 1 + margin
        let s = pm / sp.p_gap;
        let mut row = vec![(pv(i), s * a[i])];
        row.extend(((i + 1)..k).map(|j| (pv(j), -s * a[j])));
        pb.geq(row, 1.0 + settings.margin);
    }
    if sp.gamma_min > 0.0 {
        for i in 0..k {
            // a_i p_i − γ Σ_{j>i} a_j p_j ≥ γ‖b‖²σ², normalized by its right-hand side
            let rhs = sp.gamma_min * noise;
            let s = pm / rhs;
            let mut row = vec![(pv(i), s * a[i])];
            row.extend(((i + 1)..k).map(|j| (pv(j), -s * sp.gamma_min * a[j])));
            pb.geq(row, 1.0 + settings.margin);
        }
    }
    let floor = (settings.p_floor / pm).min(1.0);
    for i in 0..k {
        pb.leq(vec![(pv(i), 1.0)], 1.0);
        pb.geq(vec![(pv(i), 1.0)], floor);
        pb.geq(vec![(ev(i), 1.0)], 0.0);
    }
    for i in 0..k {
        pb.soc(vec![
            (vec![(pv(i), 1.0)], 1.0),
            (vec![(ev(i), 2.0)], 0.0),
            (vec![(pv(i), 1.0)], -1.0),
        ]);
    }
    PowerProgram {
        a,
        c,
        p_max: pm,
        program: pb.build(),
    }
}

pub fn solve_power(prog: &PowerProgram, settings: &PowerSettings) -> PowerSolution {
    let k = prog.a.len();
    let sq = prog.p_max.sqrt();
    let sol = match solve_conic(&prog.program, &settings.conic) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("power program rejected: {e}");
            return PowerSolution {
                p: vec![f64::NAN; k],
                eta: vec![f64::NAN; k],
                objective: f64::NAN,
                status: PowerStatus::MaxIter,
            };
        }
    };
    let status = match sol.status {
        ConicStatus::Optimal => PowerStatus::Optimal,
        ConicStatus::Infeasible => PowerStatus::Infeasible,
        ConicStatus::Unbounded | ConicStatus::MaxIter => PowerStatus::MaxIter,
    };
    let floor = settings.p_floor;
    let mut p: Vec<f64> = (0..k).map(|i| (sol.x[i] * prog.p_max).clamp(floor, prog.p_max)).collect();
    // pull η back onto η² ≤ p after the first-order solve
    let eta: Vec<f64> = (0..k).map(|i| (sol.x[k + i] * sq).clamp(0.0, p[i].sqrt())).collect();
    if status == PowerStatus::Optimal {
        for i in 0..k {
            if prog.c[i] > 0.0 {
                let rel = (eta[i] * eta[i] - p[i]).abs() / p[i].max(f64::MIN_POSITIVE);
                if rel > 1e-5 {
                    log::warn!("relaxation not tight for device {i}: η² = {:.6e}, p = {:.6e}", eta[i] * eta[i], p[i]);
                }
            }
        }
        if settings.tighten {
            p = eta.iter().map(|e| (e * e).clamp(floor, prog.p_max)).collect();
        }
    }
    PowerSolution {
        objective: power_objective(&prog.a, &prog.c, &p, &eta),
        p,
        eta,
        status,
    }
}
