//! Operator-splitting (ADMM) iteration.
//!
//! Each iteration solves one linear system with the cached factor of
//! `σI + ÂᵀRÂ`, relaxes, projects onto the cone and updates the dual. The
//! problem is equilibrated first (Ruiz scaling of `A`, uniform inside each
//! SOC/PSD block, plus scalar scaling of `b` and `c`); all reported values are
//! unscaled. Certificates of infeasibility are read off the successive
//! differences of the iterates.

use super::cones::{project_dual_cone, project_in_place};
use super::linsys::KktSolver;
use super::{
    dot, inf_norm, ConeSpec, ConicError, ConicProgram, ConicSettings, ConicSolution, ConicStatus, Residuals,
    SparseMatrix, WarmStart,
};

const ZERO_ROW_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

struct Scaled {
    a: SparseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    b_scale: f64,
    c_scale: f64,
}

impl Scaled {
    fn new(prog: &ConicProgram, iters: usize) -> Self {
        let m = prog.b.len();
        let n = prog.c.len();
        let mut a = prog.a.clone();
        let mut d = vec![1.0; m];
        let mut e = vec![1.0; n];
        let blocks = prog.cones.blocks();
        for _ in 0..iters {
            let rn = a.row_inf_norms();
            let cn = a.col_inf_norms();
            let mut dr: Vec<f64> = rn.iter().map(|&r| if r > 0.0 { (1.0 / r.sqrt()).clamp(1e-4, 1e4) } else { 1.0 }).collect();
            for &(start, len) in &blocks {
                let block_max = rn[start..start + len].iter().fold(0.0f64, |acc, &r| acc.max(r));
                let f = if block_max > 0.0 { (1.0 / block_max.sqrt()).clamp(1e-4, 1e4) } else { 1.0 };
                dr[start..start + len].iter_mut().for_each(|x| *x = f);
            }
            let ec: Vec<f64> = cn.iter().map(|&c| if c > 0.0 { (1.0 / c.sqrt()).clamp(1e-4, 1e4) } else { 1.0 }).collect();
            a.scale(&dr, &ec);
            d.iter_mut().zip(&dr).for_each(|(x, f)| *x *= f);
            e.iter_mut().zip(&ec).for_each(|(x, f)| *x *= f);
        }
        let mut b: Vec<f64> = prog.b.iter().zip(&d).map(|(b, d)| b * d).collect();
        let mut c: Vec<f64> = prog.c.iter().zip(&e).map(|(c, e)| c * e).collect();
        let scale_of = |v: &[f64]| {
            let nrm = inf_norm(v);
            if nrm > 0.0 {
                (1.0 / nrm).clamp(1e-4, 1e4)
            } else {
                1.0
            }
        };
        let b_scale = scale_of(&b);
        let c_scale = scale_of(&c);
        b.iter_mut().for_each(|x| *x *= b_scale);
        c.iter_mut().for_each(|x| *x *= c_scale);
        Self {
            a,
            b,
            c,
            d,
            e,
            b_scale,
            c_scale,
        }
    }

    fn unscale(&self, x: &[f64], s: &[f64], y_admm: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xo = x.iter().zip(&self.e).map(|(x, e)| x * e / self.b_scale).collect();
        let so = s.iter().zip(&self.d).map(|(s, d)| s / (d * self.b_scale)).collect();
        // the ADMM multiplier lives in the polar cone; the reported dual is its negative
        let yo = y_admm.iter().zip(&self.d).map(|(y, d)| -y * d / self.c_scale).collect();
        (xo, so, yo)
    }

    fn scale_in(&self, w: &WarmStart) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = w.x.iter().zip(&self.e).map(|(x, e)| x * self.b_scale / e).collect();
        let s = w.s.iter().zip(&self.d).map(|(s, d)| s * d * self.b_scale).collect();
        let y = w.y.iter().zip(&self.d).map(|(y, d)| -y * self.c_scale / d).collect();
        (x, s, y)
    }
}

fn row_rho(cones: &ConeSpec, m: usize, rho: f64) -> Vec<f64> {
    (0..m).map(|i| if i < cones.zero { rho * ZERO_ROW_RHO_FACTOR } else { rho }).collect()
}

fn breakdown(prog: &ConicProgram, iterations: usize) -> ConicSolution {
    let n = prog.c.len();
    let m = prog.b.len();
    ConicSolution {
        x: vec![f64::NAN; n],
        s: vec![f64::NAN; m],
        y: vec![f64::NAN; m],
        status: ConicStatus::MaxIter,
        residuals: Residuals {
            primal: f64::NAN,
            dual: f64::NAN,
            gap: f64::NAN,
        },
        iterations,
        objective: f64::NAN,
        rho: f64::NAN,
    }
}

pub fn solve_conic(prog: &ConicProgram, settings: &ConicSettings) -> Result<ConicSolution, ConicError> {
    solve_conic_warm(prog, settings, None)
}

/// Same as [`solve_conic`], starting from `warm` when its dimensions match.
pub fn solve_conic_warm(
    prog: &ConicProgram,
    settings: &ConicSettings,
    warm: Option<&WarmStart>,
) -> Result<ConicSolution, ConicError> {
    prog.validate()?;
    let n = prog.c.len();
    let m = prog.b.len();
    let cones = &prog.cones;
    let sc = Scaled::new(prog, settings.scaling_iters);
    let warm = warm.filter(|w| {
        w.x.len() == n && w.s.len() == m && w.y.len() == m && w.rho.is_finite() && w.rho > 0.0
    });

    let mut rho = warm.map_or(settings.rho, |w| w.rho.clamp(RHO_MIN, RHO_MAX));
    let mut rvec = row_rho(cones, m, rho);
    let Some(mut kkt) = KktSolver::factor(&sc.a, &rvec, settings.sigma) else {
        return Ok(breakdown(prog, 0));
    };

    let alpha = settings.alpha;
    let sigma = settings.sigma;
    let (mut x, mut s, mut y) = match warm {
        Some(w) => sc.scale_in(w),
        None => (vec![0.0; n], vec![0.0; m], vec![0.0; m]),
    };
    let mut x_prev = x.clone();
    let mut y_prev = y.clone();

    let mut tmp_m = vec![0.0; m];
    let mut ax = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut aty = vec![0.0; n];

    let check = settings.check_interval.max(1);
    let adapt_every = check * 5;
    let mut last = None;

    for k in 1..=settings.max_iter {
        let is_check = k % check == 0 || k == settings.max_iter;
        if is_check {
            x_prev.copy_from_slice(&x);
            y_prev.copy_from_slice(&y);
        }

        for i in 0..m {
            tmp_m[i] = rvec[i] * (sc.b[i] - s[i]) + y[i];
        }
        sc.a.tmul_vec(&tmp_m, &mut rhs);
        for j in 0..n {
            rhs[j] += sigma * x[j] - sc.c[j];
        }
        let xt = kkt.solve(&rhs);
        sc.a.mul_vec(&xt, &mut ax);
        for j in 0..n {
            x[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let s_tilde = sc.b[i] - ax[i];
            let relaxed = alpha * s_tilde + (1.0 - alpha) * s[i];
            tmp_m[i] = relaxed + y[i] / rvec[i];
        }
        s.copy_from_slice(&tmp_m);
        project_in_place(&mut s, cones);
        for i in 0..m {
            y[i] = rvec[i] * (tmp_m[i] - s[i]);
        }

        if !is_check {
            continue;
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Ok(breakdown(prog, k));
        }

        let (xo, so, yo) = sc.unscale(&x, &s, &y);
        let res = prog.residuals(&xo, &so, &yo);
        if res.primal <= settings.eps && res.dual <= settings.eps && res.gap <= settings.eps {
            let objective = dot(&prog.c, &xo);
            return Ok(ConicSolution {
                x: xo,
                s: so,
                y: yo,
                status: ConicStatus::Optimal,
                residuals: res,
                iterations: k,
                objective,
                rho,
            });
        }

        if k >= settings.infeasibility_grace {
            if let Some(cert) = primal_infeasibility(&sc, cones, &y, &y_prev, settings.infeasibility_tol) {
                if res.primal > settings.eps {
                    let (xo, so, _) = sc.unscale(&x, &s, &y);
                    let yo = cert.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
                    return Ok(ConicSolution {
                        objective: dot(&prog.c, &xo),
                        x: xo,
                        s: so,
                        y: yo,
                        status: ConicStatus::Infeasible,
                        residuals: res,
                        iterations: k,
                        rho,
                    });
                }
            }
            if let Some(cert) = dual_infeasibility(&sc, cones, &x, &x_prev, settings.infeasibility_tol) {
                if res.dual > settings.eps {
                    let xo: Vec<f64> = cert.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
                    let (_, so, yo) = sc.unscale(&x, &s, &y);
                    return Ok(ConicSolution {
                        objective: f64::NEG_INFINITY,
                        x: xo,
                        s: so,
                        y: yo,
                        status: ConicStatus::Unbounded,
                        residuals: res,
                        iterations: k,
                        rho,
                    });
                }
            }
        }

        if settings.adaptive_rho && k % adapt_every == 0 {
            sc.a.mul_vec(&x, &mut ax);
            let rp_err = (0..m).map(|i| (ax[i] + s[i] - sc.b[i]).abs()).fold(0.0, f64::max);
            let rp_den = inf_norm(&ax).max(inf_norm(&s)).max(inf_norm(&sc.b)).max(1e-10);
            sc.a.tmul_vec(&y, &mut aty);
            let rd_err = aty.iter().zip(&sc.c).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            let rd_den = inf_norm(&aty).max(inf_norm(&sc.c)).max(1e-10);
            let (rp, rd) = (rp_err / rp_den, rd_err / rd_den);
            if rp > 0.0 && rd > 0.0 {
                let ratio = (rp / rd).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    if new_rho != rho {
                        let new_rvec = row_rho(cones, m, new_rho);
                        if let Some(f) = KktSolver::factor(&sc.a, &new_rvec, sigma) {
                            rho = new_rho;
                            rvec = new_rvec;
                            kkt = f;
                        }
                    }
                }
            }
        }
        last = Some((xo, so, yo, res, k));
    }

    let Some((xo, so, yo, res, k)) = last else {
        return Ok(breakdown(prog, settings.max_iter));
    };
    Ok(ConicSolution {
        objective: dot(&prog.c, &xo),
        x: xo,
        s: so,
        y: yo,
        status: ConicStatus::MaxIter,
        residuals: res,
        iterations: k,
        rho,
    })
}

/// `w = −δy / (−b̂ᵀ(−δy))`, accepted when `Âᵀw ≈ 0` and `w ∈ K*`.
fn primal_infeasibility(sc: &Scaled, cones: &ConeSpec, y: &[f64], y_prev: &[f64], tol: f64) -> Option<Vec<f64>> {
    let dz: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| -(a - b)).collect();
    let bz = dot(&sc.b, &dz);
    if !(bz < 0.0) || inf_norm(&dz) == 0.0 {
        return None;
    }
    let w: Vec<f64> = dz.iter().map(|v| v / -bz).collect();
    let mut atw = vec![0.0; sc.c.len()];
    sc.a.tmul_vec(&w, &mut atw);
    let proj = project_dual_cone(&w, cones);
    let cone_gap = w.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (inf_norm(&atw) <= tol && cone_gap <= tol).then_some(w)
}

/// `w = δx / (−ĉᵀδx)`, accepted when `−Âw ∈ K` within tolerance.
fn dual_infeasibility(sc: &Scaled, cones: &ConeSpec, x: &[f64], x_prev: &[f64], tol: f64) -> Option<Vec<f64>> {
    let dx: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let cx = dot(&sc.c, &dx);
    if !(cx < 0.0) || inf_norm(&dx) == 0.0 {
        return None;
    }
    let w: Vec<f64> = dx.iter().map(|v| v / -cx).collect();
    let mut aw = vec![0.0; sc.b.len()];
    sc.a.mul_vec(&w, &mut aw);
    aw.iter_mut().for_each(|v| *v = -*v);
    let mut proj = aw.clone();
    project_in_place(&mut proj, cones);
    let cone_gap = aw.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (cone_gap <= tol).then_some(w)
}
