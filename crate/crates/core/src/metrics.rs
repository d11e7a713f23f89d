//! MSE, SIC rates and constraint residuals.
//!
//! All functions assume devices are already relabelled in decoding order, so
//! device `k` is interfered with by devices `k+1..K`.

use crate::linalg::CVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} must be positive and finite (got {1})")]
    NotPositive(&'static str, f64),
    #[error("{0} must be nonnegative and finite (got {1})")]
    Negative(&'static str, f64),
}

/// Linear-unit system constants. With QoS disabled `r_min_bps` and
/// `gamma_min` are both zero, which makes every QoS row vacuous.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub sigma2: f64,
    pub bandwidth_hz: f64,
    pub r_min_bps: f64,
    pub gamma_min: f64,
    pub p_gap: f64,
    pub p_max: f64,
}

pub fn gamma_from_rate(r_min_bps: f64, bandwidth_hz: f64) -> f64 {
    (r_min_bps / bandwidth_hz).exp2() - 1.0
}

impl SystemParams {
    pub fn new(sigma2: f64, bandwidth_hz: f64, r_min_bps: f64, p_gap: f64, p_max: f64) -> Result<Self, MetricsError> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(MetricsError::NotPositive(name, v))
            }
        };
        positive("sigma2", sigma2)?;
        positive("bandwidth_hz", bandwidth_hz)?;
        positive("p_gap", p_gap)?;
        positive("p_max", p_max)?;
        if !(r_min_bps >= 0.0 && r_min_bps.is_finite()) {
            return Err(MetricsError::Negative("r_min_bps", r_min_bps));
        }
        Ok(Self {
            sigma2,
            bandwidth_hz,
            r_min_bps,
            gamma_min: gamma_from_rate(r_min_bps, bandwidth_hz),
            p_gap,
            p_max,
        })
    }

    pub fn without_qos(&self) -> Self {
        Self {
            r_min_bps: 0.0,
            gamma_min: 0.0,
            ..self.clone()
        }
    }

    pub fn qos_enabled(&self) -> bool {
        self.gamma_min > 0.0
    }
}

/// Receive beamformer, transmit powers (W) and IRS phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub b: CVector,
    pub p: Vec<f64>,
    pub v: CVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack on `p_k ≤ P_max`.
    pub power_rel: f64,
    /// Absolute slack on `R_k ≥ R_min`, bps.
    pub rate_bps: f64,
    /// Absolute slack on the SIC gap residuals.
    pub gap_abs: f64,
    /// Slack on `|v_m| = 1`.
    pub phase: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            power_rel: 1e-6,
            rate_bps: 1e-3,
            gap_abs: 1e-6,
            phase: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `R_k − R_min`, bps.
    pub qos_residuals: Vec<f64>,
    pub gap_residuals: Vec<f64>,
    pub power_ok: bool,
    pub phase_ok: bool,
    pub feasible: bool,
}

/// `bᴴ h̄_k` for every device.
pub fn gains(b: &CVector, hbar: &[CVector]) -> Vec<Complex64> {
    hbar.iter().map(|h| b.dotc(h)).collect()
}

pub fn mse(b: &CVector, hbar: &[CVector], p: &[f64], sigma2: f64) -> f64 {
    let misfit: f64 = gains(b, hbar)
        .iter()
        .zip(p)
        .map(|(g, &pk)| (g * pk.sqrt() - 1.0).norm_sqr())
        .sum();
    misfit + b.norm_squared() * sigma2
}

fn cn(rng: &mut impl Rng, var: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (FRAC_1_SQRT_2 * var.sqrt())
}

/// Sample mean of `|ŝ − s|²` with `ŝ = bᴴ(Σ h̄_k √p_k s_k + n)`, and its
/// standard error.
pub fn mse_monte_carlo<R: Rng + ?Sized>(
    b: &CVector,
    hbar: &[CVector],
    p: &[f64],
    sigma2: f64,
    n_samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n_samples = n_samples.max(1);
    let nr = b.len();
    let mut rng = rng;
    let mut received = CVector::zeros(nr);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..nr {
            received[i] = cn(&mut rng, sigma2);
        }
        for (h, &pk) in hbar.iter().zip(p) {
            let sk = cn(&mut rng, 1.0);
            s += sk;
            received.axpy(sk * pk.sqrt(), h, Complex64::new(1.0, 0.0));
        }
        let err = (b.dotc(&received) - s).norm_sqr();
        sum += err;
        sum_sq += err * err;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// Received powers `|bᴴ h̄_k|² p_k`.
pub fn received_powers(b: &CVector, hbar: &[CVector], p: &[f64]) -> Vec<f64> {
    gains(b, hbar).iter().zip(p).map(|(g, pk)| g.norm_sqr() * pk).collect()
}

/// SIC interference seen by every device: `Σ_{k'>k}` of the received powers.
fn tail_sums(rx: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rx.len()];
    let mut acc = 0.0;
    for k in (0..rx.len()).rev() {
        out[k] = acc;
        acc += rx[k];
    }
    out
}

pub fn sinrs(b: &CVector, hbar: &[CVector], p: &[f64], sigma2: f64) -> Vec<f64> {
    let rx = received_powers(b, hbar, p);
    let noise = b.norm_squared() * sigma2;
    tail_sums(&rx).iter().zip(&rx).map(|(i, s)| s / (i + noise)).collect()
}

pub fn rates(b: &CVector, hbar: &[CVector], p: &[f64], sigma2: f64, bandwidth_hz: f64) -> Vec<f64> {
    sinrs(b, hbar, p, sigma2).iter().map(|s| bandwidth_hz * s.ln_1p() / std::f64::consts::LN_2).collect()
}

pub fn rate(k: usize, b: &CVector, hbar: &[CVector], p: &[f64], sigma2: f64, bandwidth_hz: f64) -> f64 {
    rates(b, hbar, p, sigma2, bandwidth_hz)[k]
}

/// `|bᴴh̄_k|² p_k − Σ_{k'>k} |bᴴh̄_{k'}|² p_{k'} − p_gap` for `k < K`.
pub fn gap_residuals(b: &CVector, hbar: &[CVector], p: &[f64], p_gap: f64) -> Vec<f64> {
    let rx = received_powers(b, hbar, p);
    let tails = tail_sums(&rx);
    (0..rx.len().saturating_sub(1)).map(|k| rx[k] - tails[k] - p_gap).collect()
}

/// SINR rows in linear form, `|bᴴh̄_k|² p_k − γ(Σ_{k'>k} … + ‖b‖²σ²)`.
pub fn sinr_residuals(b: &CVector, hbar: &[CVector], p: &[f64], sp: &SystemParams) -> Vec<f64> {
    let rx = received_powers(b, hbar, p);
    let noise = b.norm_squared() * sp.sigma2;
    tail_sums(&rx).iter().zip(&rx).map(|(t, s)| s - sp.gamma_min * (t + noise)).collect()
}

pub fn check_feasibility(sol: &Solution, hbar: &[CVector], sp: &SystemParams, tol: &Tolerances) -> FeasibilityReport {
    let qos_residuals: Vec<f64> = rates(&sol.b, hbar, &sol.p, sp.sigma2, sp.bandwidth_hz)
        .iter()
        .map(|r| r - sp.r_min_bps)
        .collect();
    let gap_residuals = gap_residuals(&sol.b, hbar, &sol.p, sp.p_gap);
    let power_ok = sol.p.iter().all(|&p| p > 0.0 && p <= sp.p_max * (1.0 + tol.power_rel));
    let phase_ok = sol.v.iter().all(|z| (z.norm() - 1.0).abs() <= tol.phase);
    let finite = sol.b.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let feasible = finite
        && power_ok
        && phase_ok
        && qos_residuals.iter().all(|&r| r >= -tol.rate_bps)
        && gap_residuals.iter().all(|&r| r >= -tol.gap_abs);
    FeasibilityReport {
        qos_residuals,
        gap_residuals,
        power_ok,
        phase_ok,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn scalar_examples() {
        let hbar = vec![CVector::from_element(1, c(1.0))];
        assert!((mse(&CVector::from_element(1, c(0.5)), &hbar, &[1.0], 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(mse(&CVector::zeros(1), &[hbar[0].clone(), hbar[0].clone()], &[1.0, 2.0], 1.0), 2.0);
        let r = rate(0, &CVector::from_element(1, c(1.0)), &hbar, &[1.0], 1.0, 1.0);
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_example() {
        let hbar = vec![CVector::from_element(1, c(2.0)), CVector::from_element(1, c(1.0))];
        let b = CVector::from_element(1, c(1.0));
        assert_eq!(gap_residuals(&b, &hbar, &[1.0, 1.0], 1.0), vec![2.0]);
        assert!(gap_residuals(&b, &hbar[..1], &[1.0], 1.0).is_empty());
    }

    #[test]
    fn gamma_constant() {
        let sp = SystemParams::new(1e-11, 2e6, 0.5e6, 0.01, 1.0).unwrap();
        assert!((sp.gamma_min - (2f64.powf(0.25) - 1.0)).abs() < 1e-12);
        assert!((sp.gamma_min - 0.189207).abs() < 1e-6);
        assert!(SystemParams::new(-1.0, 2e6, 0.5e6, 0.01, 1.0).is_err());
    }
}
