//! Geometry, fading realizations and the effective device→BS channels.
//!
//! Every random entry is drawn from its own ChaCha stream keyed by
//! `(link, row)`, so a realization with more antennas or more reflecting
//! elements extends the smaller one instead of replacing it.

use crate::linalg::{CMatrix, CVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("zero distance between {0} and {1}")]
    ZeroDistance(&'static str, String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("phase entry {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_pos: Point3,
    pub irs_pos: Point3,
    pub device_pos: Vec<Point3>,
}

impl Geometry {
    pub fn k(&self) -> usize {
        self.device_pos.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingParams {
    pub rician_factor_direct: f64,
    pub rician_factor_irs_bs: f64,
    pub pathloss_exp_direct: f64,
    pub pathloss_exp_device_irs: f64,
    pub pathloss_exp_irs_bs: f64,
    pub ref_gain_db: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            rician_factor_direct: 3.0,
            rician_factor_irs_bs: 3.0,
            pathloss_exp_direct: 3.5,
            pathloss_exp_device_irs: 2.2,
            pathloss_exp_irs_bs: 2.2,
            ref_gain_db: -30.0,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, e) in [
            ("pathloss_exp_direct", self.pathloss_exp_direct),
            ("pathloss_exp_device_irs", self.pathloss_exp_device_irs),
            ("pathloss_exp_irs_bs", self.pathloss_exp_irs_bs),
        ] {
            if !(1.5..=6.0).contains(&e) {
                return Err(ChannelError::InvalidParameter(format!("{name} = {e} outside [1.5, 6]")));
            }
        }
        for (name, k) in [
            ("rician_factor_direct", self.rician_factor_direct),
            ("rician_factor_irs_bs", self.rician_factor_irs_bs),
        ] {
            if !k.is_finite() || k < 0.0 {
                return Err(ChannelError::InvalidParameter(format!("{name} = {k} must be finite and ≥ 0")));
            }
        }
        if !self.ref_gain_db.is_finite() {
            return Err(ChannelError::InvalidParameter("ref_gain_db must be finite".into()));
        }
        Ok(())
    }

    /// Linear power gain `ref_gain · d^(−exp)`.
    pub fn pathloss(&self, d: f64, exp: f64) -> f64 {
        10f64.powf(self.ref_gain_db / 10.0) * d.powf(-exp)
    }
}

/// One fading realization. `h[k]` has `Nr` entries, `g[k]` has `M` entries
/// and `irs_bs` is `M × Nr`. With `M = 0` the IRS legs are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CVector>,
    pub g: Vec<CVector>,
    pub irs_bs: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    pub hbar: Vec<CVector>,
    /// `order[i]` is the (0-based) original index of the `i`-th decoded device.
    pub order: Vec<usize>,
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sample_geometry<R: Rng + ?Sized>(k: usize, area_side: f64, bs_pos: Point3, irs_pos: Point3, rng: &mut R) -> Geometry {
    let device_pos = (0..k)
        .map(|_| {
            let x: f64 = rng.random::<f64>() * area_side;
            let y: f64 = rng.random::<f64>() * area_side;
            [x, y, 0.0]
        })
        .collect();
    Geometry {
        bs_pos,
        irs_pos,
        device_pos,
    }
}

/// Point at 3-D distance `dist` from `bs` at height `height`, on the vertical
/// plane through `bs` and `toward`. Falls back to directly above/below the BS
/// when `dist` is shorter than the height difference.
pub fn point_along(bs: Point3, toward: Point3, height: f64, dist: f64) -> Point3 {
    let dz = height - bs[2];
    let horiz = (dist * dist - dz * dz).max(0.0).sqrt();
    let (ux, uy) = (toward[0] - bs[0], toward[1] - bs[1]);
    let n = (ux * ux + uy * uy).sqrt();
    let (ux, uy) = if n > 0.0 { (ux / n, uy / n) } else { (1.0, 0.0) };
    [bs[0] + horiz * ux, bs[1] + horiz * uy, height]
}

fn cn01(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Direction cosine of `to − from` along the array axis (x), i.e. `sin θ`
/// measured from broadside.
fn axis_cosine(from: &Point3, to: &Point3) -> f64 {
    let d = distance(from, to);
    (to[0] - from[0]) / d
}

/// `(√(κ/(1+κ)), √(1/(1+κ)))`, with the pure line-of-sight limit for κ = ∞.
fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        return (1.0, 0.0);
    }
    ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
}

fn steering(n: usize, s: f64) -> Complex64 {
    Complex64::from_polar(1.0, PI * n as f64 * s)
}

#[derive(Clone, Copy)]
enum Link {
    Direct = 1,
    DeviceIrs = 2,
    IrsBs = 3,
}

fn stream(base: u64, link: Link, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((link as u64) << 32) | row as u64);
    rng
}

fn check_distance(what: &'static str, who: String, d: f64) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::ZeroDistance(what, who));
    }
    Ok(d)
}

/// Draws one realization. `base_seed` keys all per-entry streams.
pub fn sample_channels(
    geom: &Geometry,
    fading: &FadingParams,
    nr: usize,
    m: usize,
    base_seed: u64,
) -> Result<ChannelSet, ChannelError> {
    if nr == 0 {
        return Err(ChannelError::Dimension("Nr must be at least 1".into()));
    }
    let mut h = Vec::with_capacity(geom.k());
    let mut g = Vec::with_capacity(geom.k());

    let (los_d, nlos_d) = rician_weights(fading.rician_factor_direct);
    for (k, dev) in geom.device_pos.iter().enumerate() {
        let d = check_distance("device", format!("{k} and BS"), distance(dev, &geom.bs_pos))?;
        let amp = fading.pathloss(d, fading.pathloss_exp_direct).sqrt();
        let s = axis_cosine(&geom.bs_pos, dev);
        let mut rng = stream(base_seed, Link::Direct, k);
        h.push(CVector::from_fn(nr, |n, _| amp * (los_d * steering(n, s) + nlos_d * cn01(&mut rng))));

        if m > 0 {
            let d = check_distance("device", format!("{k} and IRS"), distance(dev, &geom.irs_pos))?;
            let amp = fading.pathloss(d, fading.pathloss_exp_device_irs).sqrt();
            let mut rng = stream(base_seed, Link::DeviceIrs, k);
            g.push(CVector::from_fn(m, |_, _| amp * cn01(&mut rng)));
        } else {
            g.push(CVector::zeros(0));
        }
    }

    let irs_bs = if m > 0 {
        let d = check_distance("IRS", "BS".into(), distance(&geom.irs_pos, &geom.bs_pos))?;
        let amp = fading.pathloss(d, fading.pathloss_exp_irs_bs).sqrt();
        let (los, nlos) = rician_weights(fading.rician_factor_irs_bs);
        let s_irs = axis_cosine(&geom.irs_pos, &geom.bs_pos);
        let s_bs = axis_cosine(&geom.bs_pos, &geom.irs_pos);
        let mut out = CMatrix::zeros(m, nr);
        for row in 0..m {
            let mut rng = stream(base_seed, Link::IrsBs, row);
            for col in 0..nr {
                let los_entry = steering(row, s_irs) * steering(col, s_bs).conj();
                out[(row, col)] = amp * (los * los_entry + nlos * cn01(&mut rng));
            }
        }
        out
    } else {
        CMatrix::zeros(0, nr)
    };
    Ok(ChannelSet { h, g, irs_bs })
}

impl ChannelSet {
    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn nr(&self) -> usize {
        self.h.first().map_or(self.irs_bs.ncols(), |h| h.len())
    }

    pub fn m(&self) -> usize {
        self.irs_bs.nrows()
    }

    /// Same realization with the IRS removed.
    pub fn without_irs(&self) -> Self {
        Self {
            h: self.h.clone(),
            g: vec![CVector::zeros(0); self.k()],
            irs_bs: CMatrix::zeros(0, self.nr()),
        }
    }

    /// `D_k = Gᴴ diag(g_k)`, the `Nr × M` map from phases to the reflected path.
    pub fn cascade(&self, k: usize) -> CMatrix {
        let mut d = self.irs_bs.adjoint();
        for (j, gj) in self.g[k].iter().enumerate() {
            for i in 0..d.nrows() {
                d[(i, j)] *= gj;
            }
        }
        d
    }

    /// Reorders devices so that device `i` of the result is `order[i]` here.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            h: order.iter().map(|&k| self.h[k].clone()).collect(),
            g: order.iter().map(|&k| self.g[k].clone()).collect(),
            irs_bs: self.irs_bs.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let nr = self.nr();
        let m = self.m();
        if self.irs_bs.ncols() != nr {
            return Err(ChannelError::Dimension(format!("G has {} columns, expected {nr}", self.irs_bs.ncols())));
        }
        if self.g.len() != self.h.len() {
            return Err(ChannelError::Dimension("h and g device counts differ".into()));
        }
        for (k, (h, g)) in self.h.iter().zip(&self.g).enumerate() {
            if h.len() != nr || g.len() != m {
                return Err(ChannelError::Dimension(format!(
                    "device {k}: h has {} entries (want {nr}), g has {} (want {m})",
                    h.len(),
                    g.len()
                )));
            }
        }
        Ok(())
    }
}

/// Tolerance on `|v_m| = 1`.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;

pub fn check_unit_modulus(v: &CVector) -> Result<(), ChannelError> {
    for (index, z) in v.iter().enumerate() {
        let modulus = z.norm();
        if (modulus - 1.0).abs() > UNIT_MODULUS_TOL {
            return Err(ChannelError::NotUnitModulus { index, modulus });
        }
    }
    Ok(())
}

/// `h̄_k = h_k + Gᴴ diag(v) g_k`, without the modulus check.
pub fn effective_hbar(ch: &ChannelSet, v: &CVector) -> Result<Vec<CVector>, ChannelError> {
    if v.len() != ch.m() {
        return Err(ChannelError::Dimension(format!("v has {} entries, IRS has {}", v.len(), ch.m())));
    }
    let gh = ch.irs_bs.adjoint();
    Ok(ch
        .h
        .iter()
        .zip(&ch.g)
        .map(|(h, g)| {
            if ch.m() == 0 {
                return h.clone();
            }
            let theta_g = g.component_mul(v);
            h + &gh * theta_g
        })
        .collect())
}

pub fn effective_channel(ch: &ChannelSet, v: &CVector) -> Result<EffectiveChannels, ChannelError> {
    ch.validate()?;
    check_unit_modulus(v)?;
    let hbar = effective_hbar(ch, v)?;
    let order = sic_order(&hbar);
    Ok(EffectiveChannels { hbar, order })
}

/// Descending `‖h̄_k‖²`; equal norms keep the lower index first.
pub fn sic_order(hbar: &[CVector]) -> Vec<usize> {
    let norms: Vec<f64> = hbar.iter().map(|h| h.norm_squared()).collect();
    let mut order: Vec<usize> = (0..hbar.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order
}
