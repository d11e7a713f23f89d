#![allow(dead_code)]

use airfl::channel::ChannelSet;
use airfl::linalg::{CMatrix, CVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| cn(rng) * scale)
}

pub fn unit_phases<R: Rng>(m: usize, rng: &mut R) -> CVector {
    CVector::from_fn(m, |_, _| Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
}

/// Unit-scale random channels.
pub fn random_channels<R: Rng>(k: usize, nr: usize, m: usize, rng: &mut R) -> ChannelSet {
    ChannelSet {
        h: (0..k).map(|_| cvec(nr, 1.0, rng)).collect(),
        g: (0..k).map(|_| cvec(m, 1.0, rng)).collect(),
        irs_bs: CMatrix::from_fn(m, nr, |_, _| cn(rng) * 0.5),
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}
