use super::ConeSpec;
use crate::linalg::{psd_project_hermitian, psd_project_real, CMatrix, RMatrix};
use num_complex::Complex64;
use std::f64::consts::SQRT_2;

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)` (either triangle) inside `svec` of an order-`n` matrix.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // column j of the lower triangle starts at Σ_{c<j} (n − c)
    j * n - (j * j.saturating_sub(1)) / 2 + (i - j)
}

pub fn svec(x: &RMatrix) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        out.push(x[(j, j)]);
        for i in (j + 1)..n {
            out.push(SQRT_2 * 0.5 * (x[(i, j)] + x[(j, i)]));
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> RMatrix {
    assert_eq!(v.len(), svec_len(n));
    let mut out = RMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        out[(j, j)] = v[k];
        k += 1;
        for i in (j + 1)..n {
            let val = v[k] / SQRT_2;
            out[(i, j)] = val;
            out[(j, i)] = val;
            k += 1;
        }
    }
    out
}

pub fn hvec_len(n: usize) -> usize {
    n * n
}

/// Positions of `Re X_ij` and `Im X_ij` (`i > j`) inside `hvec` of an
/// order-`n` matrix; for `i == j` both are the diagonal slot.
pub fn hvec_index(n: usize, i: usize, j: usize) -> (usize, usize) {
    assert!(i >= j, "hvec_index takes the lower triangle");
    // column j starts after Σ_{c<j} (2(n − c) − 1) slots
    let start = j * (2 * n - j);
    if i == j {
        (start, start)
    } else {
        let re = start + 1 + 2 * (i - j - 1);
        (re, re + 1)
    }
}

/// Lower triangle of a Hermitian matrix, column by column: `X_jj`, then
/// `√2 Re X_ij, √2 Im X_ij` for `i > j`, so that
/// `⟨hvec X, hvec Y⟩ = Re Tr(XY)`.
pub fn hvec(x: &CMatrix) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(hvec_len(n));
    for j in 0..n {
        out.push(x[(j, j)].re);
        for i in (j + 1)..n {
            let z = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
            out.push(SQRT_2 * z.re);
            out.push(SQRT_2 * z.im);
        }
    }
    out
}

pub fn hmat(v: &[f64], n: usize) -> CMatrix {
    assert_eq!(v.len(), hvec_len(n));
    let mut out = CMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        out[(j, j)] = Complex64::new(v[k], 0.0);
        k += 1;
        for i in (j + 1)..n {
            let z = Complex64::new(v[k], v[k + 1]) / SQRT_2;
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
            k += 2;
        }
    }
    out
}

/// Euclidean projection onto `{(t, z) : ‖z‖ ≤ t}`, in place.
pub fn soc_project(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let t = v[0];
    let znorm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if znorm <= t {
        return;
    }
    if znorm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + znorm);
    v[0] = a;
    let f = a / znorm;
    v[1..].iter_mut().for_each(|x| *x *= f);
}

fn project_blocks(out: &mut [f64], cones: &ConeSpec, zero_to_origin: bool) {
    let mut off = 0;
    if zero_to_origin {
        out[..cones.zero].iter_mut().for_each(|x| *x = 0.0);
    }
    off += cones.zero;
    for x in &mut out[off..off + cones.nonneg] {
        *x = x.max(0.0);
    }
    off += cones.nonneg;
    for &d in &cones.soc {
        soc_project(&mut out[off..off + d]);
        off += d;
    }
    for &n in &cones.psd {
        let d = svec_len(n);
        let m = smat(&out[off..off + d], n);
        let p = psd_project_real(&m);
        out[off..off + d].copy_from_slice(&svec(&p));
        off += d;
    }
    for &n in &cones.hpsd {
        let d = hvec_len(n);
        let p = psd_project_hermitian(&hmat(&out[off..off + d], n));
        out[off..off + d].copy_from_slice(&hvec(&p));
        off += d;
    }
}

/// Blockwise Euclidean projection onto `K`.
pub fn project_cone(s: &[f64], cones: &ConeSpec) -> Vec<f64> {
    assert_eq!(s.len(), cones.dim(), "vector length does not match cone dimension");
    let mut out = s.to_vec();
    project_blocks(&mut out, cones, true);
    out
}

/// Projection onto the dual cone `K*` (the zero cone's dual is free space).
pub fn project_dual_cone(y: &[f64], cones: &ConeSpec) -> Vec<f64> {
    assert_eq!(y.len(), cones.dim(), "vector length does not match cone dimension");
    let mut out = y.to_vec();
    project_blocks(&mut out, cones, false);
    out
}

pub(crate) fn project_in_place(s: &mut [f64], cones: &ConeSpec) {
    project_blocks(s, cones, true);
}
