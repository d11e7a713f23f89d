use super::{hvec_len, svec_len, ConeSpec, ConicProgram, SparseMatrix};

/// Sparse linear form `Σ coef·x[idx]`.
pub type Row = Vec<(usize, f64)>;

/// Assembles a [`ConicProgram`] from constraints stated in natural form.
/// Affine expressions are `(row, constant)` pairs meaning `row·x + constant`.
#[derive(Debug, Clone)]
pub struct ProgramBuilder {
    ncols: usize,
    c: Vec<f64>,
    zero: Vec<(Row, f64)>,
    nonneg: Vec<(Row, f64)>,
    soc: Vec<Vec<(Row, f64)>>,
    psd: Vec<(usize, Vec<(Row, f64)>)>,
    hpsd: Vec<(usize, Vec<(Row, f64)>)>,
}

impl ProgramBuilder {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            c: vec![0.0; ncols],
            zero: Vec::new(),
            nonneg: Vec::new(),
            soc: Vec::new(),
            psd: Vec::new(),
            hpsd: Vec::new(),
        }
    }

    pub fn add_cost(&mut self, j: usize, v: f64) {
        self.c[j] += v;
    }

    /// `row·x = rhs`
    pub fn eq(&mut self, row: Row, rhs: f64) {
        self.zero.push((row, rhs));
    }

    /// `row·x ≥ rhs`
    pub fn geq(&mut self, row: Row, rhs: f64) {
        let neg = row.into_iter().map(|(j, v)| (j, -v)).collect();
        self.nonneg.push((neg, -rhs));
    }

    /// `row·x ≤ rhs`
    pub fn leq(&mut self, row: Row, rhs: f64) {
        self.nonneg.push((row, rhs));
    }

    /// `(e₀, e₁, …)` in the second-order cone `‖(e₁, …)‖ ≤ e₀`.
    pub fn soc(&mut self, exprs: Vec<(Row, f64)>) {
        self.soc.push(exprs);
    }

    /// `smat(e) ⪰ 0`, where `exprs` lists the `svec` entries of an order-`n` matrix.
    pub fn psd(&mut self, n: usize, exprs: Vec<(Row, f64)>) {
        assert_eq!(exprs.len(), svec_len(n));
        self.psd.push((n, exprs));
    }

    /// `hmat(e) ⪰ 0`, where `exprs` lists the `hvec` entries of an order-`n` matrix.
    pub fn hpsd(&mut self, n: usize, exprs: Vec<(Row, f64)>) {
        assert_eq!(exprs.len(), hvec_len(n));
        self.hpsd.push((n, exprs));
    }

    pub fn build(self) -> ConicProgram {
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let mut r = 0;
        // zero/nonneg rows are kept in (A-row, b) form; cone rows hold the
        // affine expression s = row·x + k, i.e. A = −row, b = k.
        let mut push = |row: &Row, rhs: f64, negate: bool, trip: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            for &(j, v) in row {
                trip.push((r, j, if negate { -v } else { v }));
            }
            b.push(rhs);
            r += 1;
        };
        for (row, rhs) in &self.zero {
            push(row, *rhs, false, &mut trip, &mut b);
        }
        for (row, rhs) in &self.nonneg {
            push(row, *rhs, false, &mut trip, &mut b);
        }
        let mut soc_dims = Vec::new();
        for block in &self.soc {
            soc_dims.push(block.len());
            for (row, k) in block {
                push(row, *k, true, &mut trip, &mut b);
            }
        }
        let mut psd_dims = Vec::new();
        for (n, block) in &self.psd {
            psd_dims.push(*n);
            for (row, k) in block {
                push(row, *k, true, &mut trip, &mut b);
            }
        }
        let mut hpsd_dims = Vec::new();
        for (n, block) in &self.hpsd {
            hpsd_dims.push(*n);
            for (row, k) in block {
                push(row, *k, true, &mut trip, &mut b);
            }
        }
        let nrows = b.len();
        ConicProgram {
            c: self.c,
            a: SparseMatrix::from_triplets(nrows, self.ncols, &trip),
            b,
            cones: ConeSpec {
                zero: self.zero.len(),
                nonneg: self.nonneg.len(),
                soc: soc_dims,
                psd: psd_dims,
                hpsd: hpsd_dims,
            },
        }
    }
}
