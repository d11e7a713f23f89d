/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed; explicit zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        };
        m.prune();
        m
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let mut trip = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols);
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows.len(), ncols, &trip)
    }

    fn prune(&mut self) {
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.values.iter()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `out = Aᵀ y`
    pub fn tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate().take(self.nrows) {
            if yi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[j] += v * yi;
            }
        }
    }

    /// `A ← diag(d) A diag(e)`
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= d[i] * e[self.col_idx[k]];
            }
        }
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
            .collect()
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.ncols];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            out[j] = out[j].max(v.abs());
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }
}
