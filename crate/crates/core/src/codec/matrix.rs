//! Dense row-major `f64` matrices and the handful of kernels the codec needs.
//! Every reduction runs in a fixed order so results are reproducible.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Stacks `f32` rows into a batch. Panics if rows differ in length.
    pub fn from_f32_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged batch");
            data.extend(r.iter().map(|&v| v as f64));
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_f32(&self, i: usize) -> Vec<f32> {
        self.row(i).iter().map(|&v| v as f32).collect()
    }
}

/// `x · w + b` with `w` stored `in × out` row-major.
pub(crate) fn affine(x: &Matrix, w: &[f64], b: &[f64]) -> Matrix {
    let (n_in, n_out) = (x.cols, b.len());
    debug_assert_eq!(w.len(), n_in * n_out);
    let mut out = Matrix::zeros(x.rows, n_out);
    for i in 0..x.rows {
        let xr = x.row(i);
        let orow = &mut out.data[i * n_out..(i + 1) * n_out];
        orow.copy_from_slice(b);
        for (kk, &a) in xr.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wr = &w[kk * n_out..(kk + 1) * n_out];
            for (o, &wv) in orow.iter_mut().zip(wr) {
                *o += a * wv;
            }
        }
    }
    out
}

/// Backward pass of [`affine`]. Accumulates into `dw`, `db` and returns the
/// input gradient when `want_dx` is set.
pub(crate) fn affine_backward(
    x: &Matrix,
    w: &[f64],
    dy: &Matrix,
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Option<Matrix> {
    let (n_in, n_out) = (x.cols, dy.cols);
    for i in 0..x.rows {
        let dyr = dy.row(i);
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        for (kk, &a) in x.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let dwr = &mut dw[kk * n_out..(kk + 1) * n_out];
            for (d, &g) in dwr.iter_mut().zip(dyr) {
                *d += a * g;
            }
        }
    }
    if !want_dx {
        return None;
    }
    let mut dx = Matrix::zeros(x.rows, n_in);
    for i in 0..x.rows {
        let dyr = dy.row(i);
        let dxr = &mut dx.data[i * n_in..(i + 1) * n_in];
        for (kk, d) in dxr.iter_mut().enumerate() {
            let wr = &w[kk * n_out..(kk + 1) * n_out];
            let mut acc = 0.0;
            for (&g, &wv) in dyr.iter().zip(wr) {
                acc += g * wv;
            }
            *d = acc;
        }
    }
    Some(dx)
}

pub(crate) fn relu_in_place(m: &mut Matrix) {
    for v in &mut m.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub(crate) fn relu_backward_in_place(grad: &mut Matrix, pre: &Matrix) {
    for (g, &p) in grad.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}
