//! Dense row-major matrix storage and the handful of kernels the model needs.
//!
//! Everything is `f64`; shapes are checked with debug assertions since all
//! callers are internal and sizes come from a validated layout.

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// y = w · x  for a (out × in) weight slice stored row-major.
#[inline]
pub fn linear(w: &[f64], n_out: usize, n_in: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), n_out * n_in);
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(y.len(), n_out);
    for o in 0..n_out {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = 0.0;
        for i in 0..n_in {
            acc += row[i] * x[i];
        }
        y[o] = acc;
    }
}

/// dx += wᵀ · dy  (backward of `linear` with respect to the input).
#[inline]
pub fn linear_back_input(w: &[f64], n_out: usize, n_in: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), n_out * n_in);
    for o in 0..n_out {
        let g = dy[o];
        if g == 0.0 {
            continue;
        }
        let row = &w[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            dx[i] += row[i] * g;
        }
    }
}

/// dw += dy ⊗ x  (backward of `linear` with respect to the weights).
#[inline]
pub fn linear_back_weight(dw: &mut [f64], n_out: usize, n_in: usize, dy: &[f64], x: &[f64]) {
    debug_assert_eq!(dw.len(), n_out * n_in);
    for o in 0..n_out {
        let g = dy[o];
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            row[i] += g * x[i];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// Softmax in place with max-subtraction so finite inputs give finite outputs.
pub fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Backward of softmax: given outputs `p` and upstream gradient `dp`,
/// writes the gradient with respect to the logits into `dlogit`.
///
/// dlogit_i = p_i (dp_i − Σ_j p_j dp_j)
pub fn softmax_backward(p: &[f64], dp: &[f64], dlogit: &mut [f64]) {
    debug_assert_eq!(p.len(), dp.len());
    debug_assert_eq!(p.len(), dlogit.len());
    let inner = dot(p, dp);
    for i in 0..p.len() {
        dlogit[i] = p[i] * (dp[i] - inner);
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
