//! Gated feed-forward block: `h = (x·W_up ⊙ SiLU(x·W_gate))·W_down`.
//!
//! Weights are stored output-major, so neuron `n` of the intermediate
//! dimension is row `n` of `w_gate` and `w_up` and column `n` of `w_down`.

use crate::error::{Error, Result};
use crate::tensor::{hadamard, matmul_t, silu_matrix, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GluLayer {
    /// `[d_ff, d_model]`
    pub w_gate: Matrix,
    /// `[d_ff, d_model]`
    pub w_up: Matrix,
    /// `[d_model, d_ff]`
    pub w_down: Matrix,
}

impl GluLayer {
    pub fn new(w_gate: Matrix, w_up: Matrix, w_down: Matrix) -> Result<Self> {
        let layer = Self {
            w_gate,
            w_up,
            w_down,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Checks the paired-dimension constraint and the down projection's shape.
    pub fn validate(&self) -> Result<()> {
        if self.w_gate.shape() != self.w_up.shape() {
            return Err(Error::Shape {
                op: "glu gate/up pairing",
                left: self.w_gate.shape(),
                right: self.w_up.shape(),
            });
        }
        if self.w_down.rows() != self.w_gate.cols() || self.w_down.cols() != self.w_gate.rows() {
            return Err(Error::Shape {
                op: "glu down projection",
                left: self.w_gate.shape(),
                right: self.w_down.shape(),
            });
        }
        Ok(())
    }

    pub fn d_model(&self) -> usize {
        self.w_gate.cols()
    }

    pub fn d_ff(&self) -> usize {
        self.w_gate.rows()
    }
}

/// Applies the GLU block to each row of `x` (`[n, d_model]`).
pub fn glu_forward(x: &Matrix, layer: &GluLayer) -> Result<Matrix> {
    if x.cols() != layer.d_model() {
        return Err(Error::Shape {
            op: "glu_forward",
            left: x.shape(),
            right: layer.w_gate.shape(),
        });
    }
    let gate = matmul_t(x, &layer.w_gate)?;
    let up = matmul_t(x, &layer.w_up)?;
    let act = hadamard(&up, &silu_matrix(&gate))?;
    matmul_t(&act, &layer.w_down)
}

/// `x / sqrt(mean(x²) + eps) * weight`.
pub fn rmsnorm(x: &[f32], weight: &[f32], eps: f32) -> Vec<f32> {
    let mut ss = 0.0f32;
    for v in x {
        ss += v * v;
    }
    let inv = 1.0 / (ss / x.len() as f32 + eps).sqrt();
    x.iter().zip(weight).map(|(v, w)| v * inv * w).collect()
}

/// Row-wise [`rmsnorm`].
pub fn rmsnorm_rows(x: &Matrix, weight: &[f32], eps: f32) -> Result<Matrix> {
    if weight.len() != x.cols() {
        return Err(Error::Shape {
            op: "rmsnorm",
            left: x.shape(),
            right: (1, weight.len()),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for row in x.row_iter() {
        data.extend(rmsnorm(row, weight, eps));
    }
    Matrix::new(x.rows(), x.cols(), data)
}
