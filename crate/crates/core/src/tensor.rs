//! Dense row-major `f32` matrices and the handful of kernels the GLU and
//! attention code needs.
//!
//! Every reduction accumulates in `f32` starting from `+0.0` and walks the
//! inner index in ascending order, so two calls on equal inputs agree bit for
//! bit regardless of how rows are grouped into blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision of a tensor at the I/O boundary. Arithmetic is always f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataKind {
    F32,
    BF16,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::F32 => "F32",
            DataKind::BF16 => "BF16",
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DataKind::F32 => 4,
            DataKind::BF16 => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(DataKind::F32),
            "BF16" => Some(DataKind::BF16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keeps the listed rows, in order.
    pub fn gather_rows(&self, keep: &[usize]) -> Result<Matrix> {
        check_keep(keep, self.rows, "row")?;
        let mut data = Vec::with_capacity(keep.len() * self.cols);
        for &r in keep {
            data.extend_from_slice(self.row(r));
        }
        Matrix::new(keep.len(), self.cols, data)
    }

    /// Keeps the listed columns, in order.
    pub fn gather_cols(&self, keep: &[usize]) -> Result<Matrix> {
        check_keep(keep, self.cols, "column")?;
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for row in self.row_iter() {
            data.extend(keep.iter().map(|&c| row[c]));
        }
        Matrix::new(self.rows, keep.len(), data)
    }
}

fn check_keep(keep: &[usize], bound: usize, what: &str) -> Result<()> {
    if keep.is_empty() {
        return Err(Error::Index(format!("{what} keep list is empty")));
    }
    for pair in keep.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Index(format!(
                "{what} indices must be strictly ascending, found {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let last = keep[keep.len() - 1];
    if last >= bound {
        return Err(Error::Index(format!(
            "{what} index {last} out of range for size {bound}"
        )));
    }
    Ok(())
}

/// Standard product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0f32; n * m];
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Matrix::new(n, m, out)
}

/// `a · bᵀ` where `b` is stored output-major (`[out, in]`), the layout of
/// every projection weight in this crate.
///
/// Rows of `a` are processed four at a time so each weight row is loaded once
/// per block; each output element is still a single ascending-order dot
/// product, so results do not depend on the blocking.
pub fn matmul_t(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_t",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = vec![0.0f32; n * m];
    let mut i = 0;
    while i + 8 <= n {
        row_block::<8>(&a.data, &b.data, i, k, m, &mut out);
        i += 8;
    }
    while i + 4 <= n {
        row_block::<4>(&a.data, &b.data, i, k, m, &mut out);
        i += 4;
    }
    for i in i..n {
        let ar = &a.data[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] = dot(ar, &b.data[j * k..(j + 1) * k]);
        }
    }
    Matrix::new(n, m, out)
}

/// `R` rows of `a·bᵀ` starting at row `i`. Each output keeps its own
/// accumulator, so results match [`dot`] bit for bit.
fn row_block<const R: usize>(a: &[f32], b: &[f32], i: usize, k: usize, m: usize, out: &mut [f32]) {
    // Interleave the rows so the inner loop reads one `[f32; R]` per step.
    let mut inter = vec![0.0f32; k * R];
    for r in 0..R {
        for (p, &v) in a[(i + r) * k..(i + r + 1) * k].iter().enumerate() {
            inter[p * R + r] = v;
        }
    }
    let (cols, _) = inter.as_chunks::<R>();
    let mut j = 0;
    while j + 4 <= m {
        let acc = block_dot::<R, 4>(cols, b, j, k);
        for (c, col) in acc.iter().enumerate() {
            for r in 0..R {
                out[(i + r) * m + j + c] = col[r];
            }
        }
        j += 4;
    }
    for j in j..m {
        let [col] = block_dot::<R, 1>(cols, b, j, k);
        for r in 0..R {
            out[(i + r) * m + j] = col[r];
        }
    }
}

/// Dot products of the interleaved rows with weight rows `j..j + C`.
#[cfg(target_arch = "x86_64")]
fn block_dot<const R: usize, const C: usize>(cols: &[[f32; R]], b: &[f32], j: usize, k: usize) -> [[f32; R]; C] {
    use std::arch::x86_64::{__m128, _mm_add_ps, _mm_loadu_ps, _mm_mul_ps, _mm_set1_ps, _mm_setzero_ps, _mm_storeu_ps};
    const { assert!(R.is_multiple_of(4) && R <= 8) };
    let w: [&[f32]; C] = std::array::from_fn(|c| &b[(j + c) * k..(j + c + 1) * k]);
    let mut out = [[0.0f32; R]; C];
    // Lanewise mul then add, the same two roundings as the scalar path.
    // SAFETY: SSE is part of the x86_64 baseline; every load and store
    // touches lanes 4l..4l+4 of an R-element array with 4(l + 1) <= R, and
    // `p < k` indexes each length-k weight row.
    unsafe {
        let mut acc = [[_mm_setzero_ps(); 2]; C];
        for (p, x) in cols.iter().enumerate() {
            let xv: [__m128; 2] = std::array::from_fn(|l| if 4 * l < R { _mm_loadu_ps(x.as_ptr().add(4 * l)) } else { _mm_setzero_ps() });
            for c in 0..C {
                let wv = _mm_set1_ps(*w[c].get_unchecked(p));
                for (a, xl) in acc[c].iter_mut().zip(xv).take(R / 4) {
                    *a = _mm_add_ps(*a, _mm_mul_ps(xl, wv));
                }
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            for (l, v) in a.into_iter().enumerate().take(R / 4) {
                _mm_storeu_ps(o.as_mut_ptr().add(4 * l), v);
            }
        }
    }
    out
}

#[cfg(not(target_arch = "x86_64"))]
fn block_dot<const R: usize, const C: usize>(cols: &[[f32; R]], b: &[f32], j: usize, k: usize) -> [[f32; R]; C] {
    let mut out = [[0.0f32; R]; C];
    for (c, acc) in out.iter_mut().enumerate() {
        let w = &b[(j + c) * k..(j + c + 1) * k];
        for (x, &wv) in cols.iter().zip(w) {
            for r in 0..R {
                acc[r] += x[r] * wv;
            }
        }
    }
    out
}

/// Ascending-order dot product starting from `+0.0`.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · σ(x)`.
pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

pub fn silu_matrix(m: &Matrix) -> Matrix {
    m.map(silu)
}

pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "hadamard",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Matrix::new(a.rows, a.cols, data)
}

pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "add",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Matrix::new(a.rows, a.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let i = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(matmul(&i, &b).unwrap(), b);
        let row = m(&[&[1.0, 2.0]]);
        let col = m(&[&[3.0], &[4.0]]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_dimension_error_names_shapes() {
        let a = Matrix::zeros(2, 3).unwrap();
        let b = Matrix::zeros(2, 3).unwrap();
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn matmul_t_matches_matmul_on_transpose() {
        // 5 rows exercises both the 4-row block and the remainder path.
        let a = Matrix::new(5, 3, (0..15).map(|v| v as f32 * 0.5 - 2.0).collect()).unwrap();
        let b = Matrix::new(2, 3, vec![1.0, -1.0, 2.0, 0.5, 0.25, -3.0]).unwrap();
        let bt = Matrix::new(3, 2, vec![1.0, 0.5, -1.0, 0.25, 2.0, -3.0]).unwrap();
        assert_eq!(matmul_t(&a, &b).unwrap(), matmul(&a, &bt).unwrap());
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(1.0) - 0.731_058_6).abs() < 1e-7);
        let v = silu(-20.0);
        assert!(v < 0.0 && (v + 4.122_307e-8).abs() < 1e-12, "{v}");
        assert!(silu(-1000.0) == 0.0);
    }

    #[test]
    fn hadamard_cases() {
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[3.0, 4.0]]);
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[3.0, 8.0]);
        let z = Matrix::zeros(1, 2).unwrap();
        assert!(hadamard(&a, &z).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(hadamard(&a, &Matrix::zeros(2, 1).unwrap()).is_err());
    }

    #[test]
    fn gather_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.gather_rows(&[0, 1, 2]).unwrap(), a);
        assert_eq!(a.gather_rows(&[0, 2]).unwrap(), m(&[&[1.0, 2.0], &[5.0, 6.0]]));
        assert_eq!(a.gather_cols(&[1]).unwrap().data(), &[2.0, 4.0, 6.0]);
        assert!(a.gather_rows(&[0, 3]).is_err());
        assert!(a.gather_rows(&[2, 1]).is_err());
        assert!(a.gather_rows(&[1, 1]).is_err());
        assert!(a.gather_cols(&[2]).is_err());
    }

    #[test]
    fn constructor_invariants() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
