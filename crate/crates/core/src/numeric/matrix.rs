use alloc::vec::Vec;
use core::fmt;

use super::NumericError;
use crate::math;

/// Dense row-major matrix of `f64`.
///
/// Constructors that take caller data validate the length and finiteness of
/// the entries. Arithmetic returns fresh values; a `Matrix` is never mutated
/// behind a shared reference.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries((0..self.rows).map(|r| self.row(r)))
            .finish()
    }
}

impl Matrix {
    /// Checked constructor.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(NumericError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    /// Unchecked-finiteness constructor for values computed in-crate.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericError::RaggedRows {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// A `1 x n` matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    /// A `1 x 1` matrix.
    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, alloc::vec![value])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_vec(rows, cols, alloc::vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// The single entry of a `1 x 1` matrix.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.shape() == (1, 1)).then(|| self.data[0])
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<(), NumericError> {
        if self.shape() != other.shape() {
            return Err(NumericError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = alloc::vec![0.0; n * m];
        // i-k-j order keeps the inner loop contiguous in both operands.
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_vec(n, m, out))
    }

    pub fn transpose(&self) -> Self {
        let mut out = alloc::vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self::from_vec(self.cols, self.rows, out)
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericError> {
        self.same_shape(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumericError> {
        self.same_shape(other, "sub")?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self, NumericError> {
        self.same_shape(other, "hadamard")?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &Self) -> Result<Self, NumericError> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(NumericError::ShapeMismatch {
                op: "add_row",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, b) in out.data[r * self.cols..(r + 1) * self.cols]
                .iter_mut()
                .zip(&row.data)
            {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_vec(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > 0.0 { x } else { 0.0 })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.data.clone();
        for r in 0..self.rows {
            let row = &mut out[r * self.cols..(r + 1) * self.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = math::exp(*x - max);
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Self::from_vec(self.rows, self.cols, out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column-wise mean as a `1 x cols` row; zeros when there are no rows.
    pub fn mean_rows(&self) -> Self {
        let mut out = alloc::vec![0.0; self.cols];
        if self.rows == 0 {
            return Self::from_vec(1, self.cols, out);
        }
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        let n = self.rows as f64;
        out.iter_mut().for_each(|x| *x /= n);
        Self::from_vec(1, self.cols, out)
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat_cols(&self, other: &Self) -> Result<Self, NumericError> {
        if self.rows != other.rows {
            return Err(NumericError::ShapeMismatch {
                op: "concat_cols",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Self::from_vec(self.rows, cols, data))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self, NumericError> {
        if start > end || end > self.cols {
            return Err(NumericError::ColumnRange {
                start,
                end,
                cols: self.cols,
            });
        }
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Self::from_vec(self.rows, end - start, data))
    }

    /// Vertical concatenation of matrices sharing a column count.
    pub fn stack_rows(parts: &[&Self]) -> Result<Self, NumericError> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(NumericError::ShapeMismatch {
                    op: "stack_rows",
                    left: (rows, cols),
                    right: m.shape(),
                });
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Self::from_vec(rows, cols, data))
    }

    /// Gathers rows by index; indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, NumericError> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(NumericError::RowIndex {
                    index: i,
                    rows: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self::from_vec(indices.len(), self.cols, data))
    }

    /// Largest absolute elementwise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-sparse matrix used as a fixed left operand (graph propagation,
/// token averaging). Each row lists `(column, weight)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    /// # Panics
    /// If any column index is out of range.
    pub fn new(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &rows {
            for &(c, _) in row {
                assert!(c < cols, "sparse column {c} out of range {cols}");
            }
        }
        Self { cols, rows }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols)
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    /// `self · dense`.
    pub fn mul_dense(&self, dense: &Matrix) -> Result<Matrix, NumericError> {
        if dense.rows() != self.cols {
            return Err(NumericError::ShapeMismatch {
                op: "sparse_matmul",
                left: self.shape(),
                right: dense.shape(),
            });
        }
        let m = dense.cols();
        let mut out = alloc::vec![0.0; self.rows.len() * m];
        for (r, row) in self.rows.iter().enumerate() {
            let o = &mut out[r * m..(r + 1) * m];
            for &(c, w) in row {
                for (x, d) in o.iter_mut().zip(dense.row(c)) {
                    *x += w * d;
                }
            }
        }
        Ok(Matrix::from_vec(self.rows.len(), m, out))
    }

    /// `selfᵀ · dense`.
    pub fn transpose_mul_dense(&self, dense: &Matrix) -> Result<Matrix, NumericError> {
        if dense.rows() != self.rows.len() {
            return Err(NumericError::ShapeMismatch {
                op: "sparse_transpose_matmul",
                left: self.shape(),
                right: dense.shape(),
            });
        }
        let m = dense.cols();
        let mut out = alloc::vec![0.0; self.cols * m];
        for (r, row) in self.rows.iter().enumerate() {
            let g = dense.row(r);
            for &(c, w) in row {
                for (x, d) in out[c * m..(c + 1) * m].iter_mut().zip(g) {
                    *x += w * d;
                }
            }
        }
        Ok(Matrix::from_vec(self.cols, m, out))
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                let v = m.get(r, c);
                m.set(r, c, v + w);
            }
        }
        m
    }
}
