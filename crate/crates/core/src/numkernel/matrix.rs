use std::fmt;
use std::ops::{Index, IndexMut};

use num_traits::Float;

use super::KernelError;

/// Scalar types the kernel supports.
pub trait Real: Float + Default + fmt::Debug + Send + Sync + std::iter::Sum + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self, KernelError> {
        if values.len() != rows * cols {
            return Err(KernelError::DimensionMismatch {
                op: "Matrix::from_vec",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Matrix { rows, cols, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// Position of the first NaN or infinite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn squared_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    pub fn fill(&mut self, value: T) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Matrix<T>, scale: T) -> Result<(), KernelError> {
        if self.shape() != other.shape() {
            return Err(KernelError::DimensionMismatch {
                op: "Matrix::add_scaled",
                expected: self.len(),
                actual: other.len(),
            });
        }
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + scale * b;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix<T> {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `y = selfᵀ · dy`, the input-side gradient of an affine map.
    pub fn transpose_mul_vec(&self, dy: &[T], out: &mut [T]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o = *o + g * w;
            }
        }
    }

    /// `self += dy ⊗ x` (outer product accumulation).
    pub fn add_outer(&mut self, dy: &[T], x: &[T]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for (w, &xi) in self.row_mut(r).iter_mut().zip(x) {
                *w = *w + g * xi;
            }
        }
    }
}

impl<T: Real> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.values[r * self.cols + c]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.values[r * self.cols + c]
    }
}

impl<T: Real> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y = W·x + b`.
pub fn affine<T: Real>(w: &Matrix<T>, x: &[T], bias: Option<&[T]>) -> Result<Vec<T>, KernelError> {
    let mut out = vec![T::zero(); w.rows()];
    affine_into(w, x, bias, &mut out)?;
    Ok(out)
}

pub fn affine_into<T: Real>(
    w: &Matrix<T>,
    x: &[T],
    bias: Option<&[T]>,
    out: &mut [T],
) -> Result<(), KernelError> {
    if w.cols() != x.len() {
        return Err(KernelError::DimensionMismatch {
            op: "affine",
            expected: w.cols(),
            actual: x.len(),
        });
    }
    if out.len() != w.rows() {
        return Err(KernelError::DimensionMismatch {
            op: "affine (output)",
            expected: w.rows(),
            actual: out.len(),
        });
    }
    if let Some(b) = bias {
        if b.len() != w.rows() {
            return Err(KernelError::DimensionMismatch {
                op: "affine (bias)",
                expected: w.rows(),
                actual: b.len(),
            });
        }
    }
    for (r, o) in out.iter_mut().enumerate() {
        let b = bias.map_or(T::zero(), |b| b[r]);
        *o = dot(w.row(r), x) + b;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_vector_through() {
        let w = Matrix::<f64>::identity(2);
        assert_eq!(affine(&w, &[1.0, 2.0], Some(&[0.0, 0.0])).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weight_returns_bias() {
        let w = Matrix::<f64>::zeros(1, 4);
        assert_eq!(affine(&w, &[1.0, 2.0, 3.0, 4.0], Some(&[3.0])).unwrap(), vec![3.0]);
    }

    #[test]
    fn hand_computed_product() {
        let w = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(affine(&w, &[1.0, 1.0], None).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let w = Matrix::<f64>::zeros(2, 3);
        let err = affine(&w, &[1.0, 2.0], None).unwrap_err();
        assert!(matches!(err, KernelError::DimensionMismatch { expected: 3, actual: 2, .. }));
    }

    #[test]
    fn works_in_single_precision() {
        let w = Matrix::<f32>::from_vec(1, 2, vec![0.5, 0.25]).unwrap();
        assert_eq!(affine(&w, &[2.0f32, 4.0], Some(&[1.0])).unwrap(), vec![3.0f32]);
    }

    #[test]
    fn transpose_and_outer_agree_with_indexing() {
        let w = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut dx = vec![0.0; 3];
        w.transpose_mul_vec(&[1.0, -1.0], &mut dx);
        assert_eq!(dx, vec![-3.0, -3.0, -3.0]);
        let mut g = Matrix::<f64>::zeros(2, 3);
        g.add_outer(&[2.0, 1.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.as_slice(), &[2.0, 0.0, -2.0, 1.0, 0.0, -1.0]);
        assert_eq!(w.transpose()[(2, 1)], 6.0);
    }

    #[test]
    fn non_finite_entries_are_located() {
        let mut m = Matrix::<f64>::zeros(2, 2);
        assert!(m.is_finite());
        m[(1, 0)] = f64::NAN;
        assert_eq!(m.first_non_finite(), Some(2));
    }
}
