//! Minimal dense row-major matrix and the matrix-vector kernel the
//! recurrent engine is built on.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element-wise into another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::cast_from(v.as_f64())).collect(),
        }
    }
}

/// Dot product with eight independent accumulators so the compiler can keep
/// vector lanes busy without reassociating a single serial chain.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (pa, pb) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..8 {
            acc[k] += pa[k] * pb[k];
        }
    }
    let mut tail = T::zero();
    for (pa, pb) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *pa * *pb;
    }
    let s0 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s1 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    (s0 + s1) + tail
}

/// Best-effort prefetch of `data[start .. start + len]` into cache; no-op
/// when the range is out of bounds or the platform has no prefetch hint.
#[inline]
fn prefetch_slice<T>(data: &[T], start: usize, len: usize) {
    #[cfg(target_arch = "x86_64")]
    {
        let end = start + len;
        if end <= data.len() {
            let bytes = len * std::mem::size_of::<T>();
            let base = unsafe { (data.as_ptr().add(start)) as *const i8 };
            let mut off = 0usize;
            while off < bytes {
                unsafe {
                    std::arch::x86_64::_mm_prefetch(base.add(off), std::arch::x86_64::_MM_HINT_T0)
                };
                off += 64;
            }
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        let _ = (data, start, len);
    }
}

/// Reusable buffers for the quantized kernel's per-call activation
/// quantization: the int8 values and their widened i16 copy the SIMD path
/// multiplies from.
#[derive(Debug, Default, Clone)]
pub struct MatVecScratch {
    pub x_i8: Vec<i8>,
    pub x_i16: Vec<i16>,
    pub acc_i32: Vec<i32>,
}

/// Matrix-vector product abstraction so the recurrent cell runs unchanged on
/// dense float weights and on int8-quantized weights.
///
/// `scratch` is caller-owned so the hot loop never allocates; the dense
/// kernel ignores it. The return value is the number of scalar multiplies
/// performed (always `rows * cols` for a full product); the generator
/// accumulates these for its complexity accounting.
pub trait MatVec<T: Scalar> {
    fn out_dim(&self) -> usize;
    fn in_dim(&self) -> usize;
    fn matvec_into(&self, x: &[T], out: &mut [T], scratch: &mut MatVecScratch) -> u64;
}

impl<T: Scalar> MatVec<T> for Matrix<T> {
    fn out_dim(&self) -> usize {
        self.rows
    }

    fn in_dim(&self) -> usize {
        self.cols
    }

    fn matvec_into(&self, x: &[T], out: &mut [T], _scratch: &mut MatVecScratch) -> u64 {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        // Weight matrices larger than L2 stream from L3 once per step; the
        // hardware prefetcher alone does not keep a single sequential stream
        // ahead of the dot product, so fetch a few rows ahead explicitly.
        let lookahead = 3 * self.cols;
        let data = &self.data;
        for (i, (o, row)) in out.iter_mut().zip(data.chunks_exact(self.cols)).enumerate() {
            prefetch_slice(data, (i + 1) * self.cols + lookahead - self.cols, self.cols);
            *o = dot(row, x);
        }
        (self.rows * self.cols) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..23).map(|i| i as f64 * 0.37 - 3.0).collect();
        let b: Vec<f64> = (0..23).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matvec_matches_indexed() {
        let m = Matrix::from_fn(5, 7, |i, j| (i * 7 + j) as f64 * 0.01 - 0.1);
        let x: Vec<f64> = (0..7).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let mut out = vec![0.0; 5];
        let muls = m.matvec_into(&x, &mut out, &mut MatVecScratch::default());
        assert_eq!(muls, 35);
        for i in 0..5 {
            let mut want = 0.0;
            for j in 0..7 {
                want += m.get(i, j) * x[j];
            }
            assert!((out[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn from_vec_checks_len() {
        assert!(Matrix::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
