//! int8 symmetric weight quantization and the quantized matrix-vector kernel.
//!
//! Weights are quantized per output row with a symmetric scale
//! `max|row| / 127` and round-half-away-from-zero, so every stored value
//! stays in [-127, 127] and the dequantization error per element is at most
//! half a step. The matvec quantizes its activation vector on the fly with
//! its own symmetric scale, accumulates in i32 and rescales to float at the
//! end; on x86-64 with AVX2 the inner dot runs on `pmaddwd`, elsewhere on a
//! plain unrolled integer loop.

use crate::error::{Error, Result};
use crate::mat::{MatVec, MatVecScratch, Matrix};
use crate::scalar::Scalar;

/// Largest supported inner dimension: 127 * 127 * 4096 still leaves i32
/// accumulator headroom (66 064 384 < 2^31).
pub const MAX_QUANTIZED_DIM: usize = 4096;

/// Row-major int8 matrix with one float scale per output row.
#[derive(Debug, Clone)]
pub struct QuantizedTensor<T> {
    data: Vec<i8>,
    rows: usize,
    cols: usize,
    scales: Vec<T>,
}

impl<T: Scalar> QuantizedTensor<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rebuilds a tensor from its stored parts (parameter container path).
    pub fn from_parts(rows: usize, cols: usize, data: Vec<i8>, scales: Vec<T>) -> Result<Self> {
        if rows > MAX_QUANTIZED_DIM || cols > MAX_QUANTIZED_DIM {
            return Err(Error::invalid(format!(
                "quantized tensor {rows}x{cols} exceeds supported dimension {MAX_QUANTIZED_DIM}"
            )));
        }
        if data.len() != rows * cols || scales.len() != rows {
            return Err(Error::dims(format!(
                "quantized tensor {rows}x{cols}: payload {} scales {}",
                data.len(),
                scales.len()
            )));
        }
        if data.iter().any(|&v| v == i8::MIN) {
            return Err(Error::invalid("quantized value -128 outside symmetric range"));
        }
        if scales.iter().any(|s| !s.is_finite() || *s < T::zero()) {
            return Err(Error::NonFinite("quantization scales"));
        }
        Ok(QuantizedTensor {
            data,
            rows,
            cols,
            scales,
        })
    }
}

fn round_half_away(v: f64) -> f64 {
    // f64::round rounds half-way cases away from zero, which is the mode
    // fixed for reproducibility.
    v.round()
}

/// Quantizes a float matrix to int8 with per-row symmetric scales.
pub fn quantize<T: Scalar>(weights: &Matrix<T>) -> Result<QuantizedTensor<T>> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("weights to quantize"));
    }
    if weights.cols() > MAX_QUANTIZED_DIM || weights.rows() > MAX_QUANTIZED_DIM {
        return Err(Error::invalid(format!(
            "matrix {}x{} exceeds supported quantized dimension {MAX_QUANTIZED_DIM}",
            weights.rows(),
            weights.cols()
        )));
    }
    let rows = weights.rows();
    let cols = weights.cols();
    let mut data = Vec::with_capacity(rows * cols);
    let mut scales = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = weights.row(i);
        let max_abs = row.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        if max_abs == 0.0 {
            scales.push(T::zero());
            data.extend(std::iter::repeat(0i8).take(cols));
            continue;
        }
        let scale = max_abs / 127.0;
        scales.push(T::cast_from(scale));
        for v in row {
            let q = round_half_away(v.as_f64() / scale).clamp(-127.0, 127.0);
            data.push(q as i8);
        }
    }
    Ok(QuantizedTensor {
        data,
        rows,
        cols,
        scales,
    })
}

/// Reconstructs the float matrix `w'[i][j] = q[i][j] * scale_i`.
pub fn dequantize<T: Scalar>(q: &QuantizedTensor<T>) -> Matrix<T> {
    Matrix::from_fn(q.rows, q.cols, |i, j| {
        T::cast_from(q.data[i * q.cols + j] as f64 * q.scales[i].as_f64())
    })
}

/// Quantizes an activation vector with its own symmetric scale; returns the
/// scale (0 for an all-zero vector, in which case `out` is left zeroed).
fn quantize_activation<T: Scalar>(x: &[T], out: &mut [i8]) -> f64 {
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    if max_abs == 0.0 {
        out.fill(0);
        return 0.0;
    }
    let scale = max_abs / 127.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = round_half_away(v.as_f64() / scale) as i8;
    }
    scale
}

fn dot_i8_scalar(a: &[i8], b: &[i8]) -> i32 {
    let mut acc0 = 0i32;
    let mut acc1 = 0i32;
    let mut acc2 = 0i32;
    let mut acc3 = 0i32;
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (pa, pb) in ca.by_ref().zip(cb.by_ref()) {
        acc0 += pa[0] as i32 * pb[0] as i32;
        acc1 += pa[1] as i32 * pb[1] as i32;
        acc2 += pa[2] as i32 * pb[2] as i32;
        acc3 += pa[3] as i32 * pb[3] as i32;
    }
    for (pa, pb) in ca.remainder().iter().zip(cb.remainder()) {
        acc0 += *pa as i32 * *pb as i32;
    }
    (acc0 + acc1) + (acc2 + acc3)
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    /// Whole-matrix int8 matvec on AVX2. The activation arrives pre-widened
    /// to i16 so the inner loop is one i8 load + sign extension per row per
    /// 16 columns, multiplied with `pmaddwd` (pairwise i16*i16 sums never
    /// exceed 2 * 127 * 127, well inside i32). Rows run in blocks of four to
    /// amortize the activation loads, with a hadd tree producing the four
    /// row sums in one vector.
    #[target_feature(enable = "avx2")]
    pub unsafe fn matvec_i8_avx2(
        data: &[i8],
        rows: usize,
        cols: usize,
        x: &[i16],
        out: &mut [i32],
    ) {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert_eq!(x.len(), cols);
        debug_assert_eq!(out.len(), rows);
        let simd_cols = cols - cols % 16;
        let base = data.as_ptr();
        let mut r = 0usize;
        while r + 4 <= rows {
            let p0 = base.add(r * cols);
            let p1 = base.add((r + 1) * cols);
            let p2 = base.add((r + 2) * cols);
            let p3 = base.add((r + 3) * cols);
            let mut acc0 = _mm256_setzero_si256();
            let mut acc1 = _mm256_setzero_si256();
            let mut acc2 = _mm256_setzero_si256();
            let mut acc3 = _mm256_setzero_si256();
            let mut j = 0usize;
            while j < simd_cols {
                let xv = _mm256_loadu_si256(x.as_ptr().add(j) as *const __m256i);
                let w0 = _mm256_cvtepi8_epi16(_mm_loadu_si128(p0.add(j) as *const __m128i));
                let w1 = _mm256_cvtepi8_epi16(_mm_loadu_si128(p1.add(j) as *const __m128i));
                let w2 = _mm256_cvtepi8_epi16(_mm_loadu_si128(p2.add(j) as *const __m128i));
                let w3 = _mm256_cvtepi8_epi16(_mm_loadu_si128(p3.add(j) as *const __m128i));
                acc0 = _mm256_add_epi32(acc0, _mm256_madd_epi16(w0, xv));
                acc1 = _mm256_add_epi32(acc1, _mm256_madd_epi16(w1, xv));
                acc2 = _mm256_add_epi32(acc2, _mm256_madd_epi16(w2, xv));
                acc3 = _mm256_add_epi32(acc3, _mm256_madd_epi16(w3, xv));
                j += 16;
            }
            // hadd tree: two levels leave [s0 s1 s2 s3] duplicated across the
            // 128-bit halves; adding the halves gives the four row sums.
            let h01 = _mm256_hadd_epi32(acc0, acc1);
            let h23 = _mm256_hadd_epi32(acc2, acc3);
            let h = _mm256_hadd_epi32(h01, h23);
            let sums = _mm_add_epi32(_mm256_castsi256_si128(h), _mm256_extracti128_si256(h, 1));
            let mut lanes = [0i32; 4];
            _mm_storeu_si128(lanes.as_mut_ptr() as *mut __m128i, sums);
            for k in 0..4 {
                let mut total = lanes[k];
                let p = base.add((r + k) * cols);
                for jj in simd_cols..cols {
                    total += *p.add(jj) as i32 * *x.get_unchecked(jj) as i32;
                }
                *out.get_unchecked_mut(r + k) = total;
            }
            r += 4;
        }
        while r < rows {
            let p = base.add(r * cols);
            let mut acc = _mm256_setzero_si256();
            let mut j = 0usize;
            while j < simd_cols {
                let xv = _mm256_loadu_si256(x.as_ptr().add(j) as *const __m256i);
                let wv = _mm256_cvtepi8_epi16(_mm_loadu_si128(p.add(j) as *const __m128i));
                acc = _mm256_add_epi32(acc, _mm256_madd_epi16(wv, xv));
                j += 16;
            }
            let mut lanes = [0i32; 8];
            _mm256_storeu_si256(lanes.as_mut_ptr() as *mut __m256i, acc);
            let mut total: i32 = lanes.iter().sum();
            for jj in simd_cols..cols {
                total += *p.add(jj) as i32 * *x.get_unchecked(jj) as i32;
            }
            *out.get_unchecked_mut(r) = total;
            r += 1;
        }
    }

    pub fn avx2_available() -> bool {
        is_x86_feature_detected!("avx2")
    }
}

/// Integer core of the matvec: row sums of `q . x_q` in i32.
fn matvec_i32(q: &QuantizedTensor<impl Scalar>, scratch: &MatVecScratch, out: &mut [i32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if x86::avx2_available() {
            // Safety: feature presence checked at runtime; buffer lengths
            // are established by the caller.
            unsafe {
                x86::matvec_i8_avx2(&q.data, q.rows, q.cols, &scratch.x_i16, out);
            }
            return;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot_i8_scalar(q.row(i), &scratch.x_i8);
    }
}

/// Quantized matrix-vector product.
///
/// The activation is quantized per call with its own symmetric scale;
/// integer accumulation happens in i32 and the result is rescaled by
/// `scale_row * scale_x`. The result must agree with the dequantized float
/// matvec up to the two rounding stages.
pub fn qmatvec<T: Scalar>(q: &QuantizedTensor<T>, x: &[T]) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); q.rows];
    qmatvec_into(q, x, &mut out, &mut MatVecScratch::default())?;
    Ok(out)
}

pub fn qmatvec_into<T: Scalar>(
    q: &QuantizedTensor<T>,
    x: &[T],
    out: &mut [T],
    scratch: &mut MatVecScratch,
) -> Result<u64> {
    if x.len() != q.cols {
        return Err(Error::dims(format!(
            "qmatvec: vector length {} vs {} columns",
            x.len(),
            q.cols
        )));
    }
    debug_assert_eq!(out.len(), q.rows);
    scratch.x_i8.resize(q.cols, 0);
    scratch.x_i16.resize(q.cols, 0);
    let x_scale = quantize_activation(x, &mut scratch.x_i8);
    if x_scale == 0.0 {
        out.fill(T::zero());
        return Ok((q.rows * q.cols) as u64);
    }
    for (w, n) in scratch.x_i16.iter_mut().zip(&scratch.x_i8) {
        *w = *n as i16;
    }
    let mut acc = std::mem::take(&mut scratch.acc_i32);
    acc.resize(q.rows, 0);
    matvec_i32(q, scratch, &mut acc);
    for ((o, &a), s) in out.iter_mut().zip(&acc).zip(&q.scales) {
        *o = T::cast_from(a as f64 * (s.as_f64() * x_scale));
    }
    scratch.acc_i32 = acc;
    Ok((q.rows * q.cols) as u64)
}

impl<T: Scalar> MatVec<T> for QuantizedTensor<T> {
    fn out_dim(&self) -> usize {
        self.rows
    }

    fn in_dim(&self) -> usize {
        self.cols
    }

    fn matvec_into(&self, x: &[T], out: &mut [T], scratch: &mut MatVecScratch) -> u64 {
        qmatvec_into(self, x, out, scratch).expect("dimensions checked by caller")
    }
}
