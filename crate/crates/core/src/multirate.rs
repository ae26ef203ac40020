//! Critically sampled subband analysis and synthesis.
//!
//! Analysis filters each band then keeps every `N`th sample (phase 0);
//! synthesis inserts `N - 1` zeros after every subband sample (scaled by `N`
//! to preserve unit passband gain through the maximally decimated chain),
//! filters, and sums the bands. Everything is a pure function over immutable
//! inputs; per-band work could run in parallel but is kept single threaded so
//! the same code path serves the single-core benchmark.

use crate::error::{Error, Result};
use crate::qmf::FilterBank;
use crate::scalar::Scalar;

/// Fullband mono signal.
#[derive(Debug, Clone)]
pub struct AudioSignal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(AudioSignal {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// N critically downsampled channel signals of equal length.
#[derive(Debug, Clone)]
pub struct SubbandSignals<T> {
    bands: Vec<Vec<T>>,
    parent_sample_rate: u32,
}

impl<T: Scalar> SubbandSignals<T> {
    pub fn new(bands: Vec<Vec<T>>, parent_sample_rate: u32) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("need at least one band"));
        }
        if parent_sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let len = bands[0].len();
        if bands.iter().any(|b| b.len() != len) {
            return Err(Error::dims("subband lengths differ"));
        }
        Ok(SubbandSignals {
            bands,
            parent_sample_rate,
        })
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, k: usize) -> &[T] {
        &self.bands[k]
    }

    pub fn bands(&self) -> &[Vec<T>] {
        &self.bands
    }

    pub fn band_len(&self) -> usize {
        self.bands[0].len()
    }

    pub fn parent_sample_rate(&self) -> u32 {
        self.parent_sample_rate
    }

    /// Sample rate of each band signal: parent rate / N.
    pub fn band_sample_rate(&self) -> f64 {
        self.parent_sample_rate as f64 / self.bands.len() as f64
    }
}

/// Full linear convolution, output length `x.len() + h.len() - 1`.
pub fn convolve<T: Scalar>(x: &[T], h: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

/// Linear convolution evaluated only at indices 0, N, 2N, ... — the
/// filter-then-decimate path without computing the discarded samples.
fn convolve_decimated<T: Scalar>(x: &[T], h: &[T], step: usize) -> Vec<T> {
    let full_len = x.len() + h.len() - 1;
    let out_len = full_len.div_ceil(step);
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let n = m * step;
        let j_lo = (n + 1).saturating_sub(x.len());
        let j_hi = n.min(h.len() - 1);
        let mut acc = T::zero();
        for j in j_lo..=j_hi {
            acc += h[j] * x[n - j];
        }
        out.push(acc);
    }
    out
}

/// Splits a fullband signal into N critically sampled subbands.
///
/// Each band is the zero-padded linear convolution with its analysis filter,
/// keeping every Nth sample starting at index 0; all bands come out with
/// length `ceil((len + L - 1) / N)`.
pub fn analyze<T: Scalar>(signal: &AudioSignal<T>, bank: &FilterBank<T>) -> Result<SubbandSignals<T>> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot analyze an empty signal"));
    }
    let n = bank.num_bands();
    let bands = (0..n)
        .map(|k| convolve_decimated(signal.samples(), bank.analysis(k), n))
        .collect();
    SubbandSignals::new(bands, signal.sample_rate())
}

/// Rebuilds a fullband signal from critically sampled subbands: upsample by
/// zero stuffing (gain N), filter with the synthesis bank, sum.
///
/// Output length is `band_len * N + L - 1`.
pub fn synthesize<T: Scalar>(
    subbands: &SubbandSignals<T>,
    bank: &FilterBank<T>,
) -> Result<AudioSignal<T>> {
    let n = bank.num_bands();
    if subbands.num_bands() != n {
        return Err(Error::dims(format!(
            "subband count {} does not match bank with {} bands",
            subbands.num_bands(),
            n
        )));
    }
    let band_len = subbands.band_len();
    let filter_len = bank.filter_len();
    let out_len = band_len * n + filter_len - 1;
    let gain = T::cast_from(n as f64);
    let mut out = vec![T::zero(); out_len];
    for k in 0..n {
        let g = bank.synthesis(k);
        for (i, &v) in subbands.band(k).iter().enumerate() {
            let scaled = gain * v;
            if scaled == T::zero() {
                continue;
            }
            let base = i * n;
            for (j, &gj) in g.iter().enumerate() {
                out[base + j] += scaled * gj;
            }
        }
    }
    AudioSignal::new(out, subbands.parent_sample_rate())
}

/// Analysis → synthesis round trip quality in dB.
///
/// The reconstruction lags the input by exactly `L - 1` samples (linear-phase
/// delay of the two filter stages); after compensating that delay, `L`
/// samples of edge transient are trimmed at each end and the SNR is
/// `10 log10(sum x^2 / sum (x - x_hat)^2)` over the remaining span.
pub fn roundtrip_snr<T: Scalar>(signal: &AudioSignal<T>, bank: &FilterBank<T>) -> Result<f64> {
    let filter_len = bank.filter_len();
    if signal.len() < 4 * filter_len {
        return Err(Error::invalid(format!(
            "signal length {} too short for round-trip measurement (need >= {})",
            signal.len(),
            4 * filter_len
        )));
    }
    let delay = bank.reconstruction_delay();
    let rebuilt = synthesize(&analyze(signal, bank)?, bank)?;
    let x = signal.samples();
    let y = rebuilt.samples();
    let lo = filter_len;
    let hi = signal.len() - filter_len;
    let mut signal_energy = 0.0f64;
    let mut error_energy = 0.0f64;
    for t in lo..hi {
        let s = x[t].as_f64();
        let e = s - y[t + delay].as_f64();
        signal_energy += s * s;
        error_energy += e * e;
    }
    if error_energy == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal_energy / error_energy).log10())
}

/// Lag of the cross-correlation peak between `signal` and its reconstruction;
/// used to verify the constant `L - 1` system delay.
pub fn reconstruction_lag<T: Scalar>(signal: &AudioSignal<T>, bank: &FilterBank<T>) -> Result<usize> {
    let rebuilt = synthesize(&analyze(signal, bank)?, bank)?;
    let x = signal.samples();
    let y = rebuilt.samples();
    let max_lag = (2 * bank.filter_len()).min(y.len().saturating_sub(1));
    let mut best_lag = 0;
    let mut best = f64::NEG_INFINITY;
    for lag in 0..=max_lag {
        let mut corr = 0.0f64;
        for (t, xv) in x.iter().enumerate() {
            if t + lag >= y.len() {
                break;
            }
            corr += xv.as_f64() * y[t + lag].as_f64();
        }
        if corr > best {
            best = corr;
            best_lag = lag;
        }
    }
    Ok(best_lag)
}
