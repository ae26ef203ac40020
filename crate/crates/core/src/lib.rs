//! Multi-band WaveRNN vocoder core.
//!
//! The crate covers the signal path of a subband neural vocoder and the
//! deterministic text-side utilities around it:
//!
//! - [`qmf`]: pseudo-QMF prototype design and cosine-modulated filter banks
//! - [`multirate`]: critically sampled subband analysis/synthesis
//! - [`wavernn`]: the shared multi-band autoregressive sample generator and
//!   its complexity accounting
//! - [`quant`]: int8 symmetric weight quantization and the quantized
//!   matrix-vector kernel
//! - [`durian`]: prosodic symbol parsing, skip filtering, duration-driven
//!   state expansion, style-code scaling and the dual L1 loss
//! - [`params`]: the binary parameter container shared by the tools
//!
//! Numeric code is generic over [`scalar::Scalar`] (f32 or f64); the aliases
//! below pin the two concrete instantiations most callers want: f64 for
//! design work, f32 for inference.

pub mod durian;
pub mod error;
pub mod fastmath;
pub mod mat;
pub mod multirate;
pub mod params;
pub mod qmf;
pub mod quant;
pub mod rng;
pub mod scalar;
pub mod wavernn;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type PrototypeFilter32 = qmf::PrototypeFilter<f32>;
pub type PrototypeFilter64 = qmf::PrototypeFilter<f64>;
pub type FilterBank32 = qmf::FilterBank<f32>;
pub type FilterBank64 = qmf::FilterBank<f64>;
pub type AudioSignal32 = multirate::AudioSignal<f32>;
pub type AudioSignal64 = multirate::AudioSignal<f64>;
pub type SubbandSignals32 = multirate::SubbandSignals<f32>;
pub type SubbandSignals64 = multirate::SubbandSignals<f64>;
pub type Matrix32 = mat::Matrix<f32>;
pub type Matrix64 = mat::Matrix<f64>;
pub type FloatModel32 = wavernn::FloatModel<f32>;
pub type FloatModel64 = wavernn::FloatModel<f64>;
pub type QuantizedModel32 = wavernn::QuantizedModel<f32>;
pub type QuantizedTensor32 = quant::QuantizedTensor<f32>;
pub type QuantizedTensor64 = quant::QuantizedTensor<f64>;
