//! JSON report payloads printed to stdout. Every report carries a versioned
//! `schema` field so downstream consumers can pin their parsers.

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ConfigReport {
    pub gru_size: usize,
    pub affine_size: usize,
    pub num_bands: usize,
    pub sample_rate: u32,
    pub conditioning_dim: usize,
}

impl From<&mbvoc_core::wavernn::MbWaveRnnConfig> for ConfigReport {
    fn from(c: &mbvoc_core::wavernn::MbWaveRnnConfig) -> Self {
        ConfigReport {
            gru_size: c.gru_size,
            affine_size: c.affine_size,
            num_bands: c.num_bands,
            sample_rate: c.sample_rate,
            conditioning_dim: c.conditioning_dim,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DesignReport {
    pub schema: &'static str,
    pub num_bands: usize,
    pub order: usize,
    pub transition_weight: f64,
    pub stopband_attenuation_db: f64,
    pub complementarity_residual: f64,
    pub power_sum_deviation: f64,
    pub power_sum_level: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SplitReport {
    pub schema: &'static str,
    pub input: String,
    pub input_format: &'static str,
    pub num_bands: usize,
    pub band_sample_rate: u32,
    pub band_len: usize,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct MergeReport {
    pub schema: &'static str,
    pub output: String,
    pub sample_rate: u32,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RoundtripReport {
    pub schema: &'static str,
    pub input: String,
    pub num_bands: usize,
    pub order: usize,
    pub snr_db: f64,
    pub delay_samples: usize,
}

#[derive(Debug, Serialize)]
pub struct FlopsReport {
    pub schema: &'static str,
    pub gru_size: usize,
    pub affine_size: usize,
    pub num_bands: usize,
    pub sample_rate: u32,
    pub flops_per_second: u64,
    pub gflops: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub schema: &'static str,
    pub config: ConfigReport,
    pub arithmetic: String,
    pub steps: usize,
    pub warmup_steps: usize,
    pub threads: usize,
    pub seed: u64,
    pub temperature: f64,
    pub wall_seconds: f64,
    pub audio_seconds: f64,
    pub rtf: f64,
    pub samples_per_second: f64,
    pub kernel_multiplies: u64,
    pub nominal_flops_per_second: u64,
}

#[derive(Debug, Serialize)]
pub struct QuantizeReport {
    pub schema: &'static str,
    pub input: String,
    pub output: String,
    pub config: ConfigReport,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct GenReport {
    pub schema: &'static str,
    pub config: ConfigReport,
    pub arithmetic: String,
    pub steps: usize,
    pub seed: u64,
    pub temperature: f64,
    pub audio_seconds: f64,
    pub output: String,
    pub subband_outputs: Vec<String>,
}

pub fn print_report<T: Serialize>(report: &T) -> Result<(), serde_json::Error> {
    println!("{}", serde_json::to_string(report)?);
    Ok(())
}
