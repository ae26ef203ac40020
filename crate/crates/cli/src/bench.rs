//! Single-core real-time-factor measurement of the sample generator.
//!
//! The timed region covers autoregressive generation only; model loading,
//! quantization and filter design happen outside it. A short warm-up pass
//! (excluded from timing) touches the weights and code paths first. Audio
//! duration is accounted at the fullband rate: `steps * bands / rate`.

use std::time::Instant;

use mbvoc_core::params::LoadedModel;
use mbvoc_core::rng::Rng;
use mbvoc_core::wavernn::MbWaveRnnConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy)]
pub struct BenchOutcome {
    pub steps: usize,
    pub warmup_steps: usize,
    pub wall_seconds: f64,
    pub audio_seconds: f64,
    pub rtf: f64,
    pub samples_per_second: f64,
    pub kernel_multiplies: u64,
}

pub fn warmup_steps_for(steps: usize) -> usize {
    (steps / 10).clamp(1, 2000)
}

/// Runs the generator once for warm-up and once for the measurement, both
/// with the same seed so the timed run is deterministic.
pub fn run_bench(
    model: &LoadedModel,
    steps: usize,
    seed: u64,
    temperature: f64,
) -> CliResult<BenchOutcome> {
    let config = *model.config();
    let warmup = warmup_steps_for(steps);

    generate(model, warmup, seed, temperature)?;
    let start = Instant::now();
    let multiplies = generate(model, steps, seed, temperature)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let audio_seconds = audio_seconds(&config, steps);
    if wall_seconds <= 0.0 || audio_seconds <= 0.0 {
        return Err(CliError::BenchContract(
            "degenerate timing measurement".into(),
        ));
    }
    Ok(BenchOutcome {
        steps,
        warmup_steps: warmup,
        wall_seconds,
        audio_seconds,
        rtf: wall_seconds / audio_seconds,
        samples_per_second: steps as f64 * config.num_bands as f64 / wall_seconds,
        kernel_multiplies: multiplies,
    })
}

pub fn audio_seconds(config: &MbWaveRnnConfig, steps: usize) -> f64 {
    steps as f64 * config.num_bands as f64 / config.sample_rate as f64
}

fn generate(model: &LoadedModel, steps: usize, seed: u64, temperature: f64) -> CliResult<u64> {
    let mut rng = Rng::new(seed);
    let cond = zero_conditioning(model.config(), steps);
    let cond_ref = cond.as_deref();
    let stats = match model {
        LoadedModel::Float(m) => m.generate_with_stats(steps, cond_ref, &mut rng, temperature)?.1,
        LoadedModel::Quantized(m) => {
            m.generate_with_stats(steps, cond_ref, &mut rng, temperature)?.1
        }
    };
    Ok(stats.multiplies)
}

/// Conditioned models run the benchmark with all-zero conditioning vectors:
/// the input projections perform the same arithmetic, and no conditioning
/// source exists in this tool.
pub fn zero_conditioning(config: &MbWaveRnnConfig, steps: usize) -> Option<Vec<Vec<f32>>> {
    if config.conditioning_dim == 0 {
        None
    } else {
        Some(vec![vec![0.0f32; config.conditioning_dim]; steps])
    }
}
