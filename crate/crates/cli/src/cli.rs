use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "mbvoc",
    version,
    about = "Multi-band WaveRNN vocoder toolkit: pseudo-QMF filter design, subband split/merge, \
             sample generation, int8 quantization and single-core RTF benchmarks",
    after_help = "Reports are printed as single-line JSON on stdout; diagnostics go to stderr.\n\
                  Commands that draw random samples require --seed or the MBVOC_SEED variable."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design a pseudo-QMF prototype and write the modulated filter bank
    Design(DesignArgs),
    /// Split a fullband WAV into critically sampled subband WAVs
    Split(SplitArgs),
    /// Rebuild a fullband WAV from subband WAVs
    Merge(MergeArgs),
    /// Measure analysis/synthesis round-trip SNR of a WAV
    Roundtrip(RoundtripArgs),
    /// Print the multiply count per second of audio for a model size
    Flops(FlopsArgs),
    /// Single-core real-time-factor benchmark of the sample generator
    Bench(BenchArgs),
    /// Quantize a float parameter file to int8
    Quantize(QuantizeArgs),
    /// Generate audio: subband WAVs and the merged fullband WAV
    Gen(GenArgs),
    /// Expand symbol/duration files into frame-aligned rows (CSV on stdout)
    Expand(ExpandArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arithmetic {
    Float,
    Int8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    I16,
    F32,
}

/// Filter bank selection shared by the subband commands: either a prototype
/// coefficient file (one tap per line) or an on-the-fly default design.
#[derive(Debug, Args)]
pub struct BankArgs {
    /// Prototype coefficient file from `design`; defaults to a fresh design
    #[arg(long)]
    pub prototype: Option<PathBuf>,
    /// Number of subbands
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    /// Prototype filter order (ignored when --prototype is given)
    #[arg(long, default_value_t = 63)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Number of subbands
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    /// Prototype filter order (odd, >= 4*bands - 1)
    #[arg(long, default_value_t = 63)]
    pub order: usize,
    /// Fraction of the maximum transition band to use, in (0, 1]
    #[arg(long, default_value_t = mbvoc_core::qmf::DEFAULT_TRANSITION_WEIGHT)]
    pub transition_weight: f64,
    /// Frequency grid resolution for the emitted response CSV
    #[arg(long, default_value_t = mbvoc_core::qmf::DEFAULT_GRID_POINTS)]
    pub points: usize,
    /// Directory receiving coefficient files and the response CSV
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Additionally write a response CSV per analysis band
    #[arg(long)]
    pub band_responses: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Input WAV (mono, 16-bit PCM or 32-bit float)
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Prefix for the output band files: <prefix>_band<k>.wav
    #[arg(long)]
    pub out_prefix: String,
    /// Write one multi-channel float WAV instead of per-band mono files
    #[arg(long)]
    pub multichannel: bool,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Prefix of the band files written by split: <prefix>_band<k>.wav
    #[arg(long, conflicts_with = "input")]
    pub in_prefix: Option<String>,
    /// Multi-channel subband WAV written by split --multichannel
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Output fullband WAV
    #[arg(long)]
    pub output: PathBuf,
    /// Output encoding
    #[arg(long, value_enum, default_value_t = OutputFormat::I16)]
    pub format: OutputFormat,
    /// Original fullband WAV; when given, the report includes the
    /// delay-compensated round-trip SNR against it
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    /// Input WAV (mono)
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub bank: BankArgs,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// GRU width
    #[arg(long, default_value_t = 192)]
    pub gru: usize,
    /// Affine layer width
    #[arg(long, default_value_t = 192)]
    pub affine: usize,
    /// Number of subbands
    #[arg(long, default_value_t = 1)]
    pub bands: usize,
    /// Fullband sample rate in Hz
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    /// Parameter file (from bench --save-params or quantize)
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Seed for random weights when no parameter file is given
    #[arg(long)]
    pub random_seed: Option<u64>,
    /// GRU width for random weights
    #[arg(long, default_value_t = 192)]
    pub gru: usize,
    /// Affine width for random weights
    #[arg(long, default_value_t = 192)]
    pub affine: usize,
    /// Band count for random weights
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    /// Fullband sample rate for random weights
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
    /// Conditioning vector width for random weights. The complexity figures
    /// assume GRU inputs of roughly the GRU width, which in a full system is
    /// the conditioning; benchmarks meant to mirror those figures should use
    /// --conditioning 192.
    #[arg(long, default_value_t = 0)]
    pub conditioning: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Subband steps to generate in the timed region (>= sample rate)
    #[arg(long)]
    pub steps: Option<usize>,
    /// Weight arithmetic; defaults to whatever the parameter source holds
    #[arg(long, value_enum)]
    pub arithmetic: Option<Arithmetic>,
    /// Execution threads; the benchmark contract is exactly 1
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Sampling seed (falls back to MBVOC_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Softmax temperature
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Write the (float) model used for the run to this parameter file
    #[arg(long)]
    pub save_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Float parameter file
    #[arg(long)]
    pub input: PathBuf,
    /// Destination int8 parameter file
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Subband steps to generate
    #[arg(long)]
    pub steps: usize,
    /// Weight arithmetic; defaults to whatever the parameter file holds
    #[arg(long, value_enum)]
    pub arithmetic: Option<Arithmetic>,
    /// Sampling seed (falls back to MBVOC_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Softmax temperature
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Merged fullband output WAV
    #[arg(long)]
    pub output: PathBuf,
    /// Also write per-band WAVs: <prefix>_band<k>.wav
    #[arg(long)]
    pub subband_prefix: Option<String>,
    /// Merged output encoding
    #[arg(long, value_enum, default_value_t = OutputFormat::I16)]
    pub format: OutputFormat,
    /// Prototype coefficient file for the synthesis bank
    #[arg(long)]
    pub prototype: Option<PathBuf>,
    /// Prototype order when designing the bank on the fly
    #[arg(long, default_value_t = 63)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// UTF-8 symbol file: whitespace-separated phonemes and #S/#1/#2/#3
    #[arg(long)]
    pub symbols: PathBuf,
    /// Duration file: one integer (frames) per phoneme per line
    #[arg(long)]
    pub durations: PathBuf,
    /// Optional CSV of hidden state vectors, one row per phoneme; without it
    /// the rows carry the phoneme labels instead
    #[arg(long)]
    pub states: Option<PathBuf>,
}
