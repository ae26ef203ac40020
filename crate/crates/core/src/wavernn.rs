//! Shared multi-band WaveRNN sample generator.
//!
//! One recurrent model drives all N subbands: at every step it consumes the
//! previous coarse and fine samples of every band and emits a coarse and a
//! fine 256-way categorical distribution per band, so each inference step
//! produces N fullband samples worth of audio. Two parallel paths (coarse and
//! fine) each run a single GRU, an affine layer with relu, and one 256-way
//! output head per band; the fine path additionally sees the coarse samples
//! drawn in the current step, so a step is a two-pass affair: run the coarse
//! path, sample, then run the fine path.
//!
//! The engine is generic over the weight storage — dense float matrices or
//! int8 tensors — via [`MatVec`], so the float and quantized paths share one
//! implementation. Generation is sequential by nature and everything here
//! runs on the calling thread.

use crate::error::{Error, Result};
use crate::mat::{MatVec, MatVecScratch, Matrix};
use crate::multirate::SubbandSignals;
use crate::quant::{quantize, QuantizedTensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Categories per softmax: one byte of the 16-bit sample.
pub const LEVELS: usize = 256;

/// Midpoint category used as the initial "previous sample".
pub const MID_LEVEL: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbWaveRnnConfig {
    pub gru_size: usize,
    pub affine_size: usize,
    pub num_bands: usize,
    /// Fullband rate in Hz.
    pub sample_rate: u32,
    pub conditioning_dim: usize,
}

impl MbWaveRnnConfig {
    pub fn new(gru_size: usize, affine_size: usize, num_bands: usize, sample_rate: u32) -> Self {
        MbWaveRnnConfig {
            gru_size,
            affine_size,
            num_bands,
            sample_rate,
            conditioning_dim: 0,
        }
    }

    pub fn with_conditioning(mut self, dim: usize) -> Self {
        self.conditioning_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.gru_size == 0 || self.affine_size == 0 || self.num_bands == 0 {
            return Err(Error::invalid(
                "gru size, affine size and band count must be positive",
            ));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.sample_rate as usize % self.num_bands != 0 {
            return Err(Error::invalid(format!(
                "sample rate {} not divisible by band count {}",
                self.sample_rate, self.num_bands
            )));
        }
        Ok(())
    }

    /// Coarse-path input width: previous coarse + fine of all bands, plus
    /// conditioning.
    pub fn coarse_input_dim(&self) -> usize {
        2 * self.num_bands + self.conditioning_dim
    }

    /// Fine-path input width: the coarse input plus the current-step coarse
    /// samples of all bands.
    pub fn fine_input_dim(&self) -> usize {
        3 * self.num_bands + self.conditioning_dim
    }

    /// Multiply count per second of fullband audio under the nominal
    /// accounting `2 (2 Ng^2 3 + Ng Nf + 256 Ng Nb) Sr / Nb`, which prices
    /// both GRU input projections at width `Ng` and the output heads at width
    /// `Ng`. Exact integer arithmetic.
    pub fn flops_per_second_exact(&self) -> Result<u64> {
        self.validate_for_flops()?;
        let g = self.gru_size as u128;
        let f = self.affine_size as u128;
        let b = self.num_bands as u128;
        let r = self.sample_rate as u128;
        let inner = 2 * g * g * 3 + g * f + 256 * g * b;
        let total = 2 * inner * (r / b);
        u64::try_from(total)
            .map_err(|_| Error::invalid("complexity overflows 64-bit accounting"))
    }

    fn validate_for_flops(&self) -> Result<()> {
        // The zero-size network is allowed here so degenerate configs can be
        // priced; only band count and rate divisibility are structural.
        if self.num_bands == 0 || self.sample_rate == 0 {
            return Err(Error::invalid("band count and sample rate must be positive"));
        }
        if self.sample_rate as usize % self.num_bands != 0 {
            return Err(Error::invalid(format!(
                "sample rate {} not divisible by band count {}",
                self.sample_rate, self.num_bands
            )));
        }
        Ok(())
    }

    /// Same number as [`flops_per_second_exact`](Self::flops_per_second_exact)
    /// as a float (exact for any realistic size; the integers stay below
    /// 2^53).
    pub fn flops_per_second(&self) -> Result<f64> {
        Ok(self.flops_per_second_exact()? as f64)
    }

    /// Multiplies actually performed per generation step by this
    /// implementation (both paths; one step emits `num_bands` samples).
    /// Differs from the nominal accounting in the input projections, whose
    /// true width is `2 Nb + cond` / `3 Nb + cond` rather than `Ng`, and in
    /// the heads, which read the affine output of width `Nf`.
    pub fn multiplies_per_step(&self) -> u64 {
        let g = self.gru_size as u64;
        let f = self.affine_size as u64;
        let b = self.num_bands as u64;
        let coarse_in = self.coarse_input_dim() as u64;
        let fine_in = self.fine_input_dim() as u64;
        let per_path = |input_dim: u64| 3 * g * input_dim + 3 * g * g + f * g + b * 256 * f;
        per_path(coarse_in) + per_path(fine_in)
    }

    /// Per-step multiply count under the nominal accounting:
    /// `flops_per_second * Nb / Sr`.
    pub fn nominal_multiplies_per_step(&self) -> Result<u64> {
        let g = self.gru_size as u64;
        let f = self.affine_size as u64;
        let b = self.num_bands as u64;
        self.validate_for_flops()?;
        Ok(2 * (2 * g * g * 3 + g * f + 256 * g * b))
    }
}

/// Complexity of a configuration in multiplies per second of fullband audio.
pub fn flops_per_second(config: &MbWaveRnnConfig) -> Result<f64> {
    config.flops_per_second()
}

/// Weights for one path (coarse or fine).
///
/// Gate rows are stacked `[update, reset, candidate]`, each block of
/// `gru_size` rows. The recurrent product carries no bias; `gate_bias` is
/// added with the input projection.
#[derive(Debug, Clone)]
pub struct PathParams<T, M> {
    /// (3 Ng, input_dim)
    pub input: M,
    /// (3 Ng, Ng)
    pub recurrent: M,
    /// 3 Ng
    pub gate_bias: Vec<T>,
    /// (Nf, Ng)
    pub affine: M,
    /// Nf
    pub affine_bias: Vec<T>,
    /// Nb heads, each (256, Nf)
    pub heads: Vec<M>,
    /// Nb biases, each 256
    pub head_bias: Vec<Vec<T>>,
}

impl<T: Scalar, M: MatVec<T>> PathParams<T, M> {
    fn validate(&self, config: &MbWaveRnnConfig, input_dim: usize, name: &str) -> Result<()> {
        let g = config.gru_size;
        let f = config.affine_size;
        let b = config.num_bands;
        let check = |cond: bool, what: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::dims(format!("{name} path: {what}")))
            }
        };
        check(
            self.input.out_dim() == 3 * g && self.input.in_dim() == input_dim,
            "input projection shape",
        )?;
        check(
            self.recurrent.out_dim() == 3 * g && self.recurrent.in_dim() == g,
            "recurrent shape",
        )?;
        check(self.gate_bias.len() == 3 * g, "gate bias length")?;
        check(
            self.affine.out_dim() == f && self.affine.in_dim() == g,
            "affine shape",
        )?;
        check(self.affine_bias.len() == f, "affine bias length")?;
        check(self.heads.len() == b && self.head_bias.len() == b, "head count")?;
        for (k, head) in self.heads.iter().enumerate() {
            check(
                head.out_dim() == LEVELS && head.in_dim() == f,
                &format!("head {k} shape"),
            )?;
            check(self.head_bias[k].len() == LEVELS, &format!("head {k} bias"))?;
        }
        Ok(())
    }
}

/// The full model: configuration plus the two paths.
#[derive(Debug, Clone)]
pub struct MbWaveRnn<T, M> {
    config: MbWaveRnnConfig,
    pub coarse: PathParams<T, M>,
    pub fine: PathParams<T, M>,
}

pub type FloatModel<T> = MbWaveRnn<T, Matrix<T>>;
pub type QuantizedModel<T> = MbWaveRnn<T, QuantizedTensor<T>>;

/// GRU state of both paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnState<T> {
    pub coarse: Vec<T>,
    pub fine: Vec<T>,
}

impl<T: Scalar> RnnState<T> {
    pub fn zeros(config: &MbWaveRnnConfig) -> Self {
        RnnState {
            coarse: vec![T::zero(); config.gru_size],
            fine: vec![T::zero(); config.gru_size],
        }
    }
}

/// Raw (pre-softmax) logits for all bands plus the advanced state.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub coarse_logits: Vec<Vec<T>>,
    pub fine_logits: Vec<Vec<T>>,
    pub new_state: RnnState<T>,
}

/// Instrumentation collected by `generate_with_stats`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateStats {
    pub steps: usize,
    /// Scalar multiplies reported by the matvec kernels.
    pub multiplies: u64,
}

/// Maps an 8-bit category to the centered network input in [-1, 1].
pub fn centered<T: Scalar>(level: u8) -> T {
    T::cast_from(level as f64 / 127.5 - 1.0)
}

/// Maps a (coarse, fine) pair to the signed sample value in [-1, 1).
pub fn sample_value<T: Scalar>(coarse: u8, fine: u8) -> T {
    let v = coarse as i32 * 256 + fine as i32;
    T::cast_from((v - 32768) as f64 / 32768.0)
}

/// Splits a float sample in [-1, 1) into its 16-bit (coarse, fine) pair.
pub fn split_sample<T: Scalar>(value: T) -> (u8, u8) {
    let v = (value.as_f64() * 32768.0 + 32768.0).round().clamp(0.0, 65535.0) as u32;
    ((v >> 8) as u8, (v & 0xff) as u8)
}

/// Scratch buffers reused across steps so generation does not allocate.
struct Scratch<T> {
    x: Vec<T>,
    gates_in: Vec<T>,
    gates_rec: Vec<T>,
    new_state: Vec<T>,
    feat: Vec<T>,
    logits: Vec<T>,
    int_scratch: MatVecScratch,
    probs: Vec<f32>,
    multiplies: u64,
}

impl<T: Scalar> Scratch<T> {
    fn new(config: &MbWaveRnnConfig) -> Self {
        Scratch {
            x: Vec::with_capacity(config.fine_input_dim()),
            gates_in: vec![T::zero(); 3 * config.gru_size],
            gates_rec: vec![T::zero(); 3 * config.gru_size],
            new_state: vec![T::zero(); config.gru_size],
            feat: vec![T::zero(); config.affine_size],
            logits: vec![T::zero(); LEVELS],
            int_scratch: MatVecScratch::default(),
            probs: vec![0.0f32; LEVELS],
            multiplies: 0,
        }
    }
}

impl<T: Scalar, M: MatVec<T>> MbWaveRnn<T, M> {
    /// Assembles a model from raw parts, validating every shape against the
    /// configuration.
    pub fn from_parts(
        config: MbWaveRnnConfig,
        coarse: PathParams<T, M>,
        fine: PathParams<T, M>,
    ) -> Result<Self> {
        config.validate()?;
        coarse.validate(&config, config.coarse_input_dim(), "coarse")?;
        fine.validate(&config, config.fine_input_dim(), "fine")?;
        Ok(MbWaveRnn {
            config,
            coarse,
            fine,
        })
    }

    pub fn config(&self) -> &MbWaveRnnConfig {
        &self.config
    }

    fn check_step_inputs(
        &self,
        state: &RnnState<T>,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        conditioning: Option<&[T]>,
    ) -> Result<()> {
        let g = self.config.gru_size;
        let b = self.config.num_bands;
        if state.coarse.len() != g || state.fine.len() != g {
            return Err(Error::dims(format!(
                "state size {}/{} vs gru size {g}",
                state.coarse.len(),
                state.fine.len()
            )));
        }
        if prev_coarse.len() != b || prev_fine.len() != b {
            return Err(Error::dims(format!(
                "previous samples per band: {}/{} vs {b} bands",
                prev_coarse.len(),
                prev_fine.len()
            )));
        }
        let cond_len = conditioning.map_or(0, |c| c.len());
        if cond_len != self.config.conditioning_dim {
            return Err(Error::dims(format!(
                "conditioning length {cond_len} vs configured {}",
                self.config.conditioning_dim
            )));
        }
        Ok(())
    }

    /// One GRU + affine + heads pass. `state_in` is read, `scratch.new_state`
    /// receives the updated state, and `logits_out[k]` the band-k logits.
    fn run_path(
        path: &PathParams<T, M>,
        state_in: &[T],
        scratch: &mut Scratch<T>,
        logits_out: &mut [Vec<T>],
    ) {
        let g = state_in.len();
        scratch.multiplies += path
            .input
            .matvec_into(&scratch.x, &mut scratch.gates_in, &mut scratch.int_scratch);
        scratch.multiplies +=
            path.recurrent
                .matvec_into(state_in, &mut scratch.gates_rec, &mut scratch.int_scratch);
        let (a_u, a_rest) = scratch.gates_in.split_at(g);
        let (a_r, a_c) = a_rest.split_at(g);
        let (r_u, r_rest) = scratch.gates_rec.split_at(g);
        let (r_r, r_c) = r_rest.split_at(g);
        let (b_u, b_rest) = path.gate_bias.split_at(g);
        let (b_r, b_c) = b_rest.split_at(g);
        let new_state = &mut scratch.new_state[..g];
        for i in 0..g {
            let update = (a_u[i] + b_u[i] + r_u[i]).gate_sigmoid();
            let reset = (a_r[i] + b_r[i] + r_r[i]).gate_sigmoid();
            let cand = (a_c[i] + b_c[i] + reset * r_c[i]).gate_tanh();
            new_state[i] = update * state_in[i] + (T::one() - update) * cand;
        }
        scratch.multiplies += path.affine.matvec_into(
            &scratch.new_state,
            &mut scratch.feat,
            &mut scratch.int_scratch,
        );
        for (f, b) in scratch.feat.iter_mut().zip(&path.affine_bias) {
            *f = (*f + *b).max(T::zero());
        }
        for (k, head) in path.heads.iter().enumerate() {
            scratch.multiplies +=
                head.matvec_into(&scratch.feat, &mut scratch.logits, &mut scratch.int_scratch);
            let out = &mut logits_out[k];
            out.clear();
            out.extend(
                scratch
                    .logits
                    .iter()
                    .zip(&path.head_bias[k])
                    .map(|(l, b)| *l + *b),
            );
        }
    }

    fn fill_coarse_input(&self, prev_coarse: &[u8], prev_fine: &[u8], cond: Option<&[T]>, x: &mut Vec<T>) {
        x.clear();
        x.extend(prev_coarse.iter().map(|&c| centered::<T>(c)));
        x.extend(prev_fine.iter().map(|&f| centered::<T>(f)));
        if let Some(c) = cond {
            x.extend_from_slice(c);
        }
    }

    fn fill_fine_input(
        &self,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        current_coarse: &[u8],
        cond: Option<&[T]>,
        x: &mut Vec<T>,
    ) {
        x.clear();
        x.extend(prev_coarse.iter().map(|&c| centered::<T>(c)));
        x.extend(prev_fine.iter().map(|&f| centered::<T>(f)));
        x.extend(current_coarse.iter().map(|&c| centered::<T>(c)));
        if let Some(c) = cond {
            x.extend_from_slice(c);
        }
    }

    /// Coarse pass only: logits per band and the advanced coarse state.
    pub fn step_coarse(
        &self,
        state: &RnnState<T>,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        conditioning: Option<&[T]>,
    ) -> Result<(Vec<Vec<T>>, Vec<T>)> {
        self.check_step_inputs(state, prev_coarse, prev_fine, conditioning)?;
        let mut scratch = Scratch::new(&self.config);
        let mut logits = vec![Vec::new(); self.config.num_bands];
        self.fill_coarse_input(prev_coarse, prev_fine, conditioning, &mut scratch.x);
        Self::run_path(&self.coarse, &state.coarse, &mut scratch, &mut logits);
        Ok((logits, scratch.new_state))
    }

    /// Fine pass only: requires the coarse samples drawn in this step.
    pub fn step_fine(
        &self,
        state: &RnnState<T>,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        current_coarse: &[u8],
        conditioning: Option<&[T]>,
    ) -> Result<(Vec<Vec<T>>, Vec<T>)> {
        self.check_step_inputs(state, prev_coarse, prev_fine, conditioning)?;
        if current_coarse.len() != self.config.num_bands {
            return Err(Error::dims("current coarse samples per band"));
        }
        let mut scratch = Scratch::new(&self.config);
        let mut logits = vec![Vec::new(); self.config.num_bands];
        self.fill_fine_input(
            prev_coarse,
            prev_fine,
            current_coarse,
            conditioning,
            &mut scratch.x,
        );
        Self::run_path(&self.fine, &state.fine, &mut scratch, &mut logits);
        Ok((logits, scratch.new_state))
    }

    /// Both passes with the current-step coarse samples supplied by the
    /// caller (known upfront under teacher forcing; during free-running
    /// generation use `step_coarse`, sample, then `step_fine`).
    pub fn step(
        &self,
        state: &RnnState<T>,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        current_coarse: &[u8],
        conditioning: Option<&[T]>,
    ) -> Result<StepOutput<T>> {
        let (coarse_logits, new_coarse) =
            self.step_coarse(state, prev_coarse, prev_fine, conditioning)?;
        let (fine_logits, new_fine) =
            self.step_fine(state, prev_coarse, prev_fine, current_coarse, conditioning)?;
        Ok(StepOutput {
            coarse_logits,
            fine_logits,
            new_state: RnnState {
                coarse: new_coarse,
                fine: new_fine,
            },
        })
    }

    /// Autoregressive generation of `num_subband_steps` samples per band.
    ///
    /// States start at zero, previous samples at the midpoint category 128.
    /// Per step the RNG is consumed in band order: all coarse draws, then all
    /// fine draws. Identical params, conditioning, seed and temperature give
    /// bit-identical output.
    pub fn generate(
        &self,
        num_subband_steps: usize,
        conditioning: Option<&[Vec<T>]>,
        rng: &mut Rng,
        temperature: f64,
    ) -> Result<SubbandSignals<T>> {
        Ok(self
            .generate_with_stats(num_subband_steps, conditioning, rng, temperature)?
            .0)
    }

    /// `generate` plus kernel instrumentation.
    pub fn generate_with_stats(
        &self,
        num_subband_steps: usize,
        conditioning: Option<&[Vec<T>]>,
        rng: &mut Rng,
        temperature: f64,
    ) -> Result<(SubbandSignals<T>, GenerateStats)> {
        if let Some(cond) = conditioning {
            if cond.len() != num_subband_steps {
                return Err(Error::dims(format!(
                    "conditioning has {} entries for {num_subband_steps} steps",
                    cond.len()
                )));
            }
            if cond.iter().any(|c| c.len() != self.config.conditioning_dim) {
                return Err(Error::dims(format!(
                    "conditioning vectors must have length {}",
                    self.config.conditioning_dim
                )));
            }
        } else if self.config.conditioning_dim != 0 {
            return Err(Error::invalid(
                "model expects conditioning but none was provided",
            ));
        }
        if temperature <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }

        let b = self.config.num_bands;
        let mut scratch = Scratch::new(&self.config);
        let mut state = RnnState::zeros(&self.config);
        let mut prev_coarse = vec![MID_LEVEL; b];
        let mut prev_fine = vec![MID_LEVEL; b];
        let mut cur_coarse = vec![0u8; b];
        let mut cur_fine = vec![0u8; b];
        let mut logits = vec![Vec::with_capacity(LEVELS); b];
        let mut bands: Vec<Vec<T>> = vec![Vec::with_capacity(num_subband_steps); b];

        for t in 0..num_subband_steps {
            let cond = conditioning.map(|c| c[t].as_slice());

            self.fill_coarse_input(&prev_coarse, &prev_fine, cond, &mut scratch.x);
            {
                let (state_in, rest) = (&state.coarse, &mut scratch);
                Self::run_path(&self.coarse, state_in, rest, &mut logits);
            }
            std::mem::swap(&mut state.coarse, &mut scratch.new_state);
            for k in 0..b {
                cur_coarse[k] =
                    sample_from_logits(&logits[k], rng, temperature, &mut scratch.probs)? as u8;
            }

            self.fill_fine_input(&prev_coarse, &prev_fine, &cur_coarse, cond, &mut scratch.x);
            {
                let (state_in, rest) = (&state.fine, &mut scratch);
                Self::run_path(&self.fine, state_in, rest, &mut logits);
            }
            std::mem::swap(&mut state.fine, &mut scratch.new_state);
            for k in 0..b {
                cur_fine[k] =
                    sample_from_logits(&logits[k], rng, temperature, &mut scratch.probs)? as u8;
            }

            for k in 0..b {
                bands[k].push(sample_value(cur_coarse[k], cur_fine[k]));
            }
            prev_coarse.copy_from_slice(&cur_coarse);
            prev_fine.copy_from_slice(&cur_fine);
        }

        let stats = GenerateStats {
            steps: num_subband_steps,
            multiplies: scratch.multiplies,
        };
        let signals = SubbandSignals::new(bands, self.config.sample_rate)?;
        Ok((signals, stats))
    }

    /// Mean negative log-likelihood per softmax of target subband audio under
    /// teacher forcing, over all steps, bands, and both coarse/fine heads.
    pub fn teacher_forced_nll(
        &self,
        targets: &SubbandSignals<T>,
        conditioning: Option<&[Vec<T>]>,
    ) -> Result<f64> {
        let b = self.config.num_bands;
        if targets.num_bands() != b {
            return Err(Error::dims(format!(
                "targets have {} bands, model {b}",
                targets.num_bands()
            )));
        }
        let steps = targets.band_len();
        if steps == 0 {
            return Err(Error::invalid("empty targets"));
        }
        if let Some(cond) = conditioning {
            if cond.len() != steps {
                return Err(Error::dims("conditioning length vs target steps"));
            }
            if cond.iter().any(|c| c.len() != self.config.conditioning_dim) {
                return Err(Error::dims(format!(
                    "conditioning vectors must have length {}",
                    self.config.conditioning_dim
                )));
            }
        } else if self.config.conditioning_dim != 0 {
            return Err(Error::invalid(
                "model expects conditioning but none was provided",
            ));
        }
        for k in 0..b {
            if targets.band(k).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("target samples"));
            }
        }

        let mut scratch = Scratch::new(&self.config);
        let mut state = RnnState::zeros(&self.config);
        let mut prev_coarse = vec![MID_LEVEL; b];
        let mut prev_fine = vec![MID_LEVEL; b];
        let mut logits = vec![Vec::with_capacity(LEVELS); b];
        let mut total = 0.0f64;
        let mut count = 0usize;

        for t in 0..steps {
            let cond = conditioning.map(|c| c[t].as_slice());
            let split: Vec<(u8, u8)> = (0..b).map(|k| split_sample(targets.band(k)[t])).collect();
            let cur_coarse: Vec<u8> = split.iter().map(|s| s.0).collect();
            let cur_fine: Vec<u8> = split.iter().map(|s| s.1).collect();

            self.fill_coarse_input(&prev_coarse, &prev_fine, cond, &mut scratch.x);
            Self::run_path(&self.coarse, &state.coarse, &mut scratch, &mut logits);
            std::mem::swap(&mut state.coarse, &mut scratch.new_state);
            for k in 0..b {
                total += nll_from_logits(&logits[k], cur_coarse[k] as usize);
                count += 1;
            }

            self.fill_fine_input(&prev_coarse, &prev_fine, &cur_coarse, cond, &mut scratch.x);
            Self::run_path(&self.fine, &state.fine, &mut scratch, &mut logits);
            std::mem::swap(&mut state.fine, &mut scratch.new_state);
            for k in 0..b {
                total += nll_from_logits(&logits[k], cur_fine[k] as usize);
                count += 1;
            }

            prev_coarse.copy_from_slice(&cur_coarse);
            prev_fine.copy_from_slice(&cur_fine);
        }
        Ok(total / count as f64)
    }
}

impl<T: Scalar> FloatModel<T> {
    /// All-zero model (uniform output distributions, fixed-point zero state).
    pub fn zeros(config: MbWaveRnnConfig) -> Result<Self> {
        config.validate()?;
        let make_path = |input_dim: usize| PathParams {
            input: Matrix::zeros(3 * config.gru_size, input_dim),
            recurrent: Matrix::zeros(3 * config.gru_size, config.gru_size),
            gate_bias: vec![T::zero(); 3 * config.gru_size],
            affine: Matrix::zeros(config.affine_size, config.gru_size),
            affine_bias: vec![T::zero(); config.affine_size],
            heads: (0..config.num_bands)
                .map(|_| Matrix::zeros(LEVELS, config.affine_size))
                .collect(),
            head_bias: vec![vec![T::zero(); LEVELS]; config.num_bands],
        };
        MbWaveRnn::from_parts(
            config,
            make_path(config.coarse_input_dim()),
            make_path(config.fine_input_dim()),
        )
    }

    /// Seeded random model with fan-in-scaled uniform weights; used by the
    /// benchmark harness so runs are reproducible without trained weights.
    pub fn random(config: MbWaveRnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut matrix = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| T::cast_from(rng.uniform(-bound, bound)))
        };
        let mut make_path = |input_dim: usize| {
            let input = matrix(3 * config.gru_size, input_dim);
            let recurrent = matrix(3 * config.gru_size, config.gru_size);
            let affine = matrix(config.affine_size, config.gru_size);
            let heads = (0..config.num_bands)
                .map(|_| matrix(LEVELS, config.affine_size))
                .collect();
            PathParams {
                input,
                recurrent,
                gate_bias: vec![T::zero(); 3 * config.gru_size],
                affine,
                affine_bias: vec![T::zero(); config.affine_size],
                heads,
                head_bias: vec![vec![T::zero(); LEVELS]; config.num_bands],
            }
        };
        let coarse = make_path(config.coarse_input_dim());
        let fine = make_path(config.fine_input_dim());
        MbWaveRnn::from_parts(config, coarse, fine)
    }

    /// int8-quantizes every weight matrix; biases stay float.
    pub fn quantize(&self) -> Result<QuantizedModel<T>> {
        let quantize_path = |p: &PathParams<T, Matrix<T>>| -> Result<PathParams<T, QuantizedTensor<T>>> {
            Ok(PathParams {
                input: quantize(&p.input)?,
                recurrent: quantize(&p.recurrent)?,
                gate_bias: p.gate_bias.clone(),
                affine: quantize(&p.affine)?,
                affine_bias: p.affine_bias.clone(),
                heads: p.heads.iter().map(quantize).collect::<Result<_>>()?,
                head_bias: p.head_bias.clone(),
            })
        };
        MbWaveRnn::from_parts(
            self.config,
            quantize_path(&self.coarse)?,
            quantize_path(&self.fine)?,
        )
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> FloatModel<U> {
        let cast_path = |p: &PathParams<T, Matrix<T>>| PathParams {
            input: p.input.cast::<U>(),
            recurrent: p.recurrent.cast::<U>(),
            gate_bias: p.gate_bias.iter().map(|v| U::cast_from(v.as_f64())).collect(),
            affine: p.affine.cast::<U>(),
            affine_bias: p.affine_bias.iter().map(|v| U::cast_from(v.as_f64())).collect(),
            heads: p.heads.iter().map(|h| h.cast::<U>()).collect(),
            head_bias: p
                .head_bias
                .iter()
                .map(|b| b.iter().map(|v| U::cast_from(v.as_f64())).collect())
                .collect(),
        };
        MbWaveRnn {
            config: self.config,
            coarse: cast_path(&self.coarse),
            fine: cast_path(&self.fine),
        }
    }
}

fn nll_from_logits<T: Scalar>(logits: &[T], target: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for l in logits {
        max = max.max(l.as_f64());
    }
    let mut sum = 0.0f64;
    for l in logits {
        sum += (l.as_f64() - max).exp();
    }
    sum.ln() + max - logits[target].as_f64()
}

fn sample_from_logits<T: Scalar>(
    logits: &[T],
    rng: &mut Rng,
    temperature: f64,
    probs: &mut [f32],
) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logits"));
    }
    debug_assert_eq!(probs.len(), logits.len());

    // Max and finiteness in one pass; a non-finite entry poisons the sum.
    let mut max = f32::NEG_INFINITY;
    let mut sum_check = 0.0f32;
    for l in logits {
        let v = l.as_f64() as f32;
        max = max.max(v);
        sum_check += v * 0.0;
    }
    if !(sum_check == 0.0 && max.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }

    // Exponentials via the branchless fast exp (exact at 0, so a flat logit
    // vector stays exactly uniform), accumulating sums per 16-element chunk
    // so the CDF walk below touches ~32 values instead of 256.
    let inv_t = (1.0 / temperature) as f32;
    let mut chunk_sums = [0.0f64; 16];
    let n = logits.len();
    for (ci, (pc, lc)) in probs.chunks_mut(16).zip(logits.chunks(16)).enumerate() {
        let mut cs = 0.0f32;
        for (p, l) in pc.iter_mut().zip(lc) {
            let e = crate::fastmath::exp_f32((l.as_f64() as f32 - max) * inv_t);
            *p = e;
            cs += e;
        }
        if ci < 16 {
            chunk_sums[ci] = cs as f64;
        }
    }
    let num_chunks = n.div_ceil(16);
    let total: f64 = if num_chunks <= 16 {
        chunk_sums[..num_chunks].iter().sum()
    } else {
        probs.iter().map(|&p| p as f64).sum()
    };
    let draw = rng.next_f64() * total;

    if num_chunks <= 16 {
        let mut cum = 0.0f64;
        for ci in 0..num_chunks {
            if draw < cum + chunk_sums[ci] {
                let base = ci * 16;
                let end = (base + 16).min(n);
                for i in base..end {
                    cum += probs[i] as f64;
                    if draw < cum {
                        return Ok(i);
                    }
                }
                return Ok(end - 1);
            }
            cum += chunk_sums[ci];
        }
    } else {
        let mut cum = 0.0f64;
        for (i, p) in probs.iter().enumerate() {
            cum += *p as f64;
            if draw < cum {
                return Ok(i);
            }
        }
    }
    Ok(n - 1)
}

/// Draws an index from `softmax(logits / temperature)` with the supplied
/// deterministic RNG. For the 256-way heads the draw is one byte of the
/// 16-bit sample `coarse * 256 + fine`, which maps to [-1, 1) via
/// [`sample_value`].
pub fn sample_categorical<T: Scalar>(
    logits: &[T],
    rng: &mut Rng,
    temperature: f64,
) -> Result<usize> {
    if temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let mut probs = vec![0.0f32; logits.len()];
    sample_from_logits(logits, rng, temperature, &mut probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(g: usize, f: usize, b: usize, r: u32) -> MbWaveRnnConfig {
        MbWaveRnnConfig::new(g, f, b, r)
    }

    #[test]
    fn flops_match_published_sizes() {
        assert_eq!(
            cfg(192, 192, 1, 16_000).flops_per_second_exact().unwrap(),
            9_830_400_000
        );
        assert_eq!(
            cfg(192, 192, 4, 16_000).flops_per_second_exact().unwrap(),
            3_637_248_000
        );
        assert_eq!(cfg(0, 0, 1, 16_000).flops_per_second_exact().unwrap(), 0);
    }

    #[test]
    fn flops_scale_with_rate_and_band_ratio_is_exact() {
        let base = cfg(192, 192, 1, 16_000).flops_per_second_exact().unwrap();
        let doubled = cfg(192, 192, 1, 32_000).flops_per_second_exact().unwrap();
        assert_eq!(doubled, 2 * base);
        // fullband vs 4-band at Nf = Ng = 192 is exactly 100 : 37.
        let four = cfg(192, 192, 4, 16_000).flops_per_second_exact().unwrap();
        assert_eq!(base * 37, four * 100);
    }

    #[test]
    fn flops_reject_indivisible_rate() {
        assert!(cfg(192, 192, 3, 16_000).flops_per_second_exact().is_err());
    }

    #[test]
    fn zero_model_step_gives_zero_logits_and_state() {
        let config = cfg(8, 8, 2, 8000);
        let model = FloatModel::<f64>::zeros(config).unwrap();
        let state = RnnState::zeros(&config);
        let out = model
            .step(&state, &[128, 128], &[128, 128], &[128, 128], None)
            .unwrap();
        for k in 0..2 {
            assert!(out.coarse_logits[k].iter().all(|&v| v == 0.0));
            assert!(out.fine_logits[k].iter().all(|&v| v == 0.0));
        }
        assert!(out.new_state.coarse.iter().all(|&v| v == 0.0));
        assert!(out.new_state.fine.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_model_nll_is_ln_256() {
        let config = cfg(8, 8, 2, 8000);
        let model = FloatModel::<f64>::zeros(config).unwrap();
        let targets = SubbandSignals::new(vec![vec![0.25; 10], vec![-0.5; 10]], 8000).unwrap();
        let nll = model.teacher_forced_nll(&targets, None).unwrap();
        assert!((nll - 256.0f64.ln()).abs() < 1e-12, "nll {nll}");
    }

    #[test]
    fn zero_model_generates_uniform_bytes() {
        let config = cfg(4, 4, 2, 8000);
        let model = FloatModel::<f64>::zeros(config).unwrap();
        let mut rng = Rng::new(99);
        let out = model.generate(100, None, &mut rng, 1.0).unwrap();
        assert_eq!(out.num_bands(), 2);
        assert_eq!(out.band_len(), 100);
        for k in 0..2 {
            assert!(out.band(k).iter().all(|v| (-1.0..1.0).contains(v)));
        }
        // Not all equal: a uniform byte source repeating 100 times twice over
        // two bands is astronomically unlikely to be constant.
        assert!(out.band(0).windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let config = cfg(12, 10, 2, 8000);
        let model = FloatModel::<f32>::random(config, 1234).unwrap();
        let mut r1 = Rng::new(77);
        let mut r2 = Rng::new(77);
        let a = model.generate(50, None, &mut r1, 0.9).unwrap();
        let b = model.generate(50, None, &mut r2, 0.9).unwrap();
        for k in 0..2 {
            assert_eq!(a.band(k), b.band(k));
        }
    }

    #[test]
    fn instrumented_multiplies_match_analytic_count() {
        let config = cfg(12, 10, 2, 8000);
        let model = FloatModel::<f32>::random(config, 5).unwrap();
        let mut rng = Rng::new(1);
        let steps = 17;
        let (_, stats) = model
            .generate_with_stats(steps, None, &mut rng, 1.0)
            .unwrap();
        assert_eq!(stats.multiplies, steps as u64 * config.multiplies_per_step());
    }

    #[test]
    fn actual_count_matches_nominal_when_widths_align() {
        // 2 Ng = 5 Nb + 2 cond and Nf = Ng makes the two accountings equal.
        let config = cfg(5, 5, 2, 8000);
        assert_eq!(
            config.multiplies_per_step(),
            config.nominal_multiplies_per_step().unwrap()
        );
    }

    #[test]
    fn sampling_degenerate_logit_always_wins() {
        let mut logits = vec![0.0f64; LEVELS];
        logits[37] = 1e6;
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            assert_eq!(sample_categorical(&logits, &mut rng, 1.0).unwrap(), 37);
        }
    }

    #[test]
    fn sampling_rejects_bad_inputs() {
        let mut rng = Rng::new(3);
        let logits = vec![f64::NAN; LEVELS];
        assert!(sample_categorical(&logits, &mut rng, 1.0).is_err());
        let logits = vec![0.0f64; LEVELS];
        assert!(sample_categorical(&logits, &mut rng, 0.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let logits: Vec<f64> = (0..LEVELS).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut a = Rng::new(5);
        let mut b = Rng::new(5);
        for _ in 0..200 {
            assert_eq!(
                sample_categorical(&logits, &mut a, 0.8).unwrap(),
                sample_categorical(&logits, &mut b, 0.8).unwrap()
            );
        }
    }

    #[test]
    fn uniform_sampling_frequencies_within_binomial_bound() {
        let logits = vec![0.0f64; LEVELS];
        let mut rng = Rng::new(2024);
        let draws = 65_536usize;
        let mut counts = [0u32; LEVELS];
        for _ in 0..draws {
            counts[sample_categorical(&logits, &mut rng, 1.0).unwrap()] += 1;
        }
        let p = 1.0 / LEVELS as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let expected = draws as f64 * p;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 5.0 * sigma,
                "index {i}: count {c}, expected {expected} +/- {}",
                5.0 * sigma
            );
        }
    }

    #[test]
    fn nll_ignores_conditioning_through_zero_weights() {
        let config = cfg(6, 6, 1, 8000).with_conditioning(3);
        let mut model = FloatModel::<f64>::random(config, 9).unwrap();
        // Zero the conditioning columns of both input projections.
        for path in [&mut model.coarse, &mut model.fine] {
            let cols = path.input.cols();
            for i in 0..path.input.rows() {
                for j in cols - 3..cols {
                    path.input.set(i, j, 0.0);
                }
            }
        }
        let targets = SubbandSignals::new(vec![vec![0.1, -0.2, 0.3, 0.0, 0.5]], 8000).unwrap();
        let cond_a = vec![vec![0.0; 3]; 5];
        let cond_b = vec![vec![123.0, -4.0, 0.25]; 5];
        let a = model.teacher_forced_nll(&targets, Some(&cond_a)).unwrap();
        let b = model.teacher_forced_nll(&targets, Some(&cond_b)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_rejects_dimension_mismatches() {
        let config = cfg(8, 8, 2, 8000);
        let model = FloatModel::<f64>::zeros(config).unwrap();
        let state = RnnState::zeros(&config);
        assert!(model.step(&state, &[128], &[128, 128], &[128, 128], None).is_err());
        let bad_state = RnnState {
            coarse: vec![0.0; 7],
            fine: vec![0.0; 8],
        };
        assert!(model
            .step(&bad_state, &[128, 128], &[128, 128], &[128, 128], None)
            .is_err());
        assert!(model
            .step(&state, &[128, 128], &[128, 128], &[128, 128], Some(&[0.0]))
            .is_err());
    }

    #[test]
    fn generate_synthesize_length_arithmetic() {
        use crate::multirate::synthesize;
        use crate::qmf::{design_prototype, modulate, DEFAULT_TRANSITION_WEIGHT};
        let config = cfg(6, 6, 4, 16_000);
        let model = FloatModel::<f64>::random(config, 21).unwrap();
        let mut rng = Rng::new(4);
        let steps = 64;
        let sub = model.generate(steps, None, &mut rng, 1.0).unwrap();
        let bank = modulate(&design_prototype(4, 63, DEFAULT_TRANSITION_WEIGHT).unwrap());
        let full = synthesize(&sub, &bank).unwrap();
        assert_eq!(full.len(), steps * 4 + 64 - 1);
    }

    #[test]
    fn split_sample_roundtrip() {
        for &(c, f) in &[(0u8, 0u8), (128, 0), (255, 255), (17, 200)] {
            let v = sample_value::<f64>(c, f);
            assert_eq!(split_sample(v), (c, f));
        }
    }

    #[test]
    fn quantized_model_steps_close_to_float() {
        let config = cfg(24, 24, 2, 8000);
        let model = FloatModel::<f32>::random(config, 31).unwrap();
        let quantized = model.quantize().unwrap();
        let state = RnnState::zeros(&config);
        let out_f = model
            .step(&state, &[100, 30], &[5, 250], &[128, 128], None)
            .unwrap();
        let out_q = quantized
            .step(&state, &[100, 30], &[5, 250], &[128, 128], None)
            .unwrap();
        for k in 0..2 {
            for i in 0..LEVELS {
                let d = (out_f.coarse_logits[k][i] - out_q.coarse_logits[k][i]).abs();
                assert!(d < 0.1, "band {k} logit {i} differs by {d}");
            }
        }
    }
}
