use std::fs;
use std::path::{Path, PathBuf};

use mbvoc_core::durian::{parse_symbols, state_expand, DurationSequence, HiddenStates};
use mbvoc_core::multirate::{analyze, reconstruction_lag, roundtrip_snr, synthesize, AudioSignal, SubbandSignals};
use mbvoc_core::params::{self, LoadedModel};
use mbvoc_core::qmf::{
    self, band0_stopband_start, bank_power_flatness, design_prototype, frequency_response,
    modulate, power_complementarity_residual, stopband_attenuation_db, FilterBank,
    PrototypeFilter,
};
use mbvoc_core::rng::Rng;
use mbvoc_core::wavernn::{FloatModel, MbWaveRnnConfig};

use crate::bench::{audio_seconds, run_bench};
use crate::cli::*;
use crate::error::{CliError, CliResult};
use crate::report::*;
use crate::wav;

/// Seed resolution: flag first, then the MBVOC_SEED variable. Randomness
/// without a seed is a validation error so every run is reproducible.
fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("MBVOC_SEED") {
        Ok(v) => v.parse::<u64>().map_err(|_| {
            CliError::validation(format!("MBVOC_SEED is not an unsigned integer: '{v}'"))
        }),
        Err(_) => Err(CliError::validation(
            "a seed is required: pass --seed or set MBVOC_SEED",
        )),
    }
}

fn load_prototype(path: &Path, bands: usize) -> CliResult<PrototypeFilter<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut taps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            CliError::validation(format!(
                "{}: line {} is not a number: '{line}'",
                path.display(),
                i + 1
            ))
        })?;
        taps.push(v);
    }
    Ok(PrototypeFilter::from_taps(taps, bands)?)
}

fn resolve_bank(bank: &BankArgs) -> CliResult<FilterBank<f64>> {
    let prototype = match &bank.prototype {
        Some(path) => load_prototype(path, bank.bands)?,
        None => design_prototype(bank.bands, bank.order, qmf::DEFAULT_TRANSITION_WEIGHT)?,
    };
    Ok(modulate(&prototype))
}

fn write_taps(path: &Path, taps: &[f64]) -> CliResult<()> {
    let mut text = String::with_capacity(taps.len() * 24);
    for t in taps {
        text.push_str(&format!("{t}\n"));
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn write_response_csv(path: &Path, taps: &[f64], points: usize) -> CliResult<()> {
    let resp = frequency_response(taps, points)?;
    let mut text = String::with_capacity(points * 32);
    text.push_str("normalized_frequency,magnitude_db\n");
    for (f, m) in resp.grid().iter().zip(resp.magnitude_db()) {
        text.push_str(&format!("{f},{m}\n"));
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn run_design(args: &DesignArgs) -> CliResult<()> {
    let prototype: PrototypeFilter<f64> =
        design_prototype(args.bands, args.order, args.transition_weight)?;
    let bank = modulate(&prototype);

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(format!("{}: {e}", args.out_dir.display())))?;
    let mut files = Vec::new();
    let mut emit = |name: String, taps: &[f64]| -> CliResult<()> {
        let path = args.out_dir.join(&name);
        write_taps(&path, taps)?;
        files.push(name);
        Ok(())
    };
    emit("prototype.txt".into(), prototype.taps())?;
    for k in 0..args.bands {
        emit(format!("analysis_{k}.txt"), bank.analysis(k))?;
    }
    for k in 0..args.bands {
        emit(format!("synthesis_{k}.txt"), bank.synthesis(k))?;
    }
    write_response_csv(&args.out_dir.join("response.csv"), prototype.taps(), args.points)?;
    files.push("response.csv".into());
    if args.band_responses {
        for k in 0..args.bands {
            let name = format!("response_band{k}.csv");
            write_response_csv(&args.out_dir.join(&name), bank.analysis(k), args.points)?;
            files.push(name);
        }
    }

    let stopband =
        stopband_attenuation_db(bank.analysis(0), band0_stopband_start(args.bands), 4096);
    let residual = power_complementarity_residual(&prototype, 4096);
    let (deviation, level) = bank_power_flatness(&bank, 2048, 0.02);
    eprintln!(
        "designed {}-band order-{} bank: stopband {stopband:.1} dB, \
         complementarity residual {residual:.3e}",
        args.bands, args.order
    );
    print_report(&DesignReport {
        schema: "mbvoc.design.v1",
        num_bands: args.bands,
        order: args.order,
        transition_weight: args.transition_weight,
        stopband_attenuation_db: stopband,
        complementarity_residual: residual,
        power_sum_deviation: deviation,
        power_sum_level: level,
        files,
    })?;
    Ok(())
}

fn band_path(prefix: &str, k: usize) -> PathBuf {
    PathBuf::from(format!("{prefix}_band{k}.wav"))
}

pub fn run_split(args: &SplitArgs) -> CliResult<()> {
    let bank = resolve_bank(&args.bank)?;
    let n = bank.num_bands();
    let input = wav::read_wav(&args.input)?;
    let samples = input.mono()?;
    if input.sample_rate % n as u32 != 0 {
        return Err(CliError::validation(format!(
            "sample rate {} is not divisible by {n} bands",
            input.sample_rate
        )));
    }
    let band_rate = input.sample_rate / n as u32;
    let signal = AudioSignal::new(samples.iter().map(|&v| v as f64).collect(), input.sample_rate)?;
    let subbands = analyze(&signal, &bank)?;
    let as_f32: Vec<Vec<f32>> = subbands
        .bands()
        .iter()
        .map(|b| b.iter().map(|&v| v as f32).collect())
        .collect();

    let mut outputs = Vec::new();
    if args.multichannel {
        let path = PathBuf::from(format!("{}_bands.wav", args.out_prefix));
        wav::write_wav_f32(&path, band_rate, &as_f32)?;
        outputs.push(path.display().to_string());
    } else {
        for (k, band) in as_f32.iter().enumerate() {
            let path = band_path(&args.out_prefix, k);
            wav::write_wav_f32(&path, band_rate, std::slice::from_ref(band))?;
            outputs.push(path.display().to_string());
        }
    }
    print_report(&SplitReport {
        schema: "mbvoc.split.v1",
        input: args.input.display().to_string(),
        input_format: match input.format {
            wav::SampleFormat::PcmI16 => "pcm16",
            wav::SampleFormat::Float32 => "float32",
        },
        num_bands: n,
        band_sample_rate: band_rate,
        band_len: subbands.band_len(),
        outputs,
    })?;
    Ok(())
}

/// SNR of `merged` against `reference` after compensating the bank delay,
/// trimming one filter length of transient at each end.
fn merge_snr(reference: &[f64], merged: &[f64], filter_len: usize) -> Option<f64> {
    let delay = filter_len - 1;
    if reference.len() < 4 * filter_len {
        return None;
    }
    let lo = filter_len;
    let hi = reference.len().saturating_sub(filter_len);
    let mut signal = 0.0;
    let mut error = 0.0;
    for t in lo..hi {
        let m = merged.get(t + delay).copied().unwrap_or(0.0);
        let e = reference[t] - m;
        signal += reference[t] * reference[t];
        error += e * e;
    }
    if error == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(10.0 * (signal / error).log10())
}

pub fn run_merge(args: &MergeArgs) -> CliResult<()> {
    let bank = resolve_bank(&args.bank)?;
    let n = bank.num_bands();

    let (bands, band_rate): (Vec<Vec<f64>>, u32) = if let Some(input) = &args.input {
        let multi = wav::read_wav(input)?;
        if multi.num_channels() != n {
            return Err(CliError::validation(format!(
                "{} has {} channels, bank expects {n}",
                input.display(),
                multi.num_channels()
            )));
        }
        (
            multi
                .channels
                .iter()
                .map(|c| c.iter().map(|&v| v as f64).collect())
                .collect(),
            multi.sample_rate,
        )
    } else if let Some(prefix) = &args.in_prefix {
        let mut bands = Vec::with_capacity(n);
        let mut rate = None;
        for k in 0..n {
            let path = band_path(prefix, k);
            if !path.exists() {
                return Err(CliError::io(format!(
                    "missing band file for band {k}: {}",
                    path.display()
                )));
            }
            let data = wav::read_wav(&path)?;
            let mono = data.mono()?;
            match rate {
                None => rate = Some(data.sample_rate),
                Some(r) if r != data.sample_rate => {
                    return Err(CliError::validation(format!(
                        "band {k} sample rate {} differs from {}",
                        data.sample_rate, r
                    )))
                }
                _ => {}
            }
            bands.push(mono.iter().map(|&v| v as f64).collect());
        }
        (bands, rate.unwrap())
    } else {
        return Err(CliError::validation("provide --in-prefix or --input"));
    };

    let len = bands[0].len();
    if bands.iter().any(|b| b.len() != len) {
        return Err(CliError::validation("band files have different lengths"));
    }
    let full_rate = band_rate * n as u32;
    let subbands = SubbandSignals::new(bands, full_rate)?;
    let merged = synthesize(&subbands, &bank)?;
    let merged_f32: Vec<f32> = merged.samples().iter().map(|&v| v as f32).collect();
    match args.format {
        OutputFormat::I16 => wav::write_wav_i16_mono(&args.output, full_rate, &merged_f32)?,
        OutputFormat::F32 => {
            wav::write_wav_f32(&args.output, full_rate, std::slice::from_ref(&merged_f32))?
        }
    }

    let snr_db = match &args.reference {
        Some(path) => {
            let reference = wav::read_wav(path)?;
            let ref_samples: Vec<f64> = reference.mono()?.iter().map(|&v| v as f64).collect();
            let snr = merge_snr(&ref_samples, merged.samples(), bank.filter_len());
            if let Some(snr) = snr {
                eprintln!("round-trip SNR vs {}: {snr:.1} dB", path.display());
            }
            snr
        }
        None => None,
    };

    print_report(&MergeReport {
        schema: "mbvoc.merge.v1",
        output: args.output.display().to_string(),
        sample_rate: full_rate,
        samples: merged.len(),
        snr_db,
    })?;
    Ok(())
}

pub fn run_roundtrip(args: &RoundtripArgs) -> CliResult<()> {
    let bank = resolve_bank(&args.bank)?;
    let input = wav::read_wav(&args.input)?;
    let samples: Vec<f64> = input.mono()?.iter().map(|&v| v as f64).collect();
    let signal = AudioSignal::new(samples, input.sample_rate)?;
    let snr = roundtrip_snr(&signal, &bank)?;
    let delay = reconstruction_lag(&signal, &bank)?;
    print_report(&RoundtripReport {
        schema: "mbvoc.roundtrip.v1",
        input: args.input.display().to_string(),
        num_bands: bank.num_bands(),
        order: bank.filter_len() - 1,
        snr_db: snr,
        delay_samples: delay,
    })?;
    Ok(())
}

pub fn run_flops(args: &FlopsArgs) -> CliResult<()> {
    let config = MbWaveRnnConfig::new(args.gru, args.affine, args.bands, args.rate);
    let exact = config.flops_per_second_exact()?;
    print_report(&FlopsReport {
        schema: "mbvoc.flops.v1",
        gru_size: args.gru,
        affine_size: args.affine,
        num_bands: args.bands,
        sample_rate: args.rate,
        flops_per_second: exact,
        gflops: exact as f64 / 1e9,
    })?;
    Ok(())
}

/// Loads or synthesizes the model, then applies the requested arithmetic:
/// `int8` quantizes float weights in memory; `float` on an int8 file is an
/// error (the original weights are gone).
fn resolve_model(source: &ModelSource, arithmetic: Option<Arithmetic>) -> CliResult<LoadedModel> {
    let loaded = match (&source.params, source.random_seed) {
        (Some(path), _) => params::load_file(path)?,
        (None, Some(seed)) => {
            let config = MbWaveRnnConfig::new(source.gru, source.affine, source.bands, source.rate)
                .with_conditioning(source.conditioning);
            LoadedModel::Float(FloatModel::<f32>::random(config, seed)?)
        }
        (None, None) => {
            return Err(CliError::validation(
                "provide --params FILE or --random-seed N",
            ))
        }
    };
    match (arithmetic, loaded) {
        (None, model) => Ok(model),
        (Some(Arithmetic::Float), LoadedModel::Float(m)) => Ok(LoadedModel::Float(m)),
        (Some(Arithmetic::Float), LoadedModel::Quantized(_)) => Err(CliError::validation(
            "parameter file is int8-quantized; it cannot run float arithmetic",
        )),
        (Some(Arithmetic::Int8), LoadedModel::Float(m)) => {
            Ok(LoadedModel::Quantized(m.quantize()?))
        }
        (Some(Arithmetic::Int8), LoadedModel::Quantized(m)) => Ok(LoadedModel::Quantized(m)),
    }
}

pub fn run_bench_cmd(args: &BenchArgs) -> CliResult<()> {
    if args.threads != 1 {
        return Err(CliError::BenchContract(format!(
            "the benchmark contract is a single core; got --threads {}",
            args.threads
        )));
    }
    let seed = resolve_seed(args.seed)?;
    let model = resolve_model(&args.model, args.arithmetic)?;
    let config = *model.config();
    let steps = args.steps.unwrap_or(config.sample_rate as usize);
    if steps < config.sample_rate as usize {
        return Err(CliError::validation(format!(
            "need steps >= sample rate ({}) for stable timing, got {steps}",
            config.sample_rate
        )));
    }
    if let Some(path) = &args.save_params {
        match &model {
            LoadedModel::Float(m) => {
                params::save_file(path, &LoadedModel::Float(m.clone()))?;
            }
            LoadedModel::Quantized(m) => {
                params::save_file(path, &LoadedModel::Quantized(m.clone()))?;
            }
        }
        eprintln!("saved parameters to {}", path.display());
    }

    let outcome = run_bench(&model, steps, seed, args.temperature)?;
    print_report(&BenchReport {
        schema: "mbvoc.bench.v1",
        config: ConfigReport::from(&config),
        arithmetic: model.arithmetic().to_string(),
        steps: outcome.steps,
        warmup_steps: outcome.warmup_steps,
        threads: args.threads,
        seed,
        temperature: args.temperature,
        wall_seconds: outcome.wall_seconds,
        audio_seconds: outcome.audio_seconds,
        rtf: outcome.rtf,
        samples_per_second: outcome.samples_per_second,
        kernel_multiplies: outcome.kernel_multiplies,
        nominal_flops_per_second: config.flops_per_second_exact()?,
    })?;
    Ok(())
}

pub fn run_quantize(args: &QuantizeArgs) -> CliResult<()> {
    let loaded = params::load_file(&args.input)?;
    let LoadedModel::Float(model) = loaded else {
        return Err(CliError::validation(format!(
            "{} is already int8-quantized",
            args.input.display()
        )));
    };
    let quantized = model.quantize()?;
    params::save_file(&args.output, &LoadedModel::Quantized(quantized.clone()))?;
    let size = |p: &Path| fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    print_report(&QuantizeReport {
        schema: "mbvoc.quantize.v1",
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        config: ConfigReport::from(quantized.config()),
        input_bytes: size(&args.input),
        output_bytes: size(&args.output),
    })?;
    Ok(())
}

pub fn run_gen(args: &GenArgs) -> CliResult<()> {
    let seed = resolve_seed(args.seed)?;
    let model = resolve_model(&args.model, args.arithmetic)?;
    let config = *model.config();
    let mut rng = Rng::new(seed);
    let cond = crate::bench::zero_conditioning(&config, args.steps);
    let cond_ref = cond.as_deref();
    let subbands = match &model {
        LoadedModel::Float(m) => m.generate(args.steps, cond_ref, &mut rng, args.temperature)?,
        LoadedModel::Quantized(m) => m.generate(args.steps, cond_ref, &mut rng, args.temperature)?,
    };

    let mut subband_outputs = Vec::new();
    if let Some(prefix) = &args.subband_prefix {
        let band_rate = config.sample_rate / config.num_bands as u32;
        for k in 0..config.num_bands {
            let path = band_path(prefix, k);
            let band: Vec<f32> = subbands.band(k).to_vec();
            wav::write_wav_f32(&path, band_rate, std::slice::from_ref(&band))?;
            subband_outputs.push(path.display().to_string());
        }
    }

    let fullband: Vec<f32> = if config.num_bands == 1 {
        subbands.band(0).to_vec()
    } else {
        let prototype: PrototypeFilter<f32> = match &args.prototype {
            Some(path) => {
                let p64 = load_prototype(path, config.num_bands)?;
                PrototypeFilter::from_taps(
                    p64.taps().iter().map(|&t| t as f32).collect(),
                    config.num_bands,
                )?
            }
            None => design_prototype(
                config.num_bands,
                args.order,
                qmf::DEFAULT_TRANSITION_WEIGHT,
            )?,
        };
        let bank = modulate(&prototype);
        synthesize(&subbands, &bank)?.samples().to_vec()
    };
    match args.format {
        OutputFormat::I16 => wav::write_wav_i16_mono(&args.output, config.sample_rate, &fullband)?,
        OutputFormat::F32 => wav::write_wav_f32(
            &args.output,
            config.sample_rate,
            std::slice::from_ref(&fullband),
        )?,
    }

    print_report(&GenReport {
        schema: "mbvoc.gen.v1",
        config: ConfigReport::from(&config),
        arithmetic: model.arithmetic().to_string(),
        steps: args.steps,
        seed,
        temperature: args.temperature,
        audio_seconds: audio_seconds(&config, args.steps),
        output: args.output.display().to_string(),
        subband_outputs,
    })?;
    Ok(())
}

pub fn run_expand(args: &ExpandArgs) -> CliResult<()> {
    let symbol_text = fs::read_to_string(&args.symbols)
        .map_err(|e| CliError::io(format!("{}: {e}", args.symbols.display())))?;
    let tokens: Vec<&str> = symbol_text.split_whitespace().collect();
    let seq = parse_symbols(&tokens)?;

    let duration_text = fs::read_to_string(&args.durations)
        .map_err(|e| CliError::io(format!("{}: {e}", args.durations.display())))?;
    let mut raw = Vec::new();
    for (i, line) in duration_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line.parse().map_err(|_| {
            CliError::validation(format!(
                "{}: line {} is not an integer: '{line}'",
                args.durations.display(),
                i + 1
            ))
        })?;
        raw.push(v);
    }
    if raw.len() != seq.phoneme_count() {
        return Err(CliError::validation(format!(
            "{} durations for {} phonemes",
            raw.len(),
            seq.phoneme_count()
        )));
    }
    let durations = DurationSequence::new(&raw)?;

    let phonemes: Vec<&str> = seq.phonemes().collect();
    match &args.states {
        None => {
            // Without encoder states, expand the phoneme indices themselves.
            let states = HiddenStates::new(
                (0..phonemes.len()).map(|i| vec![i as f64]).collect(),
            )?;
            let expanded = state_expand(&states, &durations)?;
            println!("frame,phoneme,phoneme_index,position");
            for (t, v) in expanded.vectors().iter().enumerate() {
                let idx = v[0] as usize;
                println!("{t},{},{idx},{}", phonemes[idx], v[1]);
            }
        }
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let mut rows = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let row: Result<Vec<f64>, _> =
                    line.split(',').map(|c| c.trim().parse::<f64>()).collect();
                let row = row.map_err(|_| {
                    CliError::validation(format!(
                        "{}: line {} is not a CSV row of numbers",
                        path.display(),
                        i + 1
                    ))
                })?;
                rows.push(row);
            }
            let states = HiddenStates::new(rows)?;
            if states.len() != phonemes.len() {
                return Err(CliError::validation(format!(
                    "{} state rows for {} phonemes",
                    states.len(),
                    phonemes.len()
                )));
            }
            let expanded = state_expand(&states, &durations)?;
            let dim = states.dim();
            let header: Vec<String> = (0..dim).map(|d| format!("h{d}")).collect();
            println!("frame,{},position", header.join(","));
            for (t, v) in expanded.vectors().iter().enumerate() {
                let cells: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                println!("{t},{}", cells.join(","));
            }
        }
    }
    Ok(())
}
