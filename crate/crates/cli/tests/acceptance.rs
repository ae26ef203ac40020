//! Acceptance suite: one test per shipping criterion, each ending in a
//! printed PASS line (visible under `--nocapture`). Tolerances are pinned in
//! the assertions; nothing here is calibrated at run time.
//!
//! Run with:
//! `cargo test -p mbvoc-cli --test acceptance -- --nocapture --test-threads=1`

use std::process::Command;

use mbvoc_core::durian::{
    durian_loss, parse_symbols, skip_filter, state_expand, DurationSequence, HiddenStates,
};
use mbvoc_core::mat::Matrix;
use mbvoc_core::multirate::{reconstruction_lag, roundtrip_snr, AudioSignal};
use mbvoc_core::qmf::{
    band0_stopband_start, bank_power_flatness, design_prototype, modulate,
    power_complementarity_residual, stopband_attenuation_db, DEFAULT_TRANSITION_WEIGHT,
};
use mbvoc_core::quant::{dequantize, qmatvec, quantize};
use mbvoc_core::rng::Rng;
use mbvoc_core::wavernn::{
    sample_categorical, FloatModel, MbWaveRnnConfig, PathParams, RnnState,
};
use mbvoc_core::SubbandSignals64;

#[test]
fn acceptance_1_flops_formula_exact() {
    let fullband = MbWaveRnnConfig::new(192, 192, 1, 16_000);
    let fourband = MbWaveRnnConfig::new(192, 192, 4, 16_000);
    assert_eq!(fullband.flops_per_second_exact().unwrap(), 9_830_400_000u64);
    assert_eq!(fourband.flops_per_second_exact().unwrap(), 3_637_248_000u64);
    assert_eq!(fullband.flops_per_second().unwrap(), 9.8304e9);
    assert_eq!(fourband.flops_per_second().unwrap(), 3.637248e9);
    println!("acceptance 1 (flops formula, exact): PASS");
}

#[test]
fn acceptance_2_filter_bank_quality() {
    let prototype = design_prototype::<f64>(4, 63, DEFAULT_TRANSITION_WEIGHT).unwrap();
    let bank = modulate(&prototype);
    let stopband = stopband_attenuation_db(bank.analysis(0), band0_stopband_start(4), 4096);
    assert!(
        stopband <= -60.0,
        "band-0 stopband attenuation {stopband:.1} dB exceeds -60 dB"
    );
    let (deviation, level) = bank_power_flatness(&bank, 2048, 0.02);
    assert!(
        deviation <= 0.02,
        "bank power sum deviates by {deviation:.4} around {level:.4}"
    );
    let residual = power_complementarity_residual(&prototype, 4096);
    assert!(residual <= 0.02, "complementarity residual {residual:.4}");
    println!(
        "acceptance 2 (filter bank quality): PASS \
         (stopband {stopband:.1} dB, residual {residual:.2e}, power-sum dev {deviation:.2e})"
    );
}

#[test]
fn acceptance_3_roundtrip_reconstruction() {
    let bank = modulate(&design_prototype::<f64>(4, 63, DEFAULT_TRANSITION_WEIGHT).unwrap());
    let mut rng = Rng::new(0xacce97);
    let n = 16_384;

    let white: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let sine: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * 1000.0 * t as f64 / 16_000.0).sin())
        .collect();
    let mut pink = Vec::with_capacity(n);
    let mut acc = 0.0;
    for _ in 0..n {
        acc = 0.98 * acc + rng.uniform(-1.0, 1.0);
        pink.push(acc);
    }

    let mut snrs = Vec::new();
    for (name, samples) in [("white noise", white), ("1 kHz sine", sine), ("1/f noise", pink)] {
        let signal = AudioSignal::new(samples, 16_000).unwrap();
        let snr = roundtrip_snr(&signal, &bank).unwrap();
        assert!(snr >= 55.0, "{name}: round-trip SNR {snr:.1} dB below 55 dB");
        let lag = reconstruction_lag(&signal, &bank).unwrap();
        assert_eq!(lag, 63, "{name}: cross-correlation delay {lag} != 63");
        snrs.push(format!("{name} {snr:.1} dB"));
    }
    println!(
        "acceptance 3 (round-trip reconstruction, delay 63): PASS ({})",
        snrs.join(", ")
    );
}

/// Runs one benchmark subprocess and returns its RTF after checking the
/// report's internal consistency.
fn bench_rtf(bands: u32, arithmetic: &str) -> f64 {
    let out = Command::new(env!("CARGO_BIN_EXE_mbvoc"))
        .args([
            "bench",
            "--random-seed",
            "42",
            "--gru",
            "192",
            "--affine",
            "192",
            "--rate",
            "16000",
            "--conditioning",
            "192",
            "--steps",
            "16000",
            "--seed",
            "5",
            "--threads",
            "1",
            "--arithmetic",
            arithmetic,
            "--bands",
        ])
        .arg(bands.to_string())
        .output()
        .expect("bench subprocess");
    assert!(
        out.status.success(),
        "bench failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let wall = report["wall_seconds"].as_f64().unwrap();
    let audio = report["audio_seconds"].as_f64().unwrap();
    let rtf = report["rtf"].as_f64().unwrap();
    assert!((rtf - wall / audio).abs() <= 1e-9 * rtf.max(1.0), "rtf field inconsistent");
    assert_eq!(report["threads"].as_u64().unwrap(), 1);
    rtf
}

#[test]
fn acceptance_4_multiband_and_int8_speedups() {
    // The complexity figures price the GRU input projections at the GRU
    // width, which in a deployed vocoder is the conditioning input; the grid
    // therefore benches with a 192-wide (zero-valued) conditioning vector so
    // the workload shape matches those figures. Configs are interleaved and
    // each takes its best of three runs, which cancels host-level drift.
    let mut float_1 = f64::INFINITY;
    let mut float_4 = f64::INFINITY;
    let mut int8_1 = f64::INFINITY;
    let mut int8_4 = f64::INFINITY;
    for _ in 0..3 {
        float_1 = float_1.min(bench_rtf(1, "float"));
        float_4 = float_4.min(bench_rtf(4, "float"));
        int8_1 = int8_1.min(bench_rtf(1, "int8"));
        int8_4 = int8_4.min(bench_rtf(4, "int8"));
    }
    let ratio_a = float_1 / float_4;
    let ratio_b_full = float_1 / int8_1;
    let ratio_b_4band = float_4 / int8_4;
    println!(
        "acceptance 4 grid: float {float_1:.3}/{float_4:.3}, int8 {int8_1:.3}/{int8_4:.3} \
         (fullband/4-band RTF)"
    );
    assert!(
        ratio_a >= 2.0,
        "(a) 4-band float speedup {ratio_a:.2} below 2.0 (float RTF {float_1:.3} vs {float_4:.3})"
    );
    assert!(
        ratio_b_full >= 2.0,
        "(b) int8 speedup {ratio_b_full:.2} below 2.0 at fullband"
    );
    assert!(
        ratio_b_4band >= 2.0,
        "(b) int8 speedup {ratio_b_4band:.2} below 2.0 at 4 bands"
    );
    assert!(int8_4 < 1.0, "(c) 4-band int8 RTF {int8_4:.3} not below 1.0");
    println!(
        "acceptance 4 (multi-band speedup): PASS \
         (a={ratio_a:.2}x, b={ratio_b_full:.2}x/{ratio_b_4band:.2}x, c={int8_4:.3})"
    );
}

#[test]
fn acceptance_5_quantization_fidelity() {
    let mut worst_rel_rms = 0.0f64;
    for instance in 0..100 {
        let mut rng = Rng::new(7000 + instance);
        let m = Matrix::from_fn(192, 192, |_, _| rng.gaussian());
        let q = quantize(&m).unwrap();
        let back = dequantize(&q);
        for i in 0..192 {
            let bound = q.scales()[i] / 2.0 + 1e-15;
            for j in 0..192 {
                let err = (m.get(i, j) - back.get(i, j)).abs();
                assert!(
                    err <= bound,
                    "instance {instance} row {i} col {j}: error {err} above scale/2"
                );
            }
        }
        let x: Vec<f64> = (0..192).map(|_| rng.gaussian()).collect();
        let got = qmatvec(&q, &x).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..192 {
            let exact: f64 = m.row(i).iter().zip(&x).map(|(w, v)| w * v).sum();
            err += (got[i] - exact).powi(2);
            norm += exact * exact;
        }
        worst_rel_rms = worst_rel_rms.max((err / norm).sqrt());
    }
    assert!(
        worst_rel_rms <= 0.02,
        "qmatvec relative RMS error {worst_rel_rms:.4} above 2%"
    );
    println!(
        "acceptance 5 (quantization fidelity): PASS (worst relative RMS {worst_rel_rms:.4})"
    );
}

mod oracle {
    //! Straight-line scalar reference for the recurrent step, independent of
    //! the batched kernels.
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn centered(level: u8) -> f64 {
        level as f64 / 127.5 - 1.0
    }

    fn path(
        p: &PathParams<f64, Matrix<f64>>,
        state: &[f64],
        x: &[f64],
        bands: usize,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let g = state.len();
        let mv = |m: &Matrix<f64>, v: &[f64], row: usize| -> f64 {
            let mut acc = 0.0;
            for j in 0..m.cols() {
                acc += m.get(row, j) * v[j];
            }
            acc
        };
        let mut new_state = vec![0.0; g];
        for i in 0..g {
            let update = sigmoid(mv(&p.input, x, i) + p.gate_bias[i] + mv(&p.recurrent, state, i));
            let reset = sigmoid(
                mv(&p.input, x, g + i) + p.gate_bias[g + i] + mv(&p.recurrent, state, g + i),
            );
            let cand = (mv(&p.input, x, 2 * g + i)
                + p.gate_bias[2 * g + i]
                + reset * mv(&p.recurrent, state, 2 * g + i))
            .tanh();
            new_state[i] = update * state[i] + (1.0 - update) * cand;
        }
        let mut feat = vec![0.0; p.affine.rows()];
        for (i, f) in feat.iter_mut().enumerate() {
            *f = (mv(&p.affine, &new_state, i) + p.affine_bias[i]).max(0.0);
        }
        let mut logits = Vec::with_capacity(bands);
        for k in 0..bands {
            let mut band = vec![0.0; 256];
            for (i, l) in band.iter_mut().enumerate() {
                *l = mv(&p.heads[k], &feat, i) + p.head_bias[k][i];
            }
            logits.push(band);
        }
        (logits, new_state)
    }

    pub fn step(
        model: &FloatModel<f64>,
        state: &RnnState<f64>,
        prev_coarse: &[u8],
        prev_fine: &[u8],
        current_coarse: &[u8],
        cond: Option<&[f64]>,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let b = model.config().num_bands;
        let mut xc: Vec<f64> = prev_coarse.iter().map(|&c| centered(c)).collect();
        xc.extend(prev_fine.iter().map(|&f| centered(f)));
        if let Some(c) = cond {
            xc.extend_from_slice(c);
        }
        let mut xf: Vec<f64> = prev_coarse.iter().map(|&c| centered(c)).collect();
        xf.extend(prev_fine.iter().map(|&f| centered(f)));
        xf.extend(current_coarse.iter().map(|&c| centered(c)));
        if let Some(c) = cond {
            xf.extend_from_slice(c);
        }
        let (cl, cs) = path(&model.coarse, &state.coarse, &xc, b);
        let (fl, fs) = path(&model.fine, &state.fine, &xf, b);
        (cl, fl, cs, fs)
    }
}

#[test]
fn acceptance_6_inference_correctness() {
    // step() vs the naive scalar oracle, 100 random draws at 1e-6.
    let mut rng = Rng::new(0x6ace);
    let mut worst = 0.0f64;
    for draw in 0..100u64 {
        let gru = 4 + rng.below(24) as usize;
        let affine = 4 + rng.below(24) as usize;
        let bands = 1 + rng.below(4) as usize;
        let cond_dim = rng.below(4) as usize;
        let config = MbWaveRnnConfig::new(gru, affine, bands, 8 * bands as u32)
            .with_conditioning(cond_dim);
        let model = FloatModel::<f64>::random(config, 0x600 + draw).unwrap();
        let state = RnnState {
            coarse: (0..gru).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            fine: (0..gru).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        };
        let pc: Vec<u8> = (0..bands).map(|_| rng.below(256) as u8).collect();
        let pf: Vec<u8> = (0..bands).map(|_| rng.below(256) as u8).collect();
        let cc: Vec<u8> = (0..bands).map(|_| rng.below(256) as u8).collect();
        let cond: Vec<f64> = (0..cond_dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let cond_opt = if cond_dim > 0 { Some(cond.as_slice()) } else { None };

        let got = model.step(&state, &pc, &pf, &cc, cond_opt).unwrap();
        let (wc, wf, wsc, wsf) = oracle::step(&model, &state, &pc, &pf, &cc, cond_opt);
        for k in 0..bands {
            for i in 0..256 {
                worst = worst.max((got.coarse_logits[k][i] - wc[k][i]).abs());
                worst = worst.max((got.fine_logits[k][i] - wf[k][i]).abs());
            }
        }
        for i in 0..gru {
            worst = worst.max((got.new_state.coarse[i] - wsc[i]).abs());
            worst = worst.max((got.new_state.fine[i] - wsf[i]).abs());
        }
    }
    assert!(worst <= 1e-6, "step vs oracle deviation {worst:.2e} above 1e-6");

    // Zero-weight model: every softmax is uniform, NLL is exactly ln 256.
    let config = MbWaveRnnConfig::new(16, 16, 2, 8000);
    let zero = FloatModel::<f64>::zeros(config).unwrap();
    let targets =
        SubbandSignals64::new(vec![vec![0.125; 50], vec![-0.375; 50]], 8000).unwrap();
    let nll = zero.teacher_forced_nll(&targets, None).unwrap();
    assert!(
        (nll - 256.0f64.ln()).abs() <= 1e-9,
        "zero-model NLL {nll} vs ln 256"
    );

    // Uniform sampling frequencies within 5 sigma over 65536 draws.
    let logits = vec![0.0f64; 256];
    let mut rng = Rng::new(0x5a11);
    let mut counts = [0u32; 256];
    for _ in 0..65_536 {
        counts[sample_categorical(&logits, &mut rng, 1.0).unwrap()] += 1;
    }
    let p = 1.0f64 / 256.0;
    let sigma = (65_536.0 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - 256.0).abs() <= 5.0 * sigma,
            "category {i}: count {c} outside 256 +/- {:.1}",
            5.0 * sigma
        );
    }
    println!(
        "acceptance 6 (inference correctness): PASS \
         (oracle deviation {worst:.2e}, NLL = ln 256, uniform within 5 sigma)"
    );
}

#[test]
fn acceptance_7_alignment_invariants() {
    let mut rng = Rng::new(0x7a11);
    let boundary_tokens = ["#S", "#1", "#2", "#3"];
    for instance in 0..1000 {
        // Random symbol sequence without adjacent equal boundaries.
        let len = 1 + rng.below(24) as usize;
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        let mut prev_boundary: Option<usize> = None;
        for i in 0..len {
            let pick = rng.below(5) as usize;
            if pick == 0 || tokens.is_empty() {
                tokens.push(format!("p{i}"));
                prev_boundary = None;
            } else {
                let mut level = pick - 1;
                if prev_boundary == Some(level) {
                    level = (level + 1) % 4;
                }
                tokens.push(boundary_tokens[level].to_string());
                prev_boundary = Some(level);
            }
        }
        let seq = parse_symbols(&tokens).unwrap();
        let dim = 1 + rng.below(4) as usize;
        let states = HiddenStates::new(
            (0..seq.len())
                .map(|i| (0..dim).map(|d| rng.gaussian() + (i * dim + d) as f64).collect())
                .collect(),
        )
        .unwrap();

        // Skip filtering keeps exactly the phoneme-position vectors in order.
        let filtered = skip_filter(&states, &seq).unwrap();
        assert_eq!(filtered.len(), seq.phoneme_count(), "instance {instance}");
        let mut want = Vec::new();
        for (v, s) in states.vectors().iter().zip(seq.symbols()) {
            if s.is_phoneme() {
                want.push(v.clone());
            }
        }
        assert_eq!(filtered.vectors(), want.as_slice(), "instance {instance}");

        if filtered.is_empty() {
            continue;
        }
        // Expansion: length, position convention, run-length round trip.
        let durations: Vec<i64> = (0..filtered.len()).map(|_| 1 + rng.below(6) as i64).collect();
        let ds = DurationSequence::new(&durations).unwrap();
        let expanded = state_expand(&filtered, &ds).unwrap();
        assert_eq!(expanded.len() as u64, ds.total_frames());
        let mut t = 0usize;
        for &d in ds.durations() {
            let mut last = 0.0;
            for j in 1..=d {
                let pos = expanded.position(t);
                assert!(pos > last && pos <= 1.0, "instance {instance} frame {t}");
                if j == d {
                    assert_eq!(pos, 1.0);
                }
                last = pos;
                t += 1;
            }
        }
        let mut recovered = Vec::new();
        let mut run = 0i64;
        let mut prev: Option<&[f64]> = None;
        for v in expanded.vectors() {
            let base = &v[..v.len() - 1];
            match prev {
                Some(p) if p == base => run += 1,
                Some(_) => {
                    recovered.push(run);
                    run = 1;
                }
                None => run = 1,
            }
            prev = Some(base);
        }
        recovered.push(run);
        assert_eq!(recovered, durations, "instance {instance}: RLE round trip");
    }

    // Dual L1 loss against a scalar oracle and the residual-free identity.
    let mut rng = Rng::new(0x7a12);
    for _ in 0..100 {
        let rows = 1 + rng.below(5) as usize;
        let cols = 1 + rng.below(6) as usize;
        let y = Matrix::from_fn(rows, cols, |_, _| rng.gaussian());
        let y_pre = Matrix::from_fn(rows, cols, |_, _| rng.gaussian());
        let residual = Matrix::from_fn(rows, cols, |_, _| rng.gaussian());
        let got = durian_loss(&y, &y_pre, &residual).unwrap();
        let mut want = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                want += (y.get(i, j) - y_pre.get(i, j)).abs();
                want += (y.get(i, j) - (y_pre.get(i, j) + residual.get(i, j))).abs();
            }
        }
        assert!((got - want).abs() <= 1e-12, "loss vs oracle: {got} vs {want}");

        let zero = Matrix::zeros(rows, cols);
        let l = durian_loss(&y, &y_pre, &zero).unwrap();
        let single: f64 = y
            .data()
            .iter()
            .zip(y_pre.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert_eq!(l, 2.0 * single, "residual-free loss is exactly twice the L1");
    }
    println!("acceptance 7 (alignment invariants, 1000 instances): PASS");
}

#[test]
fn acceptance_8_subjective_results_not_reproducible() {
    // Listening-test results (MOS naturalness, skip/repeat error rates
    // against other systems, style-control perception, multimodal demos)
    // need human raters and trained production models; no desk-scale test
    // can reproduce them. The measurable surrogates are criteria 1-7 above.
    println!(
        "acceptance 8 (subjective evaluations): NOT REPRODUCIBLE AT DESK SCALE \
         by design; replaced by the property suites of criteria 1-7"
    );
}
