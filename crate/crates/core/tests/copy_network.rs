//! A hand-built model that routes the previous sample through the GRU, a
//! relu hat-function layer and the output head to a near-one-hot logit, so
//! teacher forcing on a constant signal drives the NLL to zero. Exercises the
//! whole step pipeline with weights whose behavior is known in closed form.

use mbvoc_core::mat::Matrix;
use mbvoc_core::multirate::SubbandSignals;
use mbvoc_core::wavernn::{sample_value, FloatModel, MbWaveRnnConfig, PathParams};

const GAIN: f64 = 15.0;
const INPUT_GAIN: f64 = 0.5;

fn centered(level: i64) -> f64 {
    level as f64 / 127.5 - 1.0
}

/// Breakpoint for (extended) class index c in the post-tanh state space.
fn knot(c: i64) -> f64 {
    (INPUT_GAIN * centered(c)).tanh()
}

/// Builds one path that predicts class(previous input column `col`) with a
/// near-one-hot logit:
///
/// - update gate biased to -40 so the new state is the candidate;
/// - candidate tanh(0.5 * x[col]), a monotone copy of the tracked input;
/// - affine layer: 258 relu units relu(h - knot(c)) for c = -1..=256;
/// - head row j: second-difference coefficients over knots j-1, j, j+1,
///   scaled by GAIN, which is a piecewise-linear hat that is GAIN at knot j
///   and zero at every other knot.
fn copy_path(input_dim: usize, col: usize) -> PathParams<f64, Matrix<f64>> {
    let g = 1usize;
    let f = 258usize;

    let mut input = Matrix::zeros(3 * g, input_dim);
    input.set(2, col, INPUT_GAIN);
    let mut gate_bias = vec![0.0; 3 * g];
    gate_bias[0] = -40.0;

    let affine = Matrix::from_fn(f, g, |_, _| 1.0);
    let affine_bias: Vec<f64> = (0..f).map(|i| -knot(i as i64 - 1)).collect();

    let mut head = Matrix::zeros(256, f);
    for j in 0..256i64 {
        let left = knot(j - 1);
        let mid = knot(j);
        let right = knot(j + 1);
        let dl = mid - left;
        let dr = right - mid;
        head.set(j as usize, j as usize, GAIN / dl);
        head.set(j as usize, (j + 1) as usize, -GAIN * (1.0 / dl + 1.0 / dr));
        head.set(j as usize, (j + 2) as usize, GAIN / dr);
    }

    PathParams {
        input,
        recurrent: Matrix::zeros(3 * g, g),
        gate_bias,
        affine,
        affine_bias,
        heads: vec![head],
        head_bias: vec![vec![0.0; 256]],
    }
}

fn copy_model() -> FloatModel<f64> {
    let config = MbWaveRnnConfig::new(1, 258, 1, 16_000);
    // Coarse path tracks the previous coarse byte (input column 0); fine path
    // tracks the previous fine byte (column 1).
    let coarse = copy_path(config.coarse_input_dim(), 0);
    let fine = copy_path(config.fine_input_dim(), 1);
    FloatModel::from_parts(config, coarse, fine).unwrap()
}

#[test]
fn copy_network_reaches_near_zero_nll_on_constant_signal() {
    let model = copy_model();
    let constant = sample_value::<f64>(128, 128);
    let targets = SubbandSignals::new(vec![vec![constant; 40]], 16_000).unwrap();
    let nll = model.teacher_forced_nll(&targets, None).unwrap();
    assert!(nll < 1e-3, "nll {nll}");
}

#[test]
fn copy_network_peaks_at_previous_sample() {
    let model = copy_model();
    let state = mbvoc_core::wavernn::RnnState::zeros(model.config());
    for prev in [0u8, 17, 128, 200, 255] {
        let out = model
            .step(&state, &[prev], &[prev], &[prev], None)
            .unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&out.coarse_logits[0]), prev as usize);
        assert_eq!(argmax(&out.fine_logits[0]), prev as usize);
        assert!((out.coarse_logits[0][prev as usize] - GAIN).abs() < 1e-6);
    }
}
