//! Branchless f32 transcendentals for the generation hot loop.
//!
//! The gate nonlinearities and the softmax in the sampler account for a
//! visible slice of the per-sample budget when every weight matvec is only a
//! few hundred rows. libm calls do not vectorize; these polynomial forms do,
//! and they are deterministic across runs because they are plain float
//! arithmetic.
//!
//! Accuracy: `tanh_f32` is the standard rational approximation over x^2
//! (clamped at |x| = 7.90531), good to a few f32 ulps; `exp_f32` is 2^z with
//! round-to-nearest range reduction and a degree-6 polynomial on the
//! half-integer remainder, relative error ~1e-7. Both are exact at 0
//! (`tanh(0) = 0`, `exp(0) = 1`), which several zero-weight invariants rely
//! on.

// Domain clamp: e^-88 underflows to zero through the 2^k bit trick (k hits
// -127), e^20 is far above any softmax range used here.
const EXP_LO: f32 = -88.0;
const EXP_HI: f32 = 20.0;
const LOG2_E: f32 = std::f32::consts::LOG2_E;
// Cody-Waite split of ln 2 so the remainder is computed against the exact
// argument instead of the rounded base-2 exponent.
const LN2_HI: f32 = 0.693_359_375;
const LN2_LO: f32 = -2.121_944_4e-4;
// 1 / k!
const EXP_C2: f32 = 0.5;
const EXP_C3: f32 = 1.0 / 6.0;
const EXP_C4: f32 = 1.0 / 24.0;
const EXP_C5: f32 = 1.0 / 120.0;
const EXP_C6: f32 = 1.0 / 720.0;

/// e^x for x <= 20 (larger arguments clamp; the softmax feeds only
/// max-subtracted, non-positive values).
#[inline]
pub fn exp_f32(x: f32) -> f32 {
    let x = x.clamp(EXP_LO, EXP_HI);
    let z = x * LOG2_E;
    // Round to nearest integer without a branch: valid since |z| < 2^22.
    let k = (z + 12_582_912.0) - 12_582_912.0;
    let r = x - k * LN2_HI - k * LN2_LO;
    let p = 1.0
        + r * (1.0 + r * (EXP_C2 + r * (EXP_C3 + r * (EXP_C4 + r * (EXP_C5 + r * EXP_C6)))));
    let scale = f32::from_bits((((k as i32) + 127) << 23) as u32);
    p * scale
}

const TANH_CLAMP: f32 = 7.905_311;
const TANH_A1: f32 = 4.893_525e-3;
const TANH_A3: f32 = 6.372_619_3e-4;
const TANH_A5: f32 = 1.485_722_4e-5;
const TANH_A7: f32 = 5.122_297_1e-8;
const TANH_A9: f32 = -8.604_671_5e-11;
const TANH_A11: f32 = 2.000_187_9e-13;
const TANH_A13: f32 = -2.760_768_5e-16;
const TANH_B0: f32 = 4.893_525_2e-3;
const TANH_B2: f32 = 2.268_434_6e-3;
const TANH_B4: f32 = 1.185_347_1e-4;
const TANH_B6: f32 = 1.198_258_4e-6;

/// tanh x as the odd rational x * P(x^2) / Q(x^2).
#[inline]
pub fn tanh_f32(x: f32) -> f32 {
    let x = x.clamp(-TANH_CLAMP, TANH_CLAMP);
    let s = x * x;
    let p = TANH_A13;
    let p = TANH_A11 + s * p;
    let p = TANH_A9 + s * p;
    let p = TANH_A7 + s * p;
    let p = TANH_A5 + s * p;
    let p = TANH_A3 + s * p;
    let p = TANH_A1 + s * p;
    let q = TANH_B6;
    let q = TANH_B4 + s * q;
    let q = TANH_B2 + s * q;
    let q = TANH_B0 + s * q;
    x * p / q
}

/// Logistic function via the tanh identity; exact 0.5 at 0 and saturating to
/// exactly 0/1 where tanh clamps.
#[inline]
pub fn sigmoid_f32(x: f32) -> f32 {
    0.5 + 0.5 * tanh_f32(0.5 * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_exact_at_zero_and_accurate() {
        assert_eq!(exp_f32(0.0), 1.0);
        for i in -800..=200 {
            let x = i as f32 * 0.1;
            let want = (x as f64).exp();
            let got = exp_f32(x) as f64;
            if want < 1e-30 {
                assert!(got <= 1e-25, "exp({x}) = {got}");
            } else {
                let rel = ((got - want) / want).abs();
                assert!(rel < 5e-7, "exp({x}): rel err {rel}");
            }
        }
    }

    #[test]
    fn exp_huge_negative_is_negligible() {
        assert!(exp_f32(-1e6) <= f32::MIN_POSITIVE);
    }

    #[test]
    fn tanh_exact_at_zero_odd_and_accurate() {
        assert_eq!(tanh_f32(0.0), 0.0);
        for i in 1..=1000 {
            let x = i as f32 * 0.01;
            assert_eq!(tanh_f32(-x), -tanh_f32(x));
            let want = (x as f64).tanh();
            let err = (tanh_f32(x) as f64 - want).abs();
            assert!(err < 5e-7, "tanh({x}): err {err}");
        }
        assert_eq!(tanh_f32(20.0), 1.0);
        assert_eq!(tanh_f32(-20.0), -1.0);
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid_f32(0.0), 0.5);
        assert_eq!(sigmoid_f32(40.0), 1.0);
        assert_eq!(sigmoid_f32(-40.0), 0.0);
        for i in -600..=600 {
            let x = i as f32 * 0.01;
            let want = 1.0 / (1.0 + (-x as f64).exp());
            let err = (sigmoid_f32(x) as f64 - want).abs();
            assert!(err < 2e-7, "sigmoid({x}): err {err}");
        }
    }
}
