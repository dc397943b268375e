//! Complementary error function and its scaled and logarithmic forms.
//!
//! The core is W. J. Cody's rational Chebyshev approximations (the CALERF
//! packet from SPECFUN), which are accurate to near machine precision on the
//! whole real line. `erfcx(x) = exp(x²)·erfc(x)` is evaluated without ever
//! forming `exp(x²)` for positive arguments, which is what lets the renderer
//! keep densities in log space.

use std::f64::consts::PI;

const FRAC_1_SQRT_PI: f64 = 5.641_895_835_477_562_869_5e-1;
const THRESH: f64 = 0.468_75;
/// Largest negative argument for which `erfcx` stays finite.
const XNEG: f64 = -26.628;
/// Beyond this, `erfc` underflows to zero.
const XBIG: f64 = 26.543;
/// Above this, `1 - 1/(2x²) == 1` in double precision.
const XHUGE: f64 = 6.71e7;
const XMAX: f64 = 2.53e307;

const A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_5e3,
    1.857_777_061_846_031_5e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_170_6e3,
];
const C: [f64; 9] = [
    5.641_884_969_886_701e-1,
    8.883_149_794_388_376e0,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001_3e2,
    8.819_522_212_417_69e2,
    1.712_047_612_634_070_6e3,
    2.051_078_377_826_071_5e3,
    1.230_339_354_797_997_2e3,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_099e2,
    1.621_389_574_566_690_2e3,
    3.290_799_235_733_459_7e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_4e3,
];
const P: [f64; 6] = [
    3.053_266_349_612_323_4e-1,
    3.603_448_999_498_044_4e-1,
    1.257_817_261_112_292_5e-1,
    1.608_378_514_874_227_7e-2,
    6.587_491_615_298_378e-4,
    1.631_538_713_730_209_8e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_4e0,
    1.872_952_849_923_460_5e0,
    5.279_051_029_514_284e-1,
    6.051_834_131_244_132e-2,
    2.335_204_976_268_691_8e-3,
];

/// `erf(x)` for `|x| <= THRESH`.
fn erf_small(x: f64) -> f64 {
    let ysq = if x.abs() > 1.11e-16 { x * x } else { 0.0 };
    let mut num = A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + A[i]) * ysq;
        den = (den + B[i]) * ysq;
    }
    x * (num + A[3]) / (den + B[3])
}

/// `erfcx(y)` for `THRESH < y`, `y` positive.
fn erfcx_positive_tail(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else if y >= XHUGE {
        if y >= XMAX {
            0.0
        } else {
            FRAC_1_SQRT_PI / y
        }
    } else {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    }
}

/// `exp(-y²)` split so the rounding of `y²` does not leak into the result.
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// The complementary error function `(2/√π)∫ₓ^∞ e^{-u²} du`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    let tail = if y <= THRESH {
        return 1.0 - erf_small(x);
    } else if y >= XBIG {
        0.0
    } else {
        exp_neg_sq(y) * erfcx_positive_tail(y)
    };
    if x < 0.0 {
        2.0 - tail
    } else {
        tail
    }
}

/// The scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Saturates to `+inf` below `x ≈ -26.6` where the true value overflows.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    if y <= THRESH {
        return (x * x).exp() * (1.0 - erf_small(x));
    }
    let tail = erfcx_positive_tail(y);
    if x >= 0.0 {
        tail
    } else if x < XNEG {
        f64::INFINITY
    } else {
        let ysq = (x * 16.0).trunc() / 16.0;
        let del = (x - ysq) * (x + ysq);
        let e = (ysq * ysq).exp() * del.exp();
        2.0 * e - tail
    }
}

/// `ln(erfc(x))`, finite for every finite `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x <= THRESH {
        erfc(x).ln()
    } else {
        erfcx(x).ln() - x * x
    }
}

/// `d/dx ln(erfc(x)) = -(2/√π) / erfcx(x)`.
pub fn d_ln_erfc(x: f64) -> f64 {
    -2.0 / (PI.sqrt() * erfcx(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Reference values from mpmath at 30 digits.
    const TABLE: [(f64, f64); 9] = [
        (-3.0, 1.999_977_909_503_001_4),
        (-1.0, 1.842_700_792_949_714_9),
        (-0.25, 1.276_326_390_168_236_9),
        (0.0, 1.0),
        (0.25, 0.723_673_609_831_763_1),
        (0.5, 0.479_500_122_186_953_5),
        (1.0, 0.157_299_207_050_285_13),
        (3.0, 2.209_049_699_858_544e-5),
        (6.0, 2.151_973_671_249_891_3e-17),
    ];

    #[test]
    fn matches_reference_table() {
        for (x, want) in TABLE {
            assert_abs_diff_eq!(erfc(x), want, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_is_one() {
        assert_eq!(erfc(0.0), 1.0);
    }

    #[test]
    fn reflection() {
        for i in 0..600 {
            let x = i as f64 * 0.01;
            assert_abs_diff_eq!(erfc(-x), 2.0 - erfc(x), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(erfc(-3.0), 2.0 - erfc(3.0), epsilon = 1e-12);
    }

    #[test]
    fn strictly_decreasing_and_bounded() {
        let mut prev = f64::INFINITY;
        for i in -500..=500 {
            let x = i as f64 * 0.012;
            let v = erfc(x);
            // Near -6 the value rounds to exactly 2.
            assert!(v > 0.0 && v <= 2.0 && v <= prev);
            if x.abs() < 5.0 {
                assert!(v < prev);
            }
            prev = v;
        }
        assert_eq!(erfc(f64::INFINITY), 0.0);
        assert_eq!(erfc(f64::NEG_INFINITY), 2.0);
    }

    #[test]
    fn scaled_form_is_consistent() {
        for i in -40..=40 {
            let x = i as f64 * 0.15;
            let direct = (x * x).exp() * erfc(x);
            assert!((erfcx(x) - direct).abs() <= 1e-13 * direct.max(1.0));
        }
        // Asymptotic 1/(x√π)·(1 - 1/(2x²)) far out.
        let x = 1e4;
        assert!((erfcx(x) * x * PI.sqrt() - (1.0 - 0.5 / (x * x))).abs() < 1e-12);
    }

    #[test]
    fn log_form_survives_underflow() {
        assert!(erfc(40.0) == 0.0);
        let l = ln_erfc(40.0);
        // ln erfc(x) ≈ -x² - ln(x√π) for large x.
        let approx = -1600.0 - (40.0 * PI.sqrt()).ln();
        assert!((l - approx).abs() < 1e-3);
        assert_abs_diff_eq!(ln_erfc(-10.0), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn log_derivative_matches_central_difference() {
        for i in -30..=30 {
            let x = i as f64 * 0.3;
            let h = 1e-5;
            let fd = (ln_erfc(x + h) - ln_erfc(x - h)) / (2.0 * h);
            assert!((d_ln_erfc(x) - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
        assert_eq!(d_ln_erfc(-40.0), 0.0);
    }
}
