//! Standard Gaussian density, distribution, quantile and `f_G = φ ∘ Φ⁻¹`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// `φ(x)`.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Wichura's AS241 (PPND16) on `p <= 1/2`.
fn ppnd16_lower(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn horner(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let r = (-p.ln()).sqrt();
    if r <= 5.0 {
        let r = r - 1.6;
        -horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        -horner(&E, r) / horner(&F, r)
    }
}

/// `Φ⁻¹(p)` on `(0, 1)`.
pub fn inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("Gaussian quantile needs p in (0, 1), got {p}")));
    }
    // 1 - p is exact for p >= 1/2
    let (lower, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let x = ppnd16_lower(lower);
    let x = x - (cdf(x) - lower) / pdf(x);
    Ok(sign * x)
}

/// `f_G(s) = φ(Φ⁻¹(s))` on `(0, 1)`, zero at `s ∈ {0, 1}`.
pub fn f_g(s: f64) -> Result<f64> {
    if s == 0.0 || s == 1.0 {
        return Ok(0.0);
    }
    Ok(pdf(inv_cdf(s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn landmarks() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((f_g(0.5).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(f_g(0.0).unwrap(), 0.0);
        assert_eq!(f_g(1.0).unwrap(), 0.0);
        assert!((inv_cdf(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((f_g(0.1).unwrap() - 0.175_498_331_932_486_8).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inv_cdf(p).is_err());
        }
        assert!(f_g(1.1).is_err());
    }

    proptest! {
        #[test]
        fn quantile_inverts_distribution(p in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!((cdf(inv_cdf(p).unwrap()) - p).abs() <= 1e-9);
        }

        #[test]
        fn f_g_peaks_at_one_half(s in 0.0f64..=1.0) {
            prop_assert!(f_g(s).unwrap() <= f_g(0.5).unwrap());
        }

        #[test]
        fn f_g_is_symmetric(s in 1e-9f64..0.5) {
            prop_assert!((f_g(s).unwrap() - f_g(1.0 - s).unwrap()).abs() < 1e-12);
        }
    }
}
