//! Branch-free sine/cosine used in the random-feature inner loop.
//!
//! Cody-Waite reduction by pi/2 followed by the fdlibm kernel polynomials.
//! Accurate to a few ulp for |x| below [`REDUCTION_LIMIT`]; callers fall back
//! to `f64::sin_cos` above it.

use std::f64::consts::{FRAC_1_PI, FRAC_2_PI};

pub const REDUCTION_LIMIT: f64 = 1.0e6;

const PIO2_1: f64 = 1.570_796_326_734_125_614_17e0;
const PIO2_2: f64 = 6.077_100_506_303_965_976_6e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_8e-21;
// 1.5 * 2^52: adding it rounds to the nearest integer and leaves that integer
// in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

/// `(sin x, cos x)` for |x| < [`REDUCTION_LIMIT`].
#[inline(always)]
pub fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let shifted = x * FRAC_2_PI + ROUND_MAGIC;
    let quadrant = shifted.to_bits();
    let q = shifted - ROUND_MAGIC;
    let r = ((x - q * PIO2_1) - q * PIO2_2) - q * PIO2_3;
    let z = r * r;
    let sin_r = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let cos_r = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));

    // quadrant select via bit masks so the loop stays branch-free
    let swap = 0u64.wrapping_sub(quadrant & 1);
    let (sb, cb) = (sin_r.to_bits(), cos_r.to_bits());
    let s = (sb & !swap) | (cb & swap);
    let c = (cb & !swap) | (sb & swap);
    let s_sign = (quadrant & 2) << 62;
    let c_sign = (quadrant.wrapping_add(1) & 2) << 62;
    (f64::from_bits(s ^ s_sign), f64::from_bits(c ^ c_sign))
}

/// `cos x` for |x| < [`REDUCTION_LIMIT`]: reduction by pi, then the even
/// Taylor series through r^20 (truncation below 2e-17 on |r| <= pi/2).
#[inline(always)]
pub fn cos_reduced(x: f64) -> f64 {
    let shifted = x * FRAC_1_PI + ROUND_MAGIC;
    let n = shifted.to_bits();
    let q = shifted - ROUND_MAGIC;
    // fused multiply-adds are correctly rounded, so results do not depend on
    // whether the target has hardware FMA (only the speed does)
    let r = (-q).mul_add(2.0 * PIO2_1, x);
    let r = (-q).mul_add(2.0 * PIO2_2, r);
    let r = (-q).mul_add(2.0 * PIO2_3, r);
    let z = r * r;
    let mut p = COS_TAYLOR[10];
    for c in COS_TAYLOR[..10].iter().rev() {
        p = p.mul_add(z, *c);
    }
    f64::from_bits(p.to_bits() ^ ((n & 1) << 63))
}

const COS_TAYLOR: [f64; 11] = [
    1.0,
    -1.0 / 2.0,
    1.0 / 24.0,
    -1.0 / 720.0,
    1.0 / 40_320.0,
    -1.0 / 3_628_800.0,
    1.0 / 479_001_600.0,
    -1.0 / 87_178_291_200.0,
    1.0 / 20_922_789_888_000.0,
    -1.0 / 6_402_373_705_728_000.0,
    1.0 / 2_432_902_008_176_640_000.0,
];

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// `exp x` for `x <= 0`; flushes to zero below -708. Taylor through r^13 on
/// |r| <= ln(2)/2.
#[inline(always)]
pub fn exp_nonpositive(x: f64) -> f64 {
    let x = x.max(-708.0);
    let shifted = x * std::f64::consts::LOG2_E + ROUND_MAGIC;
    let k = shifted.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let q = shifted - ROUND_MAGIC;
    let r = (-q).mul_add(LN2_HI, x);
    let r = (-q).mul_add(LN2_LO, r);
    let mut p = EXP_TAYLOR[13];
    for c in EXP_TAYLOR[..13].iter().rev() {
        p = p.mul_add(r, *c);
    }
    let scale = f64::from_bits(k.wrapping_add(1023) << 52);
    if x > -708.0 {
        p * scale
    } else {
        0.0
    }
}

const EXP_TAYLOR: [f64; 14] = [
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40_320.0,
    1.0 / 362_880.0,
    1.0 / 3_628_800.0,
    1.0 / 39_916_800.0,
    1.0 / 479_001_600.0,
    1.0 / 6_227_020_800.0,
];

/// `ln x` for finite `x >= 1`, via `x = m 2^e` with m in [sqrt(1/2), sqrt(2))
/// and the atanh series for `ln m`.
#[inline(always)]
pub fn ln_at_least_one(x: f64) -> f64 {
    let bits = x.to_bits();
    // bias the exponent split so that m lands in [sqrt(1/2), sqrt(2))
    let shifted = bits.wrapping_add(0x0009_5f61_9980_c433);
    let e = (shifted >> 52) as i64 - 1023;
    let m = f64::from_bits((shifted & 0x000f_ffff_ffff_ffff).wrapping_add(0x3fe6_a09e_667f_3bcd));
    let s = (m - 1.0) / (m + 1.0);
    let z = s * s;
    let mut p: f64 = 1.0 / 21.0;
    for c in ATANH_ODD.iter().rev() {
        p = p.mul_add(z, *c);
    }
    let ln_m = 2.0 * s * p;
    let e = e as f64;
    e.mul_add(LN2_LO, ln_m) + e * LN2_HI
}

const ATANH_ODD: [f64; 10] = [
    1.0,
    1.0 / 3.0,
    1.0 / 5.0,
    1.0 / 7.0,
    1.0 / 9.0,
    1.0 / 11.0,
    1.0 / 13.0,
    1.0 / 15.0,
    1.0 / 17.0,
    1.0 / 19.0,
];

pub fn sin_cos(x: f64) -> (f64, f64) {
    if x.abs() < REDUCTION_LIMIT {
        sin_cos_reduced(x)
    } else {
        x.sin_cos()
    }
}

/// Elementwise `(sin, cos)` of `phase` for |phase| < [`REDUCTION_LIMIT`].
pub fn sin_cos_slices(phase: &[f64], sin: &mut [f64], cos: &mut [f64]) {
    for ((x, s), c) in phase.iter().zip(sin.iter_mut()).zip(cos.iter_mut()) {
        let (sv, cv) = sin_cos_reduced(*x);
        *s = sv;
        *c = cv;
    }
}

/// Scratch space for [`cos_sin_dot`].
#[derive(Debug, Default, Clone)]
pub struct TrigScratch {
    sin: Vec<f64>,
    cos: Vec<f64>,
}

/// `sum_k a[k] cos(phase[k]) + b[k] sin(phase[k])`, with a fixed summation
/// order (eight interleaved partial sums, combined pairwise).
pub fn cos_sin_dot(phase: &[f64], a: &[f64], b: &[f64], scratch: &mut TrigScratch) -> f64 {
    assert!(phase.len() == a.len() && phase.len() == b.len());
    let largest = phase.iter().fold(0.0f64, |m, x| if x.abs() > m { x.abs() } else { m });
    if !(largest < REDUCTION_LIMIT) {
        return cos_sin_dot_slow(phase, a, b);
    }
    let n = phase.len();
    scratch.sin.resize(n, 0.0);
    scratch.cos.resize(n, 0.0);
    sin_cos_slices(phase, &mut scratch.sin, &mut scratch.cos);
    let mut acc = [0.0f64; 8];
    let whole = n / 8 * 8;
    for (((c8, s8), a8), b8) in scratch.cos[..whole]
        .chunks_exact(8)
        .zip(scratch.sin[..whole].chunks_exact(8))
        .zip(a[..whole].chunks_exact(8))
        .zip(b[..whole].chunks_exact(8))
    {
        for l in 0..8 {
            acc[l] += a8[l] * c8[l] + b8[l] * s8[l];
        }
    }
    for (l, k) in (whole..n).enumerate() {
        acc[l] += a[k] * scratch.cos[k] + b[k] * scratch.sin[k];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

fn cos_sin_dot_slow(phase: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    for (k, x) in phase.iter().enumerate() {
        let (s, c) = sin_cos(*x);
        acc[k % 8] += a[k] * c + b[k] * s;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}
