//! Simultaneous sine and cosine. The sine layers dominate training time and
//! the backward pass needs the cosine of the same argument, so both come out
//! of one range reduction and two short polynomials.

use std::f64::consts::FRAC_2_PI;

// π/2 split so that n·PIO2_HI is exact for |n| < 2^20.
const PIO2_HI: f64 = 1.570_796_326_734_125_614_17;
const PIO2_LO: f64 = 6.077_100_506_506_192_249_32e-11;

// Minimax coefficients on [-π/4, π/4].
const S: [f64; 6] = [
    -1.666_666_666_666_663_243_48e-1,
    8.333_333_333_322_489_461_24e-3,
    -1.984_126_982_985_794_931_34e-4,
    2.755_731_370_707_006_767_89e-6,
    -2.505_076_025_340_686_341_95e-8,
    1.589_690_995_211_550_102_21e-10,
];
const C: [f64; 6] = [
    4.166_666_666_666_660_190_37e-2,
    -1.388_888_888_887_410_957_49e-3,
    2.480_158_728_947_672_941_78e-5,
    -2.755_731_435_139_066_330_35e-7,
    2.087_572_321_298_174_827_90e-9,
    -1.135_964_755_778_819_482_65e-11,
];

// Adding and subtracting 1.5·2^52 rounds to the nearest integer without a
// libm call.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// Beyond this the two-term reduction loses accuracy.
const REDUCTION_LIMIT: f64 = 1.0e5;

/// `(sin x, cos x)` within a few ulp.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if x.abs() > REDUCTION_LIMIT {
        return x.sin_cos();
    }
    sin_cos_reduced(x)
}

/// Kernel without the large-argument fallback; branch-free so the slice loop
/// below vectorizes.
#[inline(always)]
fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let n = (x * FRAC_2_PI + ROUND_MAGIC) - ROUND_MAGIC;
    let r = (x - n * PIO2_HI) - n * PIO2_LO;
    let z = r * r;
    let s = r + r * z * (S[0] + z * (S[1] + z * (S[2] + z * (S[3] + z * (S[4] + z * S[5])))));
    let c = 1.0 - 0.5 * z + z * z * (C[0] + z * (C[1] + z * (C[2] + z * (C[3] + z * (C[4] + z * C[5])))));
    // Quadrant n mod 4 as a float in {0, 1, 2, 3}.
    let quarter = n * 0.25;
    let rounded = (quarter + ROUND_MAGIC) - ROUND_MAGIC;
    let floor = if rounded > quarter { rounded - 1.0 } else { rounded };
    let q = n - 4.0 * floor;
    let odd = q == 1.0 || q == 3.0;
    let (a, b) = if odd { (c, -s) } else { (s, c) };
    if q >= 2.0 {
        (-a, -b)
    } else {
        (a, b)
    }
}

/// `sin(freq·x)` and `cos(freq·x)` for every element of `x`.
pub fn sin_cos_scaled(x: &[f64], freq: f64) -> (Vec<f64>, Vec<f64>) {
    let mut sin = vec![0.0; x.len()];
    let mut cos = vec![0.0; x.len()];
    if x.iter().all(|v| (freq * v).abs() <= REDUCTION_LIMIT) {
        for ((v, s), c) in x.iter().zip(&mut sin).zip(&mut cos) {
            (*s, *c) = sin_cos_reduced(freq * v);
        }
    } else {
        for ((v, s), c) in x.iter().zip(&mut sin).zip(&mut cos) {
            (*s, *c) = sin_cos(freq * v);
        }
    }
    (sin, cos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_std_closely() {
        let mut worst: f64 = 0.0;
        for k in -200_000..=200_000 {
            let x = k as f64 * 1.000_37e-3;
            let (s, c) = sin_cos(x);
            worst = worst.max((s - x.sin()).abs()).max((c - x.cos()).abs());
        }
        assert!(worst < 4e-16, "worst error {worst}");
        for x in [1e6, -3e7] {
            assert_eq!(sin_cos(x), x.sin_cos());
        }
        assert!(sin_cos(f64::NAN).0.is_nan());
        let xs: Vec<f64> = (-5000..5000).map(|k| k as f64 * 0.0137).collect();
        let (s, c) = sin_cos_scaled(&xs, 30.0);
        for ((x, s), c) in xs.iter().zip(s).zip(c) {
            assert_eq!((s, c), sin_cos(30.0 * x));
        }
        let (s, _) = sin_cos_scaled(&[1e9, 0.5], 1.0);
        assert_eq!(s, vec![1e9f64.sin(), sin_cos(0.5).0]);
    }
}
