//! Float math shim so the crate builds with `std` or with `libm`.
//!
//! With the `std` feature the intrinsics-backed methods are used; without it
//! the `libm` feature must be enabled. Within one build the results are
//! bit-stable, which is what the reproducibility guarantees rely on.

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("enable either the `std` or the `libm` feature of inhomog-core");

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

#[cfg(feature = "std")]
mod imp {
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline(always)]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline(always)]
    pub fn abs(x: f64) -> f64 {
        x.abs()
    }
    #[inline(always)]
    pub fn floor(x: f64) -> f64 {
        x.floor()
    }
    #[inline(always)]
    pub fn powf(x: f64, y: f64) -> f64 {
        x.powf(y)
    }
    #[inline(always)]
    pub fn sincos(x: f64) -> (f64, f64) {
        x.sin_cos()
    }
    #[inline(always)]
    pub fn ceil(x: f64) -> f64 {
        x.ceil()
    }
    #[inline(always)]
    pub fn round(x: f64) -> f64 {
        x.round()
    }
}

#[cfg(all(not(feature = "std"), feature = "libm"))]
mod imp {
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline(always)]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline(always)]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
    #[inline(always)]
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    #[inline(always)]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }
    #[inline(always)]
    pub fn sincos(x: f64) -> (f64, f64) {
        libm::sincos(x)
    }
    #[inline(always)]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
    #[inline(always)]
    pub fn round(x: f64) -> f64 {
        libm::round(x)
    }
}

pub use imp::*;

/// Integer power by repeated squaring (sign-aware).
pub fn powi(x: f64, n: i32) -> f64 {
    let mut base = if n < 0 { 1.0 / x } else { x };
    let mut k = n.unsigned_abs();
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series `sum_k (z^2/4)^k / (k!)^2`; all terms are positive so there
/// is no cancellation, and the series converges for every finite argument.
/// Relative accuracy is near machine precision for `|z| <= 50`. Arguments
/// beyond 700 overflow the result and return infinity.
pub fn bessel_i0(z: f64) -> f64 {
    let z = abs(z);
    if z > 700.0 {
        return f64::INFINITY;
    }
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
///
/// Relative error below 1e-13 on the positive axis, which is all we use.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * ln(TAU) + (z + 0.5) * ln(t) - t + ln(acc)
}

/// `ln(k!)` via Stirling's series for large `k`, exact table below 10.
pub fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        0.693147180559945_3,
        1.791759469228055,
        3.178053830347946,
        4.787491742782046,
        6.579251212010101,
        8.525161361065415,
        10.604602902745251,
        12.801827480081469,
    ];
    if k < 10 {
        return TABLE[k as usize];
    }
    let x = (k + 1) as f64;
    // Stirling series; relative error < 1e-12 for x >= 11
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * ln(x) - x
        + 0.5 * ln(TAU)
        + inv * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 / 1260.0))
}
