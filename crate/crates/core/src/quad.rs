//! Adaptive Simpson quadrature and the hitting-time solver used by the
//! integral-equation baseline simulator.
//!
//! The solver finds the next-jump increment `dt` with
//! `int_t^{t+dt} g(s) ds = target` by accumulating the cumulative integral
//! over growing windows and then running a bisection-safeguarded Newton
//! iteration inside the window that brackets the target.

use crate::math;

/// Adaptive Simpson integral of `f` over `[a, b]` with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    adaptive_simpson_guarded(f, a, b, abs_tol, 0)
}

/// [`adaptive_simpson`] that refuses to accept an estimate before
/// `min_depth` subdivision levels. A periodic integrand sampled only at its
/// zeros can otherwise fool the error estimate on wide intervals.
pub fn adaptive_simpson_guarded<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    min_depth: u32,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, fa, m, fm, b, fb, whole, abs_tol, 24, min_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    min_depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    if lm <= a || rm <= m {
        // interval width at float resolution
        return whole;
    }
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (min_depth == 0 && math::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    let next_min = min_depth.saturating_sub(1);
    simpson_step(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1, next_min)
        + simpson_step(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1, next_min)
}

/// Failure of the hitting-time iteration to converge within its budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingTimeError {
    pub t: f64,
    pub window: (f64, f64),
}

impl core::fmt::Display for HittingTimeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "hitting-time iteration did not converge at t = {} in window [{}, {}]",
            self.t, self.window.0, self.window.1
        )
    }
}

impl core::error::Error for HittingTimeError {}

/// Solve `int_t^{t+dt} g(s) ds = target` for `dt`, where `g >= 0`.
///
/// Returns `Ok(None)` when the integral up to `horizon` stays below the
/// target (no jump before the horizon). Quadrature runs at absolute tolerance
/// `tol/10`; the returned increment satisfies the integral equation to within
/// roughly `tol`.
pub fn solve_hitting_time<G: Fn(f64) -> f64>(
    g: &G,
    t: f64,
    horizon: f64,
    target: f64,
    tol: f64,
) -> Result<Option<f64>, HittingTimeError> {
    let g4 = |t0: f64, step: f64| {
        [
            g(t0 + step),
            g(t0 + 2.0 * step),
            g(t0 + 3.0 * step),
            g(t0 + 4.0 * step),
        ]
    };
    solve_hitting_time_warm(g, &g4, t, horizon, target, tol, g(t))
}

/// [`solve_hitting_time`] with the integrand value at `t` already known and
/// a batch evaluator for four equally spaced nodes.
///
/// When the first window's Simpson estimate converges at depth zero (the
/// overwhelmingly common case of a smooth integrand over a short window),
/// the root is found by Newton iteration on the quartic interpolant through
/// the five nodes already evaluated, so no further integrand evaluations are
/// needed.
pub fn solve_hitting_time_warm<G, G4>(
    g: &G,
    g4: &G4,
    t: f64,
    horizon: f64,
    target: f64,
    tol: f64,
    g0: f64,
) -> Result<Option<f64>, HittingTimeError>
where
    G: Fn(f64) -> f64,
    G4: Fn(f64, f64) -> [f64; 4],
{
    debug_assert!(target > 0.0 && tol > 0.0);
    let remaining = horizon - t;
    if remaining <= 0.0 {
        return Ok(None);
    }
    let seg_tol = tol / 10.0;
    let mut w = if g0 > 0.0 {
        (1.25 * target / g0).min(remaining)
    } else {
        remaining / 8.0
    };
    if !(w > 0.0) {
        w = remaining;
    }

    let mut acc = 0.0; // integral over [t, t+a]
    let mut a = 0.0;

    // fast path on the first window
    if g0 > 0.0 && w > 0.0 {
        let q = 0.25 * w;
        let [f1, f2, f3, f4] = g4(t, q);
        let s1 = w / 6.0 * (g0 + 4.0 * f2 + f4);
        let s2 = w / 12.0 * (g0 + 4.0 * f1 + 2.0 * f2 + 4.0 * f3 + f4);
        if math::abs(s2 - s1) <= 15.0 * seg_tol {
            // quartic interpolant in tau = 4 u / w on [0, 4]
            let c0 = g0;
            let c1 = (-50.0 * g0 + 96.0 * f1 - 72.0 * f2 + 32.0 * f3 - 6.0 * f4) / 24.0;
            let c2 = (35.0 * g0 - 104.0 * f1 + 114.0 * f2 - 56.0 * f3 + 11.0 * f4) / 24.0;
            let c3 = (-10.0 * g0 + 36.0 * f1 - 48.0 * f2 + 28.0 * f3 - 6.0 * f4) / 24.0;
            let c4 = (g0 - 4.0 * f1 + 6.0 * f2 - 4.0 * f3 + f4) / 24.0;
            let quarter = 0.25 * w;
            let integral = |tau: f64| {
                quarter
                    * (tau
                        * (c0
                            + tau
                                * (c1 / 2.0
                                    + tau * (c2 / 3.0 + tau * (c3 / 4.0 + tau * c4 / 5.0)))))
            };
            let density = |tau: f64| c0 + tau * (c1 + tau * (c2 + tau * (c3 + tau * c4)));
            let seg = integral(4.0);
            if seg >= target {
                let res_tol = 0.5 * tol;
                let mut lo = 0.0f64;
                let mut hi = 4.0f64;
                let mut tau = 4.0 * target / seg;
                for _ in 0..200 {
                    let r = integral(tau) - target;
                    if math::abs(r) <= res_tol {
                        return Ok(Some(quarter * tau));
                    }
                    if r > 0.0 {
                        hi = tau;
                    } else {
                        lo = tau;
                    }
                    let slope = quarter * density(tau);
                    let newton = if slope > 0.0 { tau - r / slope } else { f64::NAN };
                    tau = if newton.is_finite() && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo <= f64::EPSILON * 4.0 {
                        return Ok(Some(quarter * tau));
                    }
                }
                return Err(HittingTimeError { t, window: (t, t + w) });
            }
            if w >= remaining {
                return Ok(None);
            }
            acc = seg;
            a = w;
            w *= 2.0;
        }
        // the window needed subdivision; fall through to the general loop
    }

    loop {
        let b = (a + w).min(remaining);
        let seg = adaptive_simpson_guarded(g, t + a, t + b, seg_tol, 2);
        if acc + seg >= target {
            return refine(g, t, a, b, seg, acc, target, tol).map(Some);
        }
        acc += seg;
        a = b;
        if a >= remaining {
            return Ok(None);
        }
        w *= 2.0;
    }
}

// Newton with a bisection safeguard on [lo, hi], where the cumulative
// integral passes the target inside the window.
#[allow(clippy::too_many_arguments)]
fn refine<G: Fn(f64) -> f64>(
    g: &G,
    t: f64,
    win_lo: f64,
    win_hi: f64,
    seg: f64,
    acc: f64,
    target: f64,
    tol: f64,
) -> Result<f64, HittingTimeError> {
    let seg_tol = tol / 10.0;
    let res_tol = 0.5 * tol;
    let mut lo = win_lo; // residual(lo) <= 0
    let mut hi = win_hi; // residual(hi) >= 0
    let need = target - acc;

    // interpolate against the window integral for the starting point
    let mut x = if seg > 0.0 {
        win_lo + (need / seg) * (win_hi - win_lo)
    } else {
        0.5 * (win_lo + win_hi)
    };
    x = x.clamp(win_lo, win_hi);

    for _ in 0..200 {
        let r = adaptive_simpson(g, t + win_lo, t + x, seg_tol) - need;
        if math::abs(r) <= res_tol {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = g(t + x);
        let newton = if slope > 0.0 { x - r / slope } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * math::abs(t + hi).max(1.0) {
            return Ok(x);
        }
    }
    Err(HittingTimeError { t, window: (t + win_lo, t + win_hi) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        // Simpson integrates cubics exactly
        let f = |x: f64| 3.0 * x * x * x - x + 2.0;
        let got = adaptive_simpson(&f, -1.0, 2.0, 1e-12);
        let want = |x: f64| 0.75 * x * x * x * x - 0.5 * x * x + 2.0 * x;
        assert!((got - (want(2.0) - want(-1.0))).abs() < 1e-12);
    }

    #[test]
    fn simpson_sine_period() {
        let f = |x: f64| (60.0 + 15.0 * (core::f64::consts::TAU * x / 24.0).sin());
        let got = adaptive_simpson(&f, 0.0, 24.0, 1e-10);
        assert!((got - 1440.0).abs() < 1e-8, "{got}");
    }

    #[test]
    fn hitting_time_constant_rate_closed_form() {
        // constant g = c gives dt = target / c
        for &(c, e) in &[(2.0, 1.0), (0.5, 3.7), (1000.0, 0.2)] {
            let g = |_: f64| c;
            let dt = solve_hitting_time(&g, 0.0, 1e9, e, 1e-10).unwrap().unwrap();
            assert!((dt - e / c).abs() < 1e-8, "c={c} e={e}: {dt}");
        }
    }

    #[test]
    fn hitting_time_linear_rate_closed_form() {
        // g(s) = s from t = 0 gives dt = sqrt(2 target)
        for &e in &[0.5, 1.0, 2.0, 7.3] {
            let g = |s: f64| s;
            let dt = solve_hitting_time(&g, 0.0, 1e6, e, 1e-10).unwrap().unwrap();
            assert!((dt - (2.0 * e).sqrt()).abs() < 1e-8, "e={e}: {dt}");
        }
    }

    #[test]
    fn hitting_time_respects_horizon() {
        // integral to the horizon is 0.5 < 1.0: no jump
        let g = |_: f64| 0.1;
        assert_eq!(solve_hitting_time(&g, 0.0, 5.0, 1.0, 1e-10).unwrap(), None);
        // zero rate never fires
        let g0 = |_: f64| 0.0;
        assert_eq!(solve_hitting_time(&g0, 0.0, 100.0, 0.3, 1e-10).unwrap(), None);
    }

    #[test]
    fn hitting_time_nonzero_start_sinusoid() {
        // check against a dense numerical inversion
        let g = |s: f64| 10.0 + 4.0 * (s * 0.7).sin();
        let t0 = 3.2;
        let e = 2.5;
        let dt = solve_hitting_time(&g, t0, 1e6, e, 1e-12).unwrap().unwrap();
        let check = adaptive_simpson(&g, t0, t0 + dt, 1e-13);
        assert!((check - e).abs() < 1e-10, "residual {}", check - e);
    }
}
