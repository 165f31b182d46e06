//! Scalar numerics used by the model: bracketed root-finding, quadrature,
//! one-dimensional maximization, and the standard normal CDF.
//!
//! These are deliberately small, deterministic routines with explicit
//! tolerances; the solver result types expose their iteration counts.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Outcome of a bracketed root search.
#[derive(Debug, Clone, Copy)]
pub struct RootResult {
    pub root: f64,
    pub iterations: usize,
}

/// Brent's method on `[a, b]` with `f(a)` and `f(b)` of opposite sign.
///
/// Converges when the bracket width falls below `xtol + rtol * |x|`.
/// Returns `None` if the input bracket does not straddle a sign change.
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    rtol: f64,
    max_iter: usize,
) -> Option<RootResult> {
    let (mut xpre, mut xcur) = (a, b);
    let (mut fpre, mut fcur) = (f(xpre), f(xcur));
    if fpre * fcur > 0.0 {
        return None;
    }
    if fpre == 0.0 {
        return Some(RootResult { root: xpre, iterations: 0 });
    }
    if fcur == 0.0 {
        return Some(RootResult { root: xcur, iterations: 0 });
    }

    let (mut xblk, mut fblk) = (0.0, 0.0);
    let (mut spre, mut scur) = (0.0, 0.0);
    for i in 0..max_iter {
        if fpre * fcur < 0.0 {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }

        let delta = 0.5 * (xtol + rtol * xcur.abs());
        let sbis = 0.5 * (xblk - xcur);
        if fcur == 0.0 || sbis.abs() < delta {
            return Some(RootResult { root: xcur, iterations: i });
        }

        if spre.abs() > delta && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                // secant
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                // inverse quadratic interpolation
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if 2.0 * stry.abs() < spre.abs().min(3.0 * sbis.abs() - delta) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }

        xpre = xcur;
        fpre = fcur;
        if scur.abs() > delta {
            xcur += scur;
        } else {
            xcur += if sbis > 0.0 { delta } else { -delta };
        }
        fcur = f(xcur);
    }
    Some(RootResult { root: xcur, iterations: max_iter })
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

// the argument list carries the cached endpoint evaluations of the classic
// recursion; bundling them would only rename the same nine values
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> std::result::Result<f64, f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(err.abs() / 15.0);
    }
    let l = adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, 60)
        .map_err(|achieved| Error::Quadrature { requested: tol, achieved })
}

const GL_N: usize = 64;

/// Nodes and weights of 64-point Gauss-Legendre on [-1, 1], computed once by
/// Newton iteration on the Legendre recurrence.
fn gl64() -> &'static ([f64; GL_N], [f64; GL_N]) {
    static TABLE: OnceLock<([f64; GL_N], [f64; GL_N])> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = GL_N;
        let mut x = [0.0; GL_N];
        let mut w = [0.0; GL_N];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                // p1 = P_n(z), recurrence from P_0, P_1
                let (mut p0, mut p1) = (1.0, z);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / dp;
                if (z - z1).abs() < 1e-15 {
                    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                    x[i] = z;
                    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                    break;
                }
            }
        }
        (x, w)
    })
}

/// One 64-node Gauss-Legendre panel over `[a, b]`.
pub fn gauss_legendre_64<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let (xs, ws) = gl64();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..GL_N {
        acc += ws[i] * f(c + h * xs[i]);
    }
    acc * h
}

/// Composite Gauss-Legendre: panels are doubled until two successive
/// estimates agree to `tol` (absolute).
pub fn integrate_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = 1usize;
    let mut prev = gauss_legendre_64(&mut f, a, b);
    while panels <= 4096 {
        panels *= 2;
        let h = (b - a) / panels as f64;
        let mut est = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            est += gauss_legendre_64(&mut f, lo, lo + h);
        }
        let diff = (est - prev).abs();
        if diff < tol {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::Quadrature { requested: tol, achieved: f64::NAN })
}

/// Golden-section search for a local maximum of `f` on `[a, b]`.
/// Stops when the bracket is narrower than `xtol`; returns the midpoint.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal CDF via an Abramowitz-Stegun style erfc approximation
/// (double-precision rational fit; abs error below 1.2e-16 after symmetry).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function, W. J. Cody's rational approximation.
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let r = if ax < 0.5 {
        return 1.0 - erf_small(x);
    } else if ax < 4.0 {
        // Cody's second interval
        const P: [f64; 9] = [
            5.641_884_969_886_701e-1,
            8.883_149_794_388_377,
            6.611_919_063_714_163e1,
            2.986_351_381_974_001e2,
            8.819_522_212_417_69e2,
            1.712_047_612_634_070_7e3,
            2.051_078_377_826_071_6e3,
            1.230_339_354_797_997_2e3,
            2.153_115_354_744_038_3e-8,
        ];
        const Q: [f64; 8] = [
            1.574_492_611_070_983_5e1,
            1.176_939_508_913_125e2,
            5.371_811_018_620_099e2,
            1.621_389_574_566_690_3e3,
            3.290_799_235_733_459_7e3,
            4.362_619_090_143_247e3,
            3.439_367_674_143_721_6e3,
            1.230_339_354_803_749_5e3,
        ];
        let mut num = P[8] * ax;
        let mut den = ax;
        for i in 0..8 {
            num = (num + P[i]) * ax;
            den = (den + Q[i]) * ax;
        }
        (num / den) * (-ax * ax).exp()
    } else {
        // asymptotic interval
        const P: [f64; 6] = [
            3.053_266_349_612_323_6e-1,
            3.603_448_999_498_044_5e-1,
            1.257_817_261_112_292_6e-1,
            1.608_378_514_874_227_5e-2,
            6.587_491_615_298_378e-4,
            1.631_538_713_730_209_7e-2,
        ];
        const Q: [f64; 5] = [
            2.568_520_192_289_822,
            1.872_952_849_923_460_4,
            5.279_051_029_514_285e-1,
            6.051_834_131_244_132e-2,
            2.335_204_976_268_691_8e-3,
        ];
        let isq = 1.0 / (ax * ax);
        let mut num = P[5] * isq;
        let mut den = isq;
        for i in 0..4 {
            num = (num + P[i]) * isq;
            den = (den + Q[i]) * isq;
        }
        const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
        let frac = isq * (num + P[4]) / (den + Q[4]);
        ((FRAC_1_SQRT_PI - frac) / ax) * (-ax * ax).exp()
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

// erf on |x| < 0.5, Cody's first interval.
fn erf_small(x: f64) -> f64 {
    const P: [f64; 4] = [
        3.161_123_743_870_565_5,
        1.138_641_541_510_501_6e2,
        3.774_852_376_853_02e2,
        3.209_377_589_138_469_4e3,
    ];
    const Q: [f64; 4] = [
        2.360_129_095_234_412_2e1,
        2.440_246_379_344_441_7e2,
        1.282_616_526_077_372_3e3,
        2.844_236_833_439_171e3,
    ];
    let z = x * x;
    let mut num = 1.857_777_061_846_031_5e-1 * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    x * (num + P[3]) / (den + Q[3])
}
