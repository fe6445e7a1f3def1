//! Normal, chi-square and noncentral chi-square distribution functions.
//!
//! The regularized incomplete gamma function is the single workhorse: the
//! normal tail is `Q(1/2, x²/2) / 2` and the chi-square survival function is
//! `Q(df/2, x/2)`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let tail = 0.5 * gamma_q(0.5, 0.5 * x * x);
    if x < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// Inverse of [`normal_cdf`]; rational initial guess refined by Halley steps.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    // Acklam's rational approximation
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let plow = 0.024_25;
    let mut x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..3 {
        // work on the smaller tail to keep the residual accurate
        let e = if x < 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_sf(x) };
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// `P(χ²_df > x)`.
pub fn chisq_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5 * df, 0.5 * x)
}

pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(0.5 * df, 0.5 * x)
}

/// Upper quantile: the `x` with `P(χ²_df > x) = upper_tail`.
pub fn chisq_quantile(df: u32, upper_tail: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs df >= 1".into()));
    }
    if !(upper_tail > 0.0 && upper_tail < 1.0) {
        return Err(Error::Domain(format!(
            "chi-square tail probability must be in (0,1), got {upper_tail}"
        )));
    }
    let k = df as f64;
    // bracket
    let mut lo = 0.0;
    let mut hi = k.max(1.0);
    while chisq_sf(hi, k) > upper_tail {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson–Hilferty start, clipped into the bracket
    let z = normal_quantile(1.0 - upper_tail)?;
    let h = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - h + z * h.sqrt()).powi(3);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let half_k = 0.5 * k;
    for _ in 0..200 {
        let sf = chisq_sf(x, k);
        let f = sf - upper_tail;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if f.abs() <= 1e-15 * upper_tail.max(1e-300) || hi - lo <= 1e-15 * x.max(1e-300) {
            break;
        }
        // density of chi-square at x
        let dens = ((half_k - 1.0) * x.ln() - 0.5 * x - half_k * LN_2 - ln_gamma(half_k)).exp();
        let step = f / dens;
        let next = x + step;
        x = if dens > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    Ok(x)
}

/// Truncation threshold on the remaining Poisson mass in the mixture series.
const POISSON_MASS_TOL: f64 = 1e-12;

/// `P(χ'²_df(δ) > x)` by the Poisson mixture of central chi-square tails.
///
/// Terms are summed outward from the Poisson mode until the accumulated
/// Poisson weight is within `1e-12` of one.
pub fn noncentral_chisq_sf(x: f64, df: u32, delta: f64) -> f64 {
    let k = df as f64;
    if delta <= 0.0 {
        return chisq_sf(x, k);
    }
    if x <= 0.0 {
        return 1.0;
    }
    let lambda = 0.5 * delta;
    let mode = lambda.floor() as u64;
    let log_weight = |j: u64| -> f64 {
        let jf = j as f64;
        -lambda + jf * lambda.ln() - ln_gamma(jf + 1.0)
    };
    let term = |j: u64| chisq_sf(x, k + 2.0 * j as f64);

    let mut mass = 0.0;
    let mut sum = 0.0;
    let w_mode = log_weight(mode).exp();
    mass += w_mode;
    sum += w_mode * term(mode);

    let mut up = mode + 1;
    let mut down = mode;
    let mut w_up = w_mode;
    let mut w_down = w_mode;
    while 1.0 - mass > POISSON_MASS_TOL {
        let mut progressed = false;
        if down > 0 {
            w_down *= down as f64 / lambda;
            down -= 1;
            mass += w_down;
            sum += w_down * term(down);
            progressed = true;
        }
        w_up *= lambda / up as f64;
        mass += w_up;
        sum += w_up * term(up);
        up += 1;
        if !progressed && w_up < 1e-300 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
