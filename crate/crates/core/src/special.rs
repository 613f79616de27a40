//! Special functions backing the distribution layer: log-gamma, regularized
//! incomplete beta/gamma with inverses, and normal / Student-t CDFs and
//! quantiles.
//!
//! Everything here is closed-form or rapidly converging series and continued
//! fractions; no numeric integration.

use std::f64::consts::PI;

/// ln(2*pi)
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

const MAX_CF_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Lanczos coefficients, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return PI.ln() - (PI * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut ser = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        ser += c / (z + i as f64);
    }
    let base = z + 7.5;
    0.5 * LN_2PI + (z + 0.5) * base.ln() - base + ser.ln()
}

/// ln Gamma(a + b) - ln Gamma(a), stable for large a where the direct
/// difference of two huge values loses absolute precision.
pub fn ln_gamma_ratio(a: f64, b: f64) -> f64 {
    if a < 1e4 {
        ln_gamma(a + b) - ln_gamma(a)
    } else {
        // Stirling difference with the log expanded analytically
        b * a.ln() + (a + b - 0.5) * (b / a).ln_1p() - b - b / (12.0 * a * (a + b))
    }
}

/// ln Gamma(x + 1/2) - ln Gamma(x).
pub fn ln_gamma_half_ratio(x: f64) -> f64 {
    ln_gamma_ratio(x, 0.5)
}

/// ln Beta(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    if a >= b {
        ln_gamma(b) - ln_gamma_ratio(a, b)
    } else {
        ln_gamma(a) - ln_gamma_ratio(b, a)
    }
}

/// Continued fraction for the incomplete beta (Lentz's algorithm).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_CF_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0, "beta_reg requires a, b > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Inverse of the regularized incomplete beta: x with I_x(a, b) = p.
///
/// Halley iteration on `beta_reg` from an asymptotic starting guess;
/// converges to near machine precision.
pub fn inv_beta_reg(a: f64, b: f64, p: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0, "inv_beta_reg requires a, b > 0");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    // iterate on the smaller tail so the root keeps full relative precision
    if p > 0.5 {
        return 1.0 - inv_beta_reg(b, a, 1.0 - p);
    }
    let mut x;
    if a >= 1.0 && b >= 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut w = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            w = -w;
        }
        let al = (w * w - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let ww = w * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        x = a / (a + b * (2.0 * ww).exp());
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            x = (a * w * p).powf(1.0 / a);
        } else {
            x = 1.0 - (b * w * (1.0 - p)).powf(1.0 / b);
        }
    }
    let afac = -ln_beta(a, b);
    for j in 0..32 {
        if x == 0.0 || x == 1.0 {
            return x;
        }
        let err = beta_reg(a, b, x) - p;
        let t = ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() + afac).exp();
        let u = err / t;
        // Halley correction
        let t = u / (1.0 - 0.5 * (u * ((a - 1.0) / x - (b - 1.0) / (1.0 - x))).min(1.0));
        x -= t;
        if x <= 0.0 {
            x = 0.5 * (x + t);
        }
        if x >= 1.0 {
            x = 0.5 * (x + t + 1.0);
        }
        if t.abs() < 2e-16 * x && j > 0 {
            break;
        }
    }
    x
}

/// Series expansion for the regularized lower incomplete gamma P(a, x), x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_CF_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * CF_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Continued fraction for the regularized upper incomplete gamma Q(a, x), x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / CF_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_CF_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = b + an / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0, "gamma_q requires a > 0");
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Upper-tail probability of a chi-square distribution with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    debug_assert!(df > 0, "chi2_sf requires df > 0");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5 * df as f64, 0.5 * x)
}

/// Standard normal CDF.
///
/// Computed through the incomplete gamma (erfc) so the far tails keep full
/// relative precision.
pub fn norm_cdf(z: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let half_tail = 0.5 * gamma_q(0.5, 0.5 * z * z);
    if z < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Standard normal quantile.
///
/// Acklam's rational approximation refined with two Halley steps on
/// `norm_cdf`; accurate to near machine precision.
pub fn norm_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "norm_quantile requires p in (0,1)");
    if p == 0.5 {
        return 0.0;
    }

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
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        if e == 0.0 {
            break;
        }
        let u = e * (0.5 * LN_2PI + 0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Degrees of freedom beyond which the t CDF/quantile switch to the
/// normal-based asymptotic expansion (the incomplete-beta route converges
/// slowly there and the expansion is already exact to ~1e-25).
const T_LARGE_NU: f64 = 2e5;

/// Fisher-Cornish expansion of the t quantile around the normal quantile z
/// (Abramowitz & Stegun 26.7.5).
fn t_quantile_expansion(z: f64, nu: f64) -> f64 {
    let z2 = z * z;
    let g1 = z * (z2 + 1.0) / 4.0;
    let g2 = z * ((5.0 * z2 + 16.0) * z2 + 3.0) / 96.0;
    let g3 = z * (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) / 384.0;
    let g4 = z * ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) / 92160.0;
    z + (g1 + (g2 + (g3 + g4 / nu) / nu) / nu) / nu
}

/// CDF of the standard (unit-scale) Student-t distribution with `nu` degrees
/// of freedom.
pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    debug_assert!(nu > 0.0, "student_t_cdf requires nu > 0");
    if t == 0.0 {
        return 0.5;
    }
    if nu.is_infinite() {
        return norm_cdf(t);
    }
    if nu >= T_LARGE_NU {
        // invert the quantile expansion: the corrections are O(1/nu)
        let mut z = t;
        for _ in 0..3 {
            z = t - (t_quantile_expansion(z, nu) - z);
        }
        return norm_cdf(z);
    }
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Quantile of the standard Student-t distribution.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "student_t_quantile requires p in (0,1)");
    debug_assert!(nu > 0.0, "student_t_quantile requires nu > 0");
    if p == 0.5 {
        return 0.0;
    }
    if nu.is_infinite() {
        return norm_quantile(p);
    }
    if nu >= T_LARGE_NU {
        return t_quantile_expansion(norm_quantile(p), nu);
    }
    let tail = if p < 0.5 { p } else { 1.0 - p };
    let u = inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    let t = (nu * (1.0 - u) / u).sqrt();
    if p < 0.5 {
        -t
    } else {
        t
    }
}
