//! The skew-Student-t conditional distribution family with nested Student-t
//! and Normal cases.
//!
//! The skewed density follows the Fernandez-Steel construction applied to a
//! unit-variance Student-t base, reparameterized so that the location and
//! scale arguments are the conditional mean and standard deviation: for all
//! valid parameters, E[r] = mu and Var[r] = sigma^2.
//!
//! Writing z = ((r - mu)/sigma) s + m, the log-density is
//!
//!   log f = log g + log s - log sigma + c
//!           - (nu+1)/2 * log(1 + z^2 / ((nu-2) xi*^2)),
//!
//! with xi* = xi when z > 0, 1/xi when z < 0, and constants m, s, g, c that
//! depend on (xi, nu) only. Setting xi = 1 recovers the Student-t and the
//! Normal is the exact nu = infinity limit, handled in closed form.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    ln_gamma_half_ratio, norm_cdf, norm_quantile, student_t_cdf, student_t_quantile, LN_2PI,
};
use std::f64::consts::PI;

/// Conditional distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Normal: xi = 1, nu = infinity.
    Norm,
    /// Student-t: xi = 1, nu free.
    Std,
    /// Skew-Student-t: xi and nu free.
    Sstd,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Norm => "norm",
            Family::Std => "std",
            Family::Sstd => "sstd",
        }
    }

    /// Number of static shape parameters beyond (kappa, A, B, mu).
    pub fn shape_count(self) -> usize {
        match self {
            Family::Norm => 0,
            Family::Std => 1,
            Family::Sstd => 2,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "norm" => Ok(Family::Norm),
            "std" => Ok(Family::Std),
            "sstd" => Ok(Family::Sstd),
            other => Err(Error::InvalidInput(format!(
                "unknown distribution family '{other}' (expected norm, std or sstd)"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Constants of the skewed density that depend on (xi, nu) only.
///
/// `mu1` is the first absolute moment of the unit-variance base density,
/// `m` and `s` are the mean and standard deviation of the raw skewed
/// variable, `g` is the Fernandez-Steel mass-splitting factor and `c` the
/// log-normalizer of the base density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkstConstants {
    pub mu1: f64,
    pub m: f64,
    pub s: f64,
    pub g: f64,
    pub c: f64,
    /// Cached log g + log s + c.
    pub log_norm: f64,
}

/// Computes the (xi, nu)-dependent constants of the skewed density.
///
/// `nu` may be `f64::INFINITY`, in which case the base density is the exact
/// standard normal.
pub fn constants(xi: f64, nu: f64) -> Result<SkstConstants> {
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("xi must be > 0, got {xi}")));
    }
    if !(nu > 2.0) {
        return Err(Error::InvalidParameter(format!("nu must be > 2, got {nu}")));
    }
    let (mu1, c) = if nu.is_infinite() {
        // half-normal mean and the Gaussian log-normalizer
        ((2.0 / PI).sqrt(), -0.5 * LN_2PI)
    } else {
        let ln_ratio = ln_gamma_half_ratio(0.5 * nu);
        let mu1 = 2.0 * (nu - 2.0).sqrt() / (nu - 1.0) * (ln_ratio - 0.5 * PI.ln()).exp();
        let c = ln_ratio - 0.5 * (PI * (nu - 2.0)).ln();
        (mu1, c)
    };
    let m = mu1 * (xi - 1.0 / xi);
    let s2 = (1.0 - mu1 * mu1) * (xi * xi + 1.0 / (xi * xi)) + 2.0 * mu1 * mu1 - 1.0;
    let s = s2.sqrt();
    let g = 2.0 / (xi + 1.0 / xi);
    Ok(SkstConstants {
        mu1,
        m,
        s,
        g,
        c,
        log_norm: g.ln() + s.ln() + c,
    })
}

/// Full parameter vector of a conditional distribution.
#[derive(Debug, Clone, Copy)]
pub struct DistParams {
    family: Family,
    mu: f64,
    sigma: f64,
    xi: f64,
    nu: f64,
    consts: SkstConstants,
}

impl DistParams {
    /// Builds a validated parameter vector.
    ///
    /// For `Norm`, `xi` must be 1 and `nu` is forced to infinity; for `Std`,
    /// `xi` must be 1. Requires sigma > 0, xi > 0 and nu > 2.
    pub fn new(family: Family, mu: f64, sigma: f64, xi: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        if family != Family::Sstd && xi != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "family {family} fixes xi = 1, got {xi}"
            )));
        }
        let nu = if family == Family::Norm { f64::INFINITY } else { nu };
        let consts = constants(xi, nu)?;
        Ok(Self { family, mu, sigma, xi, nu, consts })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Norm, mu, sigma, 1.0, f64::INFINITY)
    }

    pub fn student_t(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        Self::new(Family::Std, mu, sigma, 1.0, nu)
    }

    pub fn skew_student_t(mu: f64, sigma: f64, xi: f64, nu: f64) -> Result<Self> {
        Self::new(Family::Sstd, mu, sigma, xi, nu)
    }

    /// Same shape parameters with a different scale. Cheap: the cached
    /// constants do not depend on sigma.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        Ok(Self { sigma, ..*self })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn constants(&self) -> &SkstConstants {
        &self.consts
    }

    /// Standardized argument z = ((r - mu)/sigma) s + m.
    #[inline]
    fn z(&self, r: f64) -> f64 {
        (r - self.mu) / self.sigma * self.consts.s + self.consts.m
    }

    /// Piecewise skew factor: xi for z > 0, 1/xi for z < 0, 1 at z = 0.
    #[inline]
    fn xi_star(&self, z: f64) -> f64 {
        if z > 0.0 {
            self.xi
        } else if z < 0.0 {
            1.0 / self.xi
        } else {
            1.0
        }
    }

    /// Log-density at `r`. Finite for every finite `r`.
    pub fn log_density(&self, r: f64) -> f64 {
        match self.family {
            Family::Norm => {
                let z = (r - self.mu) / self.sigma;
                -self.sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
            }
            Family::Std | Family::Sstd => {
                let k = &self.consts;
                let z = self.z(r);
                let xs = self.xi_star(z);
                let t2 = z * z / ((self.nu - 2.0) * xs * xs);
                let tail = if t2.is_finite() {
                    t2.ln_1p()
                } else {
                    // far tail: 1 is negligible, work in logs to stay finite
                    let ln_abs_z = if z.is_finite() {
                        z.abs().ln()
                    } else {
                        (r - self.mu).abs().ln() - self.sigma.ln() + k.s.ln()
                    };
                    2.0 * (ln_abs_z - xs.ln()) - (self.nu - 2.0).ln()
                };
                k.log_norm - self.sigma.ln() - 0.5 * (self.nu + 1.0) * tail
            }
        }
    }

    /// Cumulative distribution function at `r`.
    pub fn cdf(&self, r: f64) -> f64 {
        match self.family {
            Family::Norm => norm_cdf((r - self.mu) / self.sigma),
            Family::Std | Family::Sstd => {
                let k = &self.consts;
                let z = self.z(r);
                // unit-variance base -> standard t argument
                let scale = (self.nu / (self.nu - 2.0)).sqrt();
                let xi = self.xi;
                if z < 0.0 {
                    k.g / xi * student_t_cdf(xi * z * scale, self.nu)
                } else {
                    1.0 / (1.0 + xi * xi)
                        + k.g * xi * (student_t_cdf(z / xi * scale, self.nu) - 0.5)
                }
            }
        }
    }

    /// Quantile function; `prob` must lie strictly inside (0, 1).
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidInput(format!(
                "probability must be in (0,1), got {prob}"
            )));
        }
        Ok(match self.family {
            Family::Norm => self.mu + self.sigma * norm_quantile(prob),
            Family::Std | Family::Sstd => {
                let k = &self.consts;
                let xi = self.xi;
                let scale = (self.nu / (self.nu - 2.0)).sqrt();
                let split = 1.0 / (1.0 + xi * xi);
                let z = if prob < split {
                    student_t_quantile(prob * (1.0 + xi * xi) / 2.0, self.nu) / (scale * xi)
                } else {
                    let upper = 1.0 - (1.0 - prob) * (1.0 + xi * xi) / (2.0 * xi * xi);
                    xi * student_t_quantile(upper, self.nu) / scale
                };
                self.mu + self.sigma * (z - k.m) / k.s
            }
        })
    }

    /// Score of the log-density with respect to log sigma, i.e.
    /// d log f(r) / d log sigma.
    ///
    /// For the skewed t this is
    ///   (nu+1) z (z - m) / ((nu-2) xi*^2 + z^2) - 1,
    /// which reduces to z^2 - 1 in the Normal limit.
    pub fn score_logscale(&self, r: f64) -> f64 {
        match self.family {
            Family::Norm => {
                let z = (r - self.mu) / self.sigma;
                z * z - 1.0
            }
            Family::Std | Family::Sstd => {
                let k = &self.consts;
                let z = self.z(r);
                let xs = self.xi_star(z);
                if z.abs() > 1e100 {
                    // bounded-score limit as |z| grows
                    (self.nu + 1.0) * (1.0 - k.m / z) - 1.0
                } else {
                    (self.nu + 1.0) * z * (z - k.m) / ((self.nu - 2.0) * xs * xs + z * z) - 1.0
                }
            }
        }
    }

    /// Draws `n` i.i.d. samples by inverse transform on a counter-based
    /// seeded generator. Deterministic given `(seed, n)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = open_unit_uniform(&mut rng);
            // u is strictly inside (0,1), so quantile cannot fail
            out.push(self.quantile(u).expect("uniform draw in (0,1)"));
        }
        Ok(out)
    }
}

/// Uniform draw strictly inside (0, 1): bucket midpoints on a 2^53 grid.
pub(crate) fn open_unit_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MU1_LIMIT: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

    #[test]
    fn constants_symmetric_case() {
        let k = constants(1.0, 5.0).unwrap();
        assert!(k.m.abs() < 1e-15);
        assert!((k.s - 1.0).abs() < 1e-15);
        assert!((k.g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_closed_form() {
        // mu1(xi, nu=5) = 4 sqrt(3) / (3 pi), independent of xi
        let k = constants(1.5, 5.0).unwrap();
        let mu1 = 4.0 * 3f64.sqrt() / (3.0 * PI);
        assert!((k.mu1 - mu1).abs() < 1e-14, "mu1 = {}", k.mu1);
        assert!((k.m - mu1 * (1.5 - 1.0 / 1.5)).abs() < 1e-14);
        assert!((k.s - 1.148_555_963_514_479_7).abs() < 1e-13);
        assert!((k.g - 12.0 / 13.0).abs() < 1e-15);
        assert!((k.c + 0.713_206_777_171_728_8).abs() < 1e-13);
    }

    #[test]
    fn constants_nu_six_exact() {
        // mu1(nu=6) = 3/4 exactly
        let k = constants(0.9, 6.0).unwrap();
        assert!((k.mu1 - 0.75).abs() < 1e-14);
    }

    #[test]
    fn constants_normal_limit() {
        let k = constants(1.0, f64::INFINITY).unwrap();
        assert!((k.mu1 - MU1_LIMIT).abs() < 1e-15);
        // large finite nu approaches the same limit
        let k2 = constants(1.0, 1e9).unwrap();
        assert!((k2.mu1 - MU1_LIMIT).abs() < 1e-8);
    }

    #[test]
    fn constants_domain_errors() {
        assert!(constants(0.0, 5.0).is_err());
        assert!(constants(-1.0, 5.0).is_err());
        assert!(constants(1.0, 2.0).is_err());
        assert!(constants(1.0, 1.5).is_err());
    }

    #[test]
    fn family_constraints_enforced() {
        assert!(DistParams::new(Family::Std, 0.0, 1.0, 1.2, 5.0).is_err());
        assert!(DistParams::new(Family::Norm, 0.0, 1.0, 1.2, 5.0).is_err());
        assert!(DistParams::new(Family::Sstd, 0.0, 1.0, 1.2, 5.0).is_ok());
        assert!(DistParams::new(Family::Sstd, 0.0, 0.0, 1.2, 5.0).is_err());
        // nu ignored for Norm
        let p = DistParams::new(Family::Norm, 0.0, 1.0, 1.0, 5.0).unwrap();
        assert!(p.nu().is_infinite());
    }

    #[test]
    fn normal_log_density_at_zero() {
        let p = DistParams::normal(0.0, 1.0).unwrap();
        assert!((p.log_density(0.0) + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn sstd_with_unit_xi_reduces_to_std() {
        let sstd = DistParams::new(Family::Sstd, 0.0, 1.0, 1.0, 5.0).unwrap();
        let std = DistParams::student_t(0.0, 1.0, 5.0).unwrap();
        assert!((sstd.log_density(0.3) - std.log_density(0.3)).abs() < 1e-12);
        assert!((std.log_density(0.3) + 0.801_883_183_896_362).abs() < 1e-12);
    }

    #[test]
    fn skew_log_density_reference() {
        let p = DistParams::skew_student_t(0.0, 1.0, 1.5, 5.0).unwrap();
        assert!((p.log_density(0.3) + 1.036_558_005_199_795_3).abs() < 1e-12);
    }

    #[test]
    fn log_density_finite_in_far_tails() {
        let p = DistParams::skew_student_t(0.0, 0.01, 0.7, 2.5).unwrap();
        for &r in &[-1e8, -5.0, 5.0, 1e8, 1e300] {
            assert!(p.log_density(r).is_finite(), "r={r}");
        }
    }

    #[test]
    fn cdf_symmetry_and_split() {
        let std = DistParams::student_t(0.1, 2.0, 7.0).unwrap();
        assert!((std.cdf(0.1) - 0.5).abs() < 1e-15);

        // mass below the mode is 1/(1+xi^2)
        let p = DistParams::skew_student_t(0.0, 1.0, 1.5, 5.0).unwrap();
        let k = *p.constants();
        let mode = -k.m / k.s;
        assert!((p.cdf(mode) - 1.0 / (1.0 + 1.5 * 1.5)).abs() < 1e-14);
    }

    #[test]
    fn cdf_reference_value() {
        let p = DistParams::skew_student_t(0.0, 1.0, 1.5, 5.0).unwrap();
        assert!((p.cdf(0.3) - 0.690_151_765_032_297).abs() < 1e-12);
    }

    #[test]
    fn quantile_median_and_anchor() {
        let std = DistParams::student_t(0.1, 2.0, 7.0).unwrap();
        assert!((std.quantile(0.5).unwrap() - 0.1).abs() < 1e-14);

        let p = DistParams::skew_student_t(0.0, 1.0, 1.5, 5.0).unwrap();
        let k = *p.constants();
        let split = 1.0 / (1.0 + 1.5 * 1.5);
        assert!((p.quantile(split).unwrap() - (-k.m / k.s)).abs() < 1e-14);
    }

    #[test]
    fn quantile_reference_value() {
        let p = DistParams::skew_student_t(0.0, 1.0, 0.9, 6.0).unwrap();
        assert!((p.quantile(0.01).unwrap() + 2.737_826_804_374_709).abs() < 1e-11);
    }

    #[test]
    fn quantile_domain_errors() {
        let p = DistParams::normal(0.0, 1.0).unwrap();
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
        assert!(p.quantile(-0.2).is_err());
    }

    #[test]
    fn score_normal_closed_form() {
        let p = DistParams::normal(0.3, 0.7).unwrap();
        assert!((p.score_logscale(0.3) + 1.0).abs() < 1e-15);
        assert!(p.score_logscale(1.0).abs() < 1e-12);
    }

    #[test]
    fn score_reference_value() {
        let p = DistParams::skew_student_t(0.0, 1.0, 1.5, 5.0).unwrap();
        assert!((p.score_logscale(0.3) + 0.741_875_231_107_952_7).abs() < 1e-12);
    }

    #[test]
    fn sample_deterministic_and_centered() {
        let p = DistParams::normal(0.0, 1.0).unwrap();
        let a = p.sample(100_000, 7).unwrap();
        let b = p.sample(100_000, 7).unwrap();
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.02, "mean = {mean}");
        assert!(p.sample(0, 7).is_err());
    }
}
