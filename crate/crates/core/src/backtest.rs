//! VaR forecast evaluation: hit series, actual-over-expected ratio,
//! unconditional and conditional coverage likelihood-ratio tests, the dynamic
//! quantile regression test, quantile loss, and absolute deviations.
//!
//! All p-values are exact chi-square upper-tail probabilities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::chi2_sf;

/// Indicator series of VaR violations.
#[derive(Debug, Clone)]
pub struct HitSeries {
    /// 1 where the realized return fell strictly below the forecast.
    pub hits: Vec<u8>,
    pub alpha: f64,
}

impl HitSeries {
    /// Builds a hit series directly from indicators, for simulation studies.
    pub fn from_hits(hits: Vec<u8>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be in (0,1), got {alpha}"
            )));
        }
        if hits.iter().any(|&h| h > 1) {
            return Err(Error::InvalidInput("hit indicators must be 0 or 1".into()));
        }
        Ok(Self { hits, alpha })
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Number of violations.
    pub fn count(&self) -> usize {
        self.hits.iter().map(|&h| h as usize).sum()
    }
}

/// Violation indicators: hit when realized < VaR, ties are non-hits.
pub fn hit_series(realized: &[f64], var_forecasts: &[f64], alpha: f64) -> Result<HitSeries> {
    if realized.len() != var_forecasts.len() {
        return Err(Error::LengthMismatch { left: realized.len(), right: var_forecasts.len() });
    }
    if realized.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let hits = realized
        .iter()
        .zip(var_forecasts)
        .map(|(&r, &v)| u8::from(r < v))
        .collect();
    HitSeries::from_hits(hits, alpha)
}

/// Actual over expected violation ratio; 1 under correct coverage,
/// above 1 the model underestimates risk.
pub fn ae_ratio(h: &HitSeries) -> f64 {
    h.count() as f64 / (h.alpha * h.len() as f64)
}

/// A test statistic with its chi-square p-value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TestOutcome {
    pub stat: f64,
    pub pvalue: f64,
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    // 0 log 0 = 0 convention for degenerate counts
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unconditional coverage likelihood-ratio test (chi-square, 1 df).
pub fn kupiec_uc(h: &HitSeries) -> TestOutcome {
    let n = h.len() as f64;
    let x = h.count() as f64;
    let a = h.alpha;
    let l_null = xlogy(n - x, 1.0 - a) + xlogy(x, a);
    let l_alt = xlogy(n - x, 1.0 - x / n) + xlogy(x, x / n);
    let stat = (-2.0 * (l_null - l_alt)).max(0.0);
    TestOutcome { stat, pvalue: chi2_sf(stat, 1) }
}

/// Conditional coverage test: coverage plus first-order independence of the
/// hit sequence against a two-state Markov chain (chi-square, 2 df).
pub fn christoffersen_cc(h: &HitSeries) -> Result<TestOutcome> {
    if h.len() < 2 {
        return Err(Error::InvalidInput(
            "conditional coverage needs at least 2 observations".into(),
        ));
    }
    let mut n00 = 0.0;
    let mut n01 = 0.0;
    let mut n10 = 0.0;
    let mut n11 = 0.0;
    for w in h.hits.windows(2) {
        match (w[0], w[1]) {
            (0, 0) => n00 += 1.0,
            (0, 1) => n01 += 1.0,
            (1, 0) => n10 += 1.0,
            _ => n11 += 1.0,
        }
    }
    let p01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let p11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let p1 = (n01 + n11) / (n00 + n01 + n10 + n11);

    let l_null = xlogy(n00 + n10, 1.0 - p1) + xlogy(n01 + n11, p1);
    let l_markov = xlogy(n00, 1.0 - p01) + xlogy(n01, p01) + xlogy(n10, 1.0 - p11) + xlogy(n11, p11);
    let lr_ind = (2.0 * (l_markov - l_null)).max(0.0);

    let stat = kupiec_uc(h).stat + lr_ind;
    Ok(TestOutcome { stat, pvalue: chi2_sf(stat, 2) })
}

/// Dynamic quantile test outcome; `rank_deficient` records that the regressor
/// cross-product needed a pseudo-inverse.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DqOutcome {
    pub stat: f64,
    pub pvalue: f64,
    pub rank_deficient: bool,
}

/// Dynamic quantile test: regresses the demeaned hits on a constant, `lags`
/// lagged demeaned hits, and the contemporaneous VaR forecast; the Wald
/// statistic is chi-square with lags + 2 df under correct specification.
pub fn dq_test(h: &HitSeries, var_forecasts: &[f64], lags: usize) -> Result<DqOutcome> {
    let n = h.len();
    if var_forecasts.len() != n {
        return Err(Error::LengthMismatch { left: n, right: var_forecasts.len() });
    }
    if lags == 0 {
        return Err(Error::InvalidInput("dq test needs at least 1 lag".into()));
    }
    if n <= lags + 2 {
        return Err(Error::InvalidInput(format!(
            "dq test needs more than lags + 2 = {} observations, got {n}",
            lags + 2
        )));
    }
    let alpha = h.alpha;
    let demeaned: Vec<f64> = h.hits.iter().map(|&d| d as f64 - alpha).collect();

    let k = lags + 2; // constant + lags + VaR
    let rows = n - lags;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for s in lags..n {
        row[0] = 1.0;
        for j in 0..lags {
            row[1 + j] = demeaned[s - 1 - j];
        }
        row[k - 1] = var_forecasts[s];
        let y = demeaned[s];
        for i in 0..k {
            xty[i] += row[i] * y;
            for j in i..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }

    // stat = (X'y)' pinv(X'X) (X'y) / (alpha (1 - alpha)); identical to
    // b' (X'X) b with b the least-squares coefficients
    let (pinv, rank_deficient) = pseudo_inverse_sym(&xtx);
    let mut quad = 0.0;
    for i in 0..k {
        for j in 0..k {
            quad += xty[i] * pinv[i][j] * xty[j];
        }
    }
    let stat = (quad / (alpha * (1.0 - alpha))).max(0.0);
    let _ = rows;
    Ok(DqOutcome { stat, pvalue: chi2_sf(stat, k), rank_deficient })
}

/// Moore-Penrose pseudo-inverse of a small symmetric PSD matrix through a
/// cyclic Jacobi eigendecomposition. Returns the inverse and whether any
/// eigenvalue was truncated.
fn pseudo_inverse_sym(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, bool) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[i][p];
                    let miq = m[i][q];
                    m[i][p] = c * mip - s * miq;
                    m[i][q] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[p][j];
                    let mqj = m[q][j];
                    m[p][j] = c * mpj - s * mqj;
                    m[q][j] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    let eigs: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    let max_eig = eigs.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
    let tol = max_eig * 1e-12;
    let mut truncated = false;
    let inv_eigs: Vec<f64> = eigs
        .iter()
        .map(|&e| {
            if e.abs() <= tol {
                truncated = true;
                0.0
            } else {
                1.0 / e
            }
        })
        .collect();

    let mut pinv = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (l, &ie) in inv_eigs.iter().enumerate() {
                acc += v[i][l] * ie * v[j][l];
            }
            pinv[i][j] = acc;
        }
    }
    (pinv, truncated)
}

/// Asymmetric quantile loss per step and its mean.
///
/// QL = (alpha - d)(y - VaR) with d the violation indicator, so violations
/// carry weight (1 - alpha).
pub fn quantile_loss(
    realized: &[f64],
    var_forecasts: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, f64)> {
    if realized.len() != var_forecasts.len() {
        return Err(Error::LengthMismatch { left: realized.len(), right: var_forecasts.len() });
    }
    if realized.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let series: Vec<f64> = realized
        .iter()
        .zip(var_forecasts)
        .map(|(&y, &v)| {
            let d = f64::from(y < v);
            (alpha - d) * (y - v)
        })
        .collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok((series, mean))
}

/// Ratio of mean quantile losses; below 1 the first model wins.
pub fn ql_ratio(mean_a: f64, mean_b: f64) -> Result<f64> {
    if !(mean_b > 0.0) {
        return Err(Error::InvalidInput(format!(
            "baseline quantile loss must be > 0, got {mean_b}"
        )));
    }
    Ok(mean_a / mean_b)
}

/// Mean and max of |realized - VaR| over violation instants; (0, 0) when no
/// violation occurred.
pub fn absolute_deviation(
    realized: &[f64],
    var_forecasts: &[f64],
    h: &HitSeries,
) -> Result<(f64, f64)> {
    if realized.len() != var_forecasts.len() || realized.len() != h.len() {
        return Err(Error::LengthMismatch { left: realized.len(), right: var_forecasts.len().min(h.len()) });
    }
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut count = 0usize;
    for ((&y, &v), &d) in realized.iter().zip(var_forecasts).zip(&h.hits) {
        if d == 1 {
            let dev = (y - v).abs();
            sum += dev;
            max = max.max(dev);
            count += 1;
        }
    }
    if count == 0 {
        Ok((0.0, 0.0))
    } else {
        Ok((sum / count as f64, max))
    }
}

/// Full evaluation of a VaR forecast series at one level.
#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub alpha: f64,
    pub ae: f64,
    pub uc: TestOutcome,
    pub cc: TestOutcome,
    pub dq: DqOutcome,
    pub ql_series: Vec<f64>,
    pub ql_mean: f64,
    pub ad_mean: f64,
    pub ad_max: f64,
}

/// Runs every backtest measure on a (realized, VaR) pair.
pub fn backtest(
    realized: &[f64],
    var_forecasts: &[f64],
    alpha: f64,
    dq_lags: usize,
) -> Result<BacktestReport> {
    let hits = hit_series(realized, var_forecasts, alpha)?;
    let uc = kupiec_uc(&hits);
    let cc = christoffersen_cc(&hits)?;
    let dq = dq_test(&hits, var_forecasts, dq_lags)?;
    let (ql_series, ql_mean) = quantile_loss(realized, var_forecasts, alpha)?;
    let (ad_mean, ad_max) = absolute_deviation(realized, var_forecasts, &hits)?;
    Ok(BacktestReport {
        alpha,
        ae: ae_ratio(&hits),
        uc,
        cc,
        dq,
        ql_series,
        ql_mean,
        ad_mean,
        ad_max,
    })
}
