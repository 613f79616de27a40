//! Predictive distributions, VaR extraction, and the rolling out-of-sample
//! harness.
//!
//! One-step-ahead prediction is closed form: the filter state theta_{T+1}
//! fixes the scale of the next conditional distribution. Longer horizons are
//! simulated. The rolling harness walks an out-of-sample window, re-estimating
//! on a configurable cadence while always advancing the filter through every
//! new observation before predicting.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{open_unit_uniform, DistParams, Family};
use crate::error::{Error, Result};
use crate::filter::{estimate_with, filter_path, FitOptions, FitResult};

/// In-sample window behaviour during rolling forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowScheme {
    /// Fixed-length window that slides forward.
    Moving,
    /// Expanding window anchored at the first observation.
    Recursive,
}

impl std::str::FromStr for WindowScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "moving" => Ok(WindowScheme::Moving),
            "recursive" => Ok(WindowScheme::Recursive),
            other => Err(Error::InvalidInput(format!(
                "unknown window scheme '{other}' (expected moving or recursive)"
            ))),
        }
    }
}

impl std::fmt::Display for WindowScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowScheme::Moving => "moving",
            WindowScheme::Recursive => "recursive",
        })
    }
}

/// Configuration of a rolling out-of-sample run.
#[derive(Debug, Clone)]
pub struct RollConfig {
    /// Length H of the out-of-sample period.
    pub forecast_length: usize,
    /// Steps between re-estimations; 1 refits at every step.
    pub refit_every: usize,
    pub window: WindowScheme,
    /// Forecast horizon; rolling VaR uses the closed-form h = 1.
    pub horizon: usize,
    /// VaR levels, each strictly inside (0, 0.5).
    pub var_levels: Vec<f64>,
    /// Monte-Carlo draws for horizons h > 1.
    pub sim_draws: usize,
    pub seed: u64,
    /// Worker threads for the harness; 0 picks the rayon default.
    pub workers: usize,
    pub fit: FitOptions,
}

impl RollConfig {
    pub fn new(forecast_length: usize, var_levels: Vec<f64>) -> Self {
        Self {
            forecast_length,
            refit_every: 1,
            window: WindowScheme::Moving,
            horizon: 1,
            var_levels,
            sim_draws: 10_000,
            seed: 0,
            workers: 0,
            fit: FitOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.forecast_length == 0 {
            return Err(Error::InvalidInput("forecast length must be >= 1".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidInput("refit cadence must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        if self.var_levels.is_empty() {
            return Err(Error::InvalidInput("at least one VaR level required".into()));
        }
        for &a in &self.var_levels {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::InvalidInput(format!(
                    "VaR level must be in (0, 0.5), got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-step output of a rolling run.
#[derive(Debug, Clone)]
pub struct RollResult {
    /// H rows, one column per level in `var_levels` order.
    pub var_forecasts: Vec<Vec<f64>>,
    /// Predicted conditional distribution at each step.
    pub pred_params: Vec<DistParams>,
    /// Realized out-of-sample returns.
    pub realized: Vec<f64>,
    /// Out-of-sample steps (0-based) at which a refit was scheduled.
    pub refit_indices: Vec<usize>,
    /// In-sample length used by each scheduled refit.
    pub refit_window_lens: Vec<usize>,
    /// Scheduled refits whose estimation failed (coefficients were reused).
    pub failed_refits: Vec<usize>,
    /// Echo of the levels that index `var_forecasts` columns.
    pub var_levels: Vec<f64>,
}

impl RollResult {
    pub fn refit_count(&self) -> usize {
        self.refit_indices.len()
    }
}

/// One-step-ahead predictive distribution: re-runs the filter over the
/// supplied data and reads the advanced state.
pub fn predict_one_step(fit: &FitResult, returns: &[f64]) -> Result<DistParams> {
    let out = filter_path(returns, &fit.model)?;
    DistParams::new(
        fit.model.family,
        fit.model.mu,
        out.theta_next.exp(),
        fit.model.xi,
        fit.model.nu,
    )
}

/// Simulated returns at horizon `h` (h >= 2), advancing the recursion draw by
/// draw. The h = 1 distribution is closed form and never simulated; requesting
/// it is an error.
///
/// Diverging paths are dropped; more than 0.1% of them is an error.
pub fn predict_h_step(
    fit: &FitResult,
    returns: &[f64],
    h: usize,
    sim_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if h < 2 {
        return Err(Error::InvalidInput(
            "horizon must be >= 2; use predict_one_step for h = 1".into(),
        ));
    }
    if sim_draws < 1000 {
        return Err(Error::InvalidInput(format!(
            "sim_draws must be >= 1000, got {sim_draws}"
        )));
    }
    let model = &fit.model;
    let base = DistParams::new(model.family, model.mu, 1.0, model.xi, model.nu)?;
    let theta_start = filter_path(returns, model)?.theta_next;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sim_draws);
    let mut exploded = 0usize;
    for _ in 0..sim_draws {
        let mut theta = theta_start;
        let mut terminal = f64::NAN;
        let mut ok = true;
        for step in 0..h {
            if !theta.is_finite() || theta.abs() > 600.0 {
                ok = false;
                break;
            }
            let at_t = base.with_sigma(theta.exp())?;
            let u = open_unit_uniform(&mut rng);
            let r = at_t.quantile(u)?;
            if step + 1 == h {
                terminal = r;
            } else {
                theta = model.kappa + model.a_coef * at_t.score_logscale(r) + model.b_coef * theta;
            }
        }
        if ok && terminal.is_finite() {
            out.push(terminal);
        } else {
            exploded += 1;
        }
    }
    if (exploded as f64) > 0.001 * sim_draws as f64 {
        return Err(Error::ExplosiveSimulation { exploded, total: sim_draws });
    }
    Ok(out)
}

/// VaR at level `alpha`: the alpha-quantile of the predictive distribution.
pub fn var_from_params(params: &DistParams, alpha: f64) -> Result<f64> {
    params.quantile(alpha)
}

/// Rolling out-of-sample VaR forecasts.
///
/// For each out-of-sample step t (0-based), the in-sample window is the last
/// S observations before t under `Moving`, or everything before t under
/// `Recursive`. Re-estimation happens at steps where t mod refit_every == 0;
/// between refits the coefficients are frozen but the filter is advanced
/// through every new observation. A failed refit falls back to the previous
/// coefficients; more than 5% failures aborts.
pub fn roll(returns: &[f64], family: Family, cfg: &RollConfig) -> Result<RollResult> {
    cfg.validate()?;
    let t_total = returns.len();
    let h = cfg.forecast_length;
    if t_total <= h {
        return Err(Error::InvalidInput(format!(
            "series length {t_total} must exceed forecast length {h}"
        )));
    }
    let s_len = t_total - h;
    if s_len < cfg.fit.min_observations {
        return Err(Error::InvalidInput(format!(
            "in-sample length {s_len} below the estimation floor {}",
            cfg.fit.min_observations
        )));
    }
    if cfg.horizon != 1 {
        return Err(Error::InvalidInput(
            "rolling harness supports horizon 1; use predict_h_step for h > 1".into(),
        ));
    }

    // estimation window for out-of-sample step t
    let window_of = |t: usize| -> &[f64] {
        match cfg.window {
            WindowScheme::Moving => &returns[t..s_len + t],
            WindowScheme::Recursive => &returns[..s_len + t],
        }
    };

    let refit_steps: Vec<usize> = (0..h).step_by(cfg.refit_every).collect();
    let refit_window_lens: Vec<usize> = refit_steps.iter().map(|&t| window_of(t).len()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Estimation(format!("worker pool: {e}")))?;

    // refits are independent once the schedule is fixed
    let fits: Vec<Result<FitResult>> = pool.install(|| {
        use rayon::prelude::*;
        refit_steps
            .par_iter()
            .map(|&t| estimate_with(window_of(t), family, &cfg.fit))
            .collect()
    });

    // resolve the active model per refit, falling back to the last success
    let mut resolved: Vec<FitResult> = Vec::with_capacity(fits.len());
    let mut failed_refits = Vec::new();
    for (k, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => resolved.push(f),
            Err(e) => {
                failed_refits.push(refit_steps[k]);
                match resolved.last().cloned() {
                    Some(prev) => resolved.push(prev),
                    None => {
                        return Err(Error::Estimation(format!(
                            "initial refit failed, no coefficients to fall back on: {e}"
                        )))
                    }
                }
            }
        }
    }
    if failed_refits.len() * 20 > refit_steps.len() {
        return Err(Error::TooManyRefitFailures {
            failures: failed_refits.len(),
            refits: refit_steps.len(),
        });
    }

    // per-step prediction: filter the current window with the active fit
    let steps: Vec<Result<(DistParams, Vec<f64>)>> = pool.install(|| {
        use rayon::prelude::*;
        (0..h)
            .into_par_iter()
            .map(|t| {
                let fit = &resolved[t / cfg.refit_every];
                let params = predict_one_step(fit, window_of(t))?;
                let vars = cfg
                    .var_levels
                    .iter()
                    .map(|&a| var_from_params(&params, a))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((params, vars))
            })
            .collect()
    });

    let mut var_forecasts = Vec::with_capacity(h);
    let mut pred_params = Vec::with_capacity(h);
    for step in steps {
        let (params, vars) = step?;
        pred_params.push(params);
        var_forecasts.push(vars);
    }

    Ok(RollResult {
        var_forecasts,
        pred_params,
        realized: returns[s_len..].to_vec(),
        refit_indices: refit_steps,
        refit_window_lens,
        failed_refits,
        var_levels: cfg.var_levels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{simulate_path, GasModel};

    fn fit_of(model: GasModel, returns: &[f64]) -> FitResult {
        let filtered = filter_path(returns, &model).unwrap();
        FitResult {
            model,
            loglik: filtered.loglik,
            converged: true,
            iterations: 0,
            theta_path: filtered.theta_path,
            standard_errors: None,
        }
    }

    #[test]
    fn static_model_predicts_exp_kappa() {
        let kappa = (0.02f64).ln();
        let model = GasModel::new(Family::Norm, kappa, 0.0, 0.0, 0.0, 1.0, f64::INFINITY).unwrap();
        let returns = [0.01, -0.02, 0.005];
        let fit = fit_of(model, &returns);
        let params = predict_one_step(&fit, &returns).unwrap();
        assert!((params.sigma() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn constant_data_reaches_recursion_limit() {
        let model = GasModel::new(Family::Norm, -0.2, 0.1, 0.5, 0.0, 1.0, f64::INFINITY).unwrap();
        let returns = vec![0.0; 500];
        let fit = fit_of(model, &returns);
        let params = predict_one_step(&fit, &returns).unwrap();
        let limit = ((model.kappa - model.a_coef) / (1.0 - model.b_coef)).exp();
        assert!((params.sigma() - limit).abs() < 1e-12);
    }

    #[test]
    fn one_step_matches_filter_state() {
        let model = GasModel::new(Family::Std, -0.3, 0.06, 0.9, 0.0, 1.0, 6.0).unwrap();
        let (returns, _) = simulate_path(&model, 2500, 5).unwrap();
        let fit = fit_of(model, &returns);
        let params = predict_one_step(&fit, &returns).unwrap();
        let direct = filter_path(&returns, &model).unwrap().theta_next.exp();
        assert_eq!(params.sigma(), direct);
    }

    #[test]
    fn normal_var_level() {
        let p = DistParams::normal(0.0, 1.0).unwrap();
        assert!((var_from_params(&p, 0.05).unwrap() + 1.644_853_626_951_472_7).abs() < 1e-10);
        let t = DistParams::student_t(0.1, 2.0, 5.0).unwrap();
        assert!((var_from_params(&t, 0.5).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn h_step_contract() {
        let model = GasModel::new(Family::Norm, -0.2, 0.05, 0.9, 0.0, 1.0, f64::INFINITY).unwrap();
        let (returns, _) = simulate_path(&model, 300, 1).unwrap();
        let fit = fit_of(model, &returns);
        assert!(predict_h_step(&fit, &returns, 1, 10_000, 0).is_err());
        assert!(predict_h_step(&fit, &returns, 2, 100, 0).is_err());
        let draws = predict_h_step(&fit, &returns, 2, 5000, 0).unwrap();
        assert_eq!(draws.len(), 5000);
    }

    #[test]
    fn h_step_static_model_matches_analytic_quantile() {
        // dynamics off: horizon-2 distribution is exactly the stationary one
        let kappa = (0.01f64).ln();
        let model = GasModel::new(Family::Norm, kappa, 0.0, 0.0, 0.0, 1.0, f64::INFINITY).unwrap();
        let returns = vec![0.0; 200];
        let fit = fit_of(model, &returns);
        let draws = predict_h_step(&fit, &returns, 2, 100_000, 7).unwrap();
        let mut sorted = draws.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q05 = sorted[(0.05 * sorted.len() as f64) as usize];
        let analytic = DistParams::normal(0.0, 0.01).unwrap().quantile(0.05).unwrap();
        // Monte-Carlo error at 1e5 draws
        assert!((q05 - analytic).abs() < 3e-4, "{q05} vs {analytic}");
    }

    #[test]
    fn roll_config_validation() {
        let mut cfg = RollConfig::new(10, vec![0.01]);
        cfg.fit.min_observations = 50;
        assert!(roll(&vec![0.0; 5], Family::Norm, &cfg).is_err()); // too short
        let cfg_bad = RollConfig::new(10, vec![0.7]);
        assert!(roll(&vec![0.01; 200], Family::Norm, &cfg_bad).is_err()); // bad level
    }

    #[test]
    fn refit_cadence_boundary() {
        // refit_every = H: exactly one estimation
        let model = GasModel::new(Family::Norm, -4.0 * 0.1, 0.05, 0.9, 0.0, 1.0, f64::INFINITY)
            .unwrap();
        let (returns, _) = simulate_path(&model, 260, 17).unwrap();
        let mut cfg = RollConfig::new(10, vec![0.05]);
        cfg.refit_every = 10;
        cfg.fit.min_observations = 100;
        cfg.workers = 1;
        let result = roll(&returns, Family::Norm, &cfg).unwrap();
        assert_eq!(result.refit_count(), 1);
        assert_eq!(result.refit_indices, vec![0]);
        assert_eq!(result.refit_window_lens, vec![250]);
        assert_eq!(result.realized.len(), 10);
        assert_eq!(result.var_forecasts.len(), 10);
    }

    #[test]
    fn window_bookkeeping() {
        let model = GasModel::new(Family::Norm, -4.0 * 0.1, 0.05, 0.9, 0.0, 1.0, f64::INFINITY)
            .unwrap();
        let (returns, _) = simulate_path(&model, 320, 23).unwrap();
        let mut cfg = RollConfig::new(20, vec![0.05]);
        cfg.refit_every = 5;
        cfg.fit.min_observations = 100;
        cfg.workers = 1;

        let moving = roll(&returns, Family::Norm, &cfg).unwrap();
        assert_eq!(moving.refit_indices, vec![0, 5, 10, 15]);
        assert!(moving.refit_window_lens.iter().all(|&l| l == 300));

        cfg.window = WindowScheme::Recursive;
        let recursive = roll(&returns, Family::Norm, &cfg).unwrap();
        assert_eq!(recursive.refit_window_lens, vec![300, 305, 310, 315]);
    }
}
