//! Score-driven volatility filter and maximum-likelihood estimation.
//!
//! The latent state is theta_t = log sigma_t, updated through
//!
//!   theta_{t+1} = kappa + A s_t + B theta_t,
//!
//! where s_t is the score of the conditional log-density with respect to
//! theta_t evaluated at the observed return. The filter starts at the
//! stationary level kappa / (1 - B). Estimation maximizes the log-likelihood
//! over an unconstrained reparameterization (log A, atanh B, log(nu - 2),
//! log xi) with a small deterministic set of restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dist::{open_unit_uniform, DistParams, Family};
use crate::error::{Error, Result};
use crate::optim;

/// Bound on |log sigma| beyond which the recursion is declared explosive.
const THETA_BOUND: f64 = 600.0;
/// Objective value reported for infeasible points during estimation.
const INFEASIBLE: f64 = 1e15;

/// Static coefficients of the volatility recursion plus the distribution
/// shape parameters.
#[derive(Debug, Clone, Copy)]
pub struct GasModel {
    pub family: Family,
    /// Intercept of the update equation.
    pub kappa: f64,
    /// Score loading, >= 0.
    pub a_coef: f64,
    /// Persistence, |B| < 1.
    pub b_coef: f64,
    pub mu: f64,
    pub xi: f64,
    pub nu: f64,
}

impl GasModel {
    pub fn new(
        family: Family,
        kappa: f64,
        a_coef: f64,
        b_coef: f64,
        mu: f64,
        xi: f64,
        nu: f64,
    ) -> Result<Self> {
        let model = Self { family, kappa, a_coef, b_coef, mu, xi, nu };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be finite, got {}",
                self.kappa
            )));
        }
        if !(self.a_coef >= 0.0) || !self.a_coef.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "score loading A must be finite and >= 0, got {}",
                self.a_coef
            )));
        }
        if !(self.b_coef.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "persistence B must satisfy |B| < 1, got {}",
                self.b_coef
            )));
        }
        // family constraints on (mu, xi, nu) via a probe with unit scale
        self.shape_template()?;
        Ok(())
    }

    /// Unconditional level of log sigma, the filter's starting state.
    pub fn unconditional_log_scale(&self) -> f64 {
        self.kappa / (1.0 - self.b_coef)
    }

    /// Distribution parameters with unit scale; per-observation scales are
    /// substituted with `with_sigma`.
    fn shape_template(&self) -> Result<DistParams> {
        DistParams::new(self.family, self.mu, 1.0, self.xi, self.nu)
    }
}

/// Output of a filter pass over a return series.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// log sigma_t for t = 1..T.
    pub theta_path: Vec<f64>,
    /// Scores s_t for t = 1..T.
    pub score_path: Vec<f64>,
    /// Sum of conditional log-densities.
    pub loglik: f64,
    /// One-step-ahead state theta_{T+1}.
    pub theta_next: f64,
}

/// Runs the score recursion over `returns`, accumulating the log-likelihood.
pub fn filter_path(returns: &[f64], model: &GasModel) -> Result<FilterOutput> {
    validate_returns(returns)?;
    model.validate()?;
    let base = model.shape_template()?;

    let n = returns.len();
    let mut theta_path = Vec::with_capacity(n);
    let mut score_path = Vec::with_capacity(n);
    let mut loglik = 0.0;
    let mut theta = model.unconditional_log_scale();

    for (t, &r) in returns.iter().enumerate() {
        if !theta.is_finite() || theta.abs() > THETA_BOUND {
            return Err(Error::ExplosiveFilter { step: t });
        }
        let at_t = base.with_sigma(theta.exp())?;
        loglik += at_t.log_density(r);
        let score = at_t.score_logscale(r);
        theta_path.push(theta);
        score_path.push(score);
        theta = model.kappa + model.a_coef * score + model.b_coef * theta;
    }
    if !theta.is_finite() || theta.abs() > THETA_BOUND {
        return Err(Error::ExplosiveFilter { step: n });
    }

    Ok(FilterOutput { theta_path, score_path, loglik, theta_next: theta })
}

/// Log-likelihood only; same recursion as `filter_path` without the paths.
fn loglik_only(returns: &[f64], model: &GasModel) -> Result<f64> {
    let base = model.shape_template()?;
    let mut loglik = 0.0;
    let mut theta = model.unconditional_log_scale();
    for (t, &r) in returns.iter().enumerate() {
        if !theta.is_finite() || theta.abs() > THETA_BOUND {
            return Err(Error::ExplosiveFilter { step: t });
        }
        let at_t = base.with_sigma(theta.exp())?;
        loglik += at_t.log_density(r);
        theta = model.kappa + model.a_coef * at_t.score_logscale(r) + model.b_coef * theta;
    }
    Ok(loglik)
}

/// Simulates a return path from the model. Deterministic given `seed`.
///
/// Returns the simulated returns and the log-scale path that generated them.
pub fn simulate_path(model: &GasModel, t_len: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if t_len == 0 {
        return Err(Error::InvalidInput("simulation length must be >= 1".into()));
    }
    model.validate()?;
    let base = model.shape_template()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut returns = Vec::with_capacity(t_len);
    let mut theta_path = Vec::with_capacity(t_len);
    let mut theta = model.unconditional_log_scale();
    for t in 0..t_len {
        if !theta.is_finite() || theta.abs() > THETA_BOUND {
            return Err(Error::ExplosiveFilter { step: t });
        }
        let at_t = base.with_sigma(theta.exp())?;
        let u = open_unit_uniform(&mut rng);
        let r = at_t.quantile(u)?;
        returns.push(r);
        theta_path.push(theta);
        theta = model.kappa + model.a_coef * at_t.score_logscale(r) + model.b_coef * theta;
    }
    Ok((returns, theta_path))
}

/// Estimation settings.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Minimum number of observations accepted.
    pub min_observations: usize,
    /// Quasi-Newton stopping rules.
    pub optimizer: optim::Options,
    /// Number of perturbed restarts beyond the data-driven start.
    pub restarts: usize,
    /// Compute delta-method standard errors for the natural parameters.
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_observations: 100,
            optimizer: optim::Options::default(),
            restarts: 2,
            standard_errors: false,
        }
    }
}

/// Result of maximum-likelihood estimation.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: GasModel,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub theta_path: Vec<f64>,
    /// Standard errors in the order (kappa, A, B, mu[, nu][, xi]).
    pub standard_errors: Option<Vec<f64>>,
}

/// Maximum-likelihood fit with default options.
pub fn estimate(returns: &[f64], family: Family) -> Result<FitResult> {
    estimate_with(returns, family, &FitOptions::default())
}

/// Maximum-likelihood fit of all static parameters.
///
/// Non-convergence within the iteration budget is reported through the
/// `converged` flag, not as an error.
pub fn estimate_with(returns: &[f64], family: Family, opts: &FitOptions) -> Result<FitResult> {
    validate_returns(returns)?;
    if returns.len() < opts.min_observations {
        return Err(Error::InvalidInput(format!(
            "need at least {} observations, got {}",
            opts.min_observations,
            returns.len()
        )));
    }
    if returns.iter().all(|&r| r == returns[0]) {
        return Err(Error::Estimation("degenerate input: zero variance".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let variance = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    if variance <= 0.0 || !variance.is_finite() {
        return Err(Error::Estimation("degenerate input: zero variance".into()));
    }
    let log_sd = 0.5 * variance.ln();

    // optimize the per-observation average so the gradient tolerance is
    // scale-free in the sample size
    let objective = |x: &[f64]| {
        let model = untransform(x, family);
        match loglik_only(returns, &model) {
            Ok(ll) if ll.is_finite() => -ll / n,
            _ => INFEASIBLE,
        }
    };

    // variance-targeted start plus deterministic perturbations
    let starts = starting_points(family, mean, log_sd, opts.restarts);
    let mut best: Option<optim::Solution> = None;
    for x0 in &starts {
        let sol = optim::minimize(&objective, x0, &opts.optimizer);
        let better = match &best {
            None => true,
            Some(b) => sol.value < b.value,
        };
        if better {
            best = Some(sol);
        }
    }
    let best = best.expect("at least one start");
    if best.value >= INFEASIBLE {
        return Err(Error::Estimation(
            "likelihood not finite at any visited point".into(),
        ));
    }

    let model = untransform(&best.x, family);
    let filtered = filter_path(returns, &model)?;
    let standard_errors = if opts.standard_errors {
        standard_errors_from_hessian(&objective, &best.x, family)
    } else {
        None
    };

    Ok(FitResult {
        model,
        loglik: filtered.loglik,
        converged: best.converged,
        iterations: best.iterations,
        theta_path: filtered.theta_path,
        standard_errors,
    })
}

fn validate_returns(returns: &[f64]) -> Result<()> {
    if returns.is_empty() {
        return Err(Error::InvalidInput("return series is empty".into()));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite return at index {i}"
        )));
    }
    Ok(())
}

// Unconstrained parameterization: [kappa, ln A, atanh B, mu/scale,
// ln(nu-2), ln xi], truncated to the family's parameter count. The location
// is measured in units of the sample standard deviation so the objective
// curvature is comparable across coordinates; clamps keep the inverse map
// finite when the optimizer wanders.

fn transform(model: &GasModel, family: Family, mu_scale: f64) -> Vec<f64> {
    let mut x = vec![
        model.kappa,
        model.a_coef.max(1e-12).ln(),
        model.b_coef.atanh(),
        model.mu / mu_scale,
    ];
    if family != Family::Norm {
        x.push((model.nu - 2.0).ln());
    }
    if family == Family::Sstd {
        x.push(model.xi.ln());
    }
    x
}

fn untransform(x: &[f64], family: Family, mu_scale: f64) -> GasModel {
    let kappa = x[0].clamp(-50.0, 50.0);
    let a_coef = x[1].clamp(-40.0, 5.0).exp();
    let b_coef = x[2].clamp(-18.0, 18.0).tanh();
    let mu = x[3] * mu_scale;
    let nu = if family == Family::Norm {
        f64::INFINITY
    } else {
        2.0 + x[4].clamp(-3.0, 14.0).exp()
    };
    let xi = if family == Family::Sstd {
        x[5].clamp(-2.3, 2.3).exp()
    } else {
        1.0
    };
    GasModel { family, kappa, a_coef, b_coef, mu, xi, nu }
}

fn starting_points(family: Family, mean: f64, log_sd: f64, restarts: usize) -> Vec<Vec<f64>> {
    // (A, B, nu, xi) triples; kappa targets the sample standard deviation
    let bases = [
        (0.05, 0.90, 8.0, 1.0),
        (0.15, 0.70, 5.0, 0.9),
        (0.02, 0.97, 20.0, 1.1),
    ];
    bases
        .iter()
        .take(1 + restarts)
        .map(|&(a, b, nu, xi)| {
            let model = GasModel {
                family,
                kappa: (1.0 - b) * log_sd,
                a_coef: a,
                b_coef: b,
                mu: mean,
                xi: if family == Family::Sstd { xi } else { 1.0 },
                nu: if family == Family::Norm { f64::INFINITY } else { nu },
            };
            transform(&model, family)
        })
        .collect()
}

/// Delta-method standard errors from the finite-difference Hessian of the
/// negative log-likelihood in transformed coordinates.
fn standard_errors_from_hessian<F: Fn(&[f64]) -> f64>(
    objective: &F,
    x: &[f64],
    family: Family,
) -> Option<Vec<f64>> {
    let hessian = optim::numerical_hessian(objective, x, 1e-4);
    let cov = optim::invert(&hessian)?;
    let model = untransform(x, family);
    // d(natural)/d(transformed) along the diagonal
    let mut jac = vec![1.0, model.a_coef, 1.0 - model.b_coef * model.b_coef, 1.0];
    if family != Family::Norm {
        jac.push(model.nu - 2.0);
    }
    if family == Family::Sstd {
        jac.push(model.xi);
    }
    let mut out = Vec::with_capacity(jac.len());
    for (i, j) in jac.iter().enumerate() {
        let v = cov[i][i];
        if v < 0.0 {
            return None;
        }
        out.push(j.abs() * v.sqrt());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_model(kappa: f64, a: f64, b: f64) -> GasModel {
        GasModel::new(Family::Norm, kappa, a, b, 0.0, 1.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(GasModel::new(Family::Norm, 0.0, -0.1, 0.5, 0.0, 1.0, f64::INFINITY).is_err());
        assert!(GasModel::new(Family::Norm, 0.0, 0.1, 1.0, 0.0, 1.0, f64::INFINITY).is_err());
        assert!(GasModel::new(Family::Std, 0.0, 0.1, 0.5, 0.0, 1.0, 1.5).is_err());
        assert!(GasModel::new(Family::Sstd, 0.0, 0.1, 0.5, 0.0, 1.2, 5.0).is_ok());
    }

    #[test]
    fn static_model_collapses_to_iid() {
        // A = B = 0: theta stays at kappa, loglik is the i.i.d. one
        let kappa = (0.02f64).ln();
        let model = norm_model(kappa, 0.0, 0.0);
        let returns = [0.01, -0.03, 0.002, 0.015, -0.007];
        let out = filter_path(&returns, &model).unwrap();
        assert!(out.theta_path.iter().all(|&t| t == kappa));
        let p = DistParams::normal(0.0, 0.02).unwrap();
        let iid: f64 = returns.iter().map(|&r| p.log_density(r)).sum();
        assert!((out.loglik - iid).abs() < 1e-12);
        assert_eq!(out.theta_next, kappa);
    }

    #[test]
    fn constant_returns_drive_deterministic_recursion() {
        // returns equal to mu give score -1, a linear recursion towards (kappa - A)/(1 - B)
        let model = norm_model(-0.2, 0.1, 0.5);
        let returns = vec![0.0; 200];
        let out = filter_path(&returns, &model).unwrap();
        assert!(out.score_path.iter().all(|&s| (s + 1.0).abs() < 1e-12));
        let limit = (model.kappa - model.a_coef) / (1.0 - model.b_coef);
        assert!((out.theta_path.last().unwrap() - limit).abs() < 1e-10);
        // recursion check: theta_{t+1} = kappa - A + B theta_t
        for t in 1..returns.len() {
            let expect = model.kappa - model.a_coef + model.b_coef * out.theta_path[t - 1];
            assert!((out.theta_path[t] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn filter_reproduces_simulated_state_path() {
        let model = GasModel::new(Family::Sstd, -0.23, 0.07, 0.95, 0.0, 0.9, 6.0).unwrap();
        let (returns, theta_sim) = simulate_path(&model, 1000, 99).unwrap();
        let out = filter_path(&returns, &model).unwrap();
        for (a, b) in out.theta_path.iter().zip(&theta_sim) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = norm_model(-0.2, 0.05, 0.9);
        let (r1, t1) = simulate_path(&model, 500, 42).unwrap();
        let (r2, t2) = simulate_path(&model, 500, 42).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(t1, t2);
        let (r3, _) = simulate_path(&model, 500, 43).unwrap();
        assert_ne!(r1, r3);
    }

    #[test]
    fn static_normal_simulation_matches_scale() {
        let sigma = 0.01f64;
        let model = norm_model(sigma.ln(), 0.0, 0.0);
        let (returns, _) = simulate_path(&model, 20_000, 3).unwrap();
        let var = returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "var ratio {}", var / (sigma * sigma));
    }

    #[test]
    fn explosive_filter_is_reported() {
        // force |theta| out of range quickly with a huge intercept
        let model = GasModel { family: Family::Norm, kappa: 601.0, a_coef: 0.0, b_coef: 0.0, mu: 0.0, xi: 1.0, nu: f64::INFINITY };
        let err = filter_path(&[0.1, 0.2], &model).unwrap_err();
        match err {
            Error::ExplosiveFilter { .. } => {}
            other => panic!("expected explosive filter, got {other}"),
        }
    }

    #[test]
    fn estimate_rejects_bad_input() {
        assert!(estimate(&[0.0; 50], Family::Norm).is_err()); // below floor
        let constant = vec![0.01; 500];
        assert!(matches!(
            estimate(&constant, Family::Norm),
            Err(Error::Estimation(_))
        ));
        let mut with_nan = vec![0.01; 500];
        with_nan[250] = f64::NAN;
        assert!(estimate(&with_nan, Family::Norm).is_err());
    }

    #[test]
    fn transform_roundtrip() {
        let model = GasModel::new(Family::Sstd, -0.3, 0.08, 0.92, 0.001, 0.85, 7.5).unwrap();
        let x = transform(&model, Family::Sstd);
        let back = untransform(&x, Family::Sstd);
        assert!((back.kappa - model.kappa).abs() < 1e-12);
        assert!((back.a_coef - model.a_coef).abs() < 1e-12);
        assert!((back.b_coef - model.b_coef).abs() < 1e-12);
        assert!((back.nu - model.nu).abs() < 1e-10);
        assert!((back.xi - model.xi).abs() < 1e-12);
    }

    #[test]
    fn estimate_recovers_iid_scale() {
        // i.i.d. Gaussian data: A should vanish and the fitted unconditional
        // scale should match the sample standard deviation
        let sigma = 0.015f64;
        let model = norm_model(sigma.ln(), 0.0, 0.0);
        let (returns, _) = simulate_path(&model, 4000, 11).unwrap();
        let fit = estimate(&returns, Family::Norm).unwrap();
        assert!(fit.converged);
        assert!(fit.model.a_coef < 0.02, "A = {}", fit.model.a_coef);
        let fitted_sd = fit.model.unconditional_log_scale().exp();
        let sample_sd = {
            let m = returns.iter().sum::<f64>() / returns.len() as f64;
            (returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / returns.len() as f64).sqrt()
        };
        assert!(
            (fitted_sd / sample_sd - 1.0).abs() < 0.05,
            "fitted {fitted_sd} vs sample {sample_sd}"
        );
    }
}
