//! Quasi-Newton minimization with numerically differenced gradients.
//!
//! BFGS on the inverse Hessian with Armijo backtracking, central-difference
//! gradients, and a finite-difference Hessian for standard errors. Objective
//! functions are expected to be smooth; infeasible regions should be handled
//! by the caller through parameter transforms.

/// Stopping rules and differencing steps.
#[derive(Debug, Clone)]
pub struct Options {
    /// Central-difference step for the gradient.
    pub grad_step: f64,
    /// Convergence when the gradient infinity norm falls below this.
    pub grad_tol: f64,
    /// Convergence when the relative objective improvement falls below this.
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            grad_step: 1e-6,
            grad_tol: 1e-5,
            rel_tol: 1e-9,
            max_iterations: 1000,
        }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// True when a configured stopping rule (gradient norm or relative
    /// improvement) was satisfied; false on iteration exhaustion or a
    /// breakdown of the line search.
    pub converged: bool,
}

/// Central-difference gradient.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimizes `f` starting from `x0` with BFGS.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &Options) -> Solution {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = numerical_gradient(&f, &x, opts.grad_step);
    // inverse Hessian approximation, row-major
    let mut h_inv = identity(n);
    let mut first_update = true;
    let mut iterations = 0;
    // number of consecutive stalls (tiny improvement or failed line search);
    // the first stall resets the curvature estimate, the second stops
    let mut stalls = 0usize;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let g_norm = inf_norm(&g);
        if g_norm < opts.grad_tol {
            return Solution { x, value: fx, grad_inf_norm: g_norm, iterations: iter, converged: true };
        }

        // search direction d = -H g, reset to steepest descent if not a descent direction
        let mut d = mat_vec(&h_inv, &g);
        for di in d.iter_mut() {
            *di = -*di;
        }
        if dot(&d, &g) >= 0.0 {
            h_inv = identity(n);
            first_update = true;
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
        }

        // Armijo backtracking
        let slope = dot(&d, &g);
        let mut alpha = 1.0;
        let mut x_new = vec![0.0; n];
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalls += 1;
            if stalls >= 2 {
                let g_norm = inf_norm(&g);
                return Solution {
                    x,
                    value: fx,
                    grad_inf_norm: g_norm,
                    iterations: iter,
                    converged: g_norm < opts.grad_tol,
                };
            }
            // retry from steepest descent with fresh curvature
            h_inv = identity(n);
            first_update = true;
            continue;
        }

        let g_new = numerical_gradient(&f, &x_new, opts.grad_step);
        let improvement = fx - f_new;

        // BFGS update of the inverse Hessian
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            if first_update {
                // scale the initial matrix to the local curvature
                let yy = dot(&y, &y);
                if yy > 0.0 {
                    let scale = sy / yy;
                    for i in 0..n {
                        for j in 0..n {
                            h_inv[i][j] = if i == j { scale } else { 0.0 };
                        }
                    }
                }
                first_update = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        x = x_new;
        fx = f_new;
        g = g_new;

        if improvement <= opts.rel_tol * (fx.abs() + 1e-12) {
            stalls += 1;
            if stalls >= 2 {
                return Solution {
                    x,
                    value: fx,
                    grad_inf_norm: inf_norm(&g),
                    iterations: iter + 1,
                    converged: true,
                };
            }
        } else {
            stalls = 0;
        }
    }

    let g_norm = inf_norm(&g);
    Solution { x, value: fx, grad_inf_norm: g_norm, iterations, converged: false }
}

/// H <- (I - rho s y') H (I - rho y s') + rho s s'
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + rho * (1.0 + rho * yhy) * s[i] * s[j];
        }
    }
}

/// Finite-difference Hessian with per-coordinate relative steps.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel_step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|&xi| rel_step * xi.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut h = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        // diagonal: (f(x+h) - 2 f(x) + f(x-h)) / h^2
        xp[i] = x[i] + steps[i];
        let fp = f(&xp);
        xp[i] = x[i] - steps[i];
        let fm = f(&xp);
        xp[i] = x[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..n {
            xp[i] = x[i] + steps[i];
            xp[j] = x[j] + steps[j];
            let fpp = f(&xp);
            xp[j] = x[j] - steps[j];
            let fpm = f(&xp);
            xp[i] = x[i] - steps[i];
            let fmm = f(&xp);
            xp[j] = x[j] + steps[j];
            let fmp = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let hij = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            h[i][j] = hij;
            h[j][i] = hij;
        }
    }
    h
}

/// In-place Gauss-Jordan inverse with partial pivoting; None when singular.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    for k in 0..2 * n {
                        m[row][k] -= factor * m[col][k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.5).powi(2);
        let sol = minimize(f, &[0.0, 0.0], &Options::default());
        assert!(sol.converged);
        assert!((sol.x[0] - 3.0).abs() < 1e-5);
        assert!((sol.x[1] + 1.5).abs() < 1e-5);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let sol = minimize(f, &[-1.2, 1.0], &Options::default());
        assert!((sol.x[0] - 1.0).abs() < 1e-4, "x = {:?}", sol.x);
        assert!((sol.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 4.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -0.2], 1e-4);
        assert!((h[0][0] - 4.0).abs() < 1e-4);
        assert!((h[0][1] - 3.0).abs() < 1e-4);
        assert!((h[1][1] - 8.0).abs() < 1e-4);
    }

    #[test]
    fn invert_known_matrix() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let inv = invert(&a).unwrap();
        assert!((inv[0][0] - 3.0 / 11.0).abs() < 1e-12);
        assert!((inv[0][1] + 1.0 / 11.0).abs() < 1e-12);
        assert!((inv[1][1] - 4.0 / 11.0).abs() < 1e-12);
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(invert(&singular).is_none());
    }
}
