use gas_risk::{filter::*, optim, Family};

#[test]
fn dbg_iid_fit_gradient() {
    let sigma = 0.015f64;
    let model = GasModel::new(Family::Norm, sigma.ln(), 0.0, 0.0, 0.0, 1.0, f64::INFINITY).unwrap();
    let (returns, _) = simulate_path(&model, 4000, 11).unwrap();
    let n = returns.len() as f64;

    // same objective as estimate_with: mean negative loglik in transformed coords
    let objective = |x: &[f64]| {
        let m = GasModel {
            family: Family::Norm,
            kappa: x[0],
            a_coef: x[1].exp(),
            b_coef: x[2].tanh(),
            mu: x[3],
            xi: 1.0,
            nu: f64::INFINITY,
        };
        match filter_path(&returns, &m) {
            Ok(o) => -o.loglik / n,
            Err(_) => 1e15,
        }
    };
    // stall point from the last run
    let x = [-1.7327074679505912f64, 0.013435509169989349f64.ln(), 0.5887184808223758f64.atanh(), 0.00010025003076469182];
    let g = optim::numerical_gradient(&objective, &x, 1e-6);
    eprintln!("grad at stall = {g:?}");
    eprintln!("f at stall    = {:.12}", objective(&x));
    // try nudging along -g
    for &step in &[1e-3, 1e-2, 1e-1] {
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>();
        let xn: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi / norm.sqrt()).collect();
        eprintln!("f at -{step} grad dir = {:.12}", objective(&xn));
    }
}
