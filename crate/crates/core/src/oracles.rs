//! Reference implementations used to check the convolution solver.
//!
//! None of these share code with the FFT path: the closed form is the
//! standard call formula, the tree approximates `W` by a scaled random walk,
//! and the quadrature evaluates the convolution integrals node by node.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::pricing::MarketParams;
use crate::spectral::{MomentKind, PsiKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsResult {
    pub price: f64,
    pub delta: f64,
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Call on a stock paying a continuous dividend yield.
pub fn black_scholes_call(
    spot: f64,
    strike: f64,
    rate: f64,
    div: f64,
    sigma: f64,
    maturity: f64,
) -> BsResult {
    let sq = sigma * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate - div + 0.5 * sigma * sigma) * maturity) / sq;
    let d2 = d1 - sq;
    let carry = (-div * maturity).exp();
    let disc = (-rate * maturity).exp();
    BsResult {
        price: spot * carry * norm_cdf(d1) - strike * disc * norm_cdf(d2),
        delta: carry * norm_cdf(d1),
    }
}

/// Recombining-tree solution of the option-pricing BSDE.
///
/// `W` moves by `+-sqrt(Delta)` with probability 1/2; the log price is the
/// exact function `X = X_0 + (mu - div - sigma^2/2) t + sigma W` of the
/// walk. At every node the driver is applied to the two-branch conditional
/// expectation, `Z = E[Y dW] / Delta`, and the barrier `(S - K)^+` is
/// enforced after the driver step when `reflected` is set.
///
/// Returns `(price, delta)` with `delta = Z_0 / (sigma S_0)`.
pub fn binomial_bsde(params: &MarketParams, n: usize, reflected: bool) -> (f64, f64) {
    assert!(n >= 1, "binomial tree needs at least one step");
    let MarketParams {
        spot,
        strike,
        rate,
        borrow_rate,
        mu,
        div,
        sigma,
        maturity,
        ..
    } = *params;
    let dt = maturity / n as f64;
    let sqdt = dt.sqrt();
    let x0 = spot.ln();
    let b = mu - div - 0.5 * sigma * sigma;
    let theta = (mu - rate) / sigma;
    let f = |y: f64, z: f64| {
        let short = (z / sigma - y).max(0.0);
        -rate * y - theta * z + (borrow_rate - rate) * short
    };
    let log_price =
        |i: usize, j: usize| x0 + b * i as f64 * dt + sigma * (2.0 * j as f64 - i as f64) * sqdt;
    let payoff = |x: f64| (x.exp() - strike).max(0.0);

    let mut values: Vec<f64> = (0..=n).map(|j| payoff(log_price(n, j))).collect();
    let mut z0 = 0.0;
    for i in (0..n).rev() {
        for j in 0..=i {
            let (down, up) = (values[j], values[j + 1]);
            let ey = 0.5 * (up + down);
            let z = (up - down) / (2.0 * sqdt);
            let mut y = ey + dt * f(ey, z);
            if reflected {
                y = y.max(payoff(log_price(i, j)));
            }
            values[j] = y;
            if i == 0 {
                z0 = z;
            }
        }
    }
    (values[0], z0 / (sigma * spot))
}

/// Four-point Lagrange interpolation of node values at a point inside the grid.
fn interpolate(values: &[f64], grid: &GridPair, y: f64) -> f64 {
    let n = grid.n();
    let s = ((y - grid.x0()) / grid.dx()).clamp(0.0, n as f64);
    let cell = (s.floor() as usize).min(n - 1);
    let first = cell.saturating_sub(1).min(n - 3);
    let t = s - first as f64;
    let mut acc = 0.0;
    for m in 0..4 {
        let mut w = 1.0;
        for q in 0..4 {
            if q != m {
                w *= (t - q as f64) / (m as f64 - q as f64);
            }
        }
        acc += w * values[first + m];
    }
    acc
}

/// Brute-force evaluation of the dampened convolution integral
///
/// ```text
/// theta(x_k) = int_{x_0}^{x_N} eta(y) exp(alpha (y - x_k)) h(y - x_k) m(y - x_k) dy
/// ```
///
/// with `h` the Gaussian increment density described by `psi`, `m = 1` for
/// the expectation and `m(z) = (z - a Delta) / (sigma Delta)` for the
/// gradient. `eta` holds the dampened samples at all `N + 1` nodes and is
/// interpolated between nodes by local cubics; the integral uses the
/// composite trapezoid rule with at least `quad_points` panels, aligned to
/// the nodes.
pub fn dense_quadrature_step(
    eta: &[f64],
    grid: &GridPair,
    psi: &PsiKind,
    quad_points: usize,
) -> Result<Vec<f64>> {
    let n = grid.n();
    if eta.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            found: eta.len(),
        });
    }
    if quad_points < 10 * n {
        return Err(Error::invalid(
            "quad_points",
            format!("need at least {}, got {quad_points}", 10 * n),
        ));
    }
    let per_cell = quad_points.div_ceil(n);
    let panels = per_cell * n;
    let h = grid.dx() / per_cell as f64;
    let ys: Vec<f64> = (0..=panels).map(|q| grid.x0() + q as f64 * h).collect();
    let etas: Vec<f64> = ys.iter().map(|&y| interpolate(eta, grid, y)).collect();

    let mean = psi.drift * psi.step;
    let var = psi.vol * psi.vol * psi.step;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();

    Ok(grid
        .space_nodes()
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for (q, (&y, &e)) in ys.iter().zip(&etas).enumerate() {
                let z = y - x;
                let dens =
                    norm * (-(z - mean) * (z - mean) / (2.0 * var)).exp() * (psi.alpha * z).exp();
                let m = match psi.kind {
                    MomentKind::Expectation => 1.0,
                    MomentKind::Gradient => (z - mean) / (psi.vol * psi.step),
                };
                let w = if q == 0 || q == panels { 0.5 } else { 1.0 };
                acc += w * e * dens * m;
            }
            acc * h
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::ExerciseStyle;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reported_black_scholes_values() {
        for (k, price, delta) in [
            (100.0, 8.4333, 0.5596),
            (110.0, 4.6101, 0.3720),
            (90.0, 14.1929, 0.7507),
        ] {
            let r = black_scholes_call(100.0, k, 0.01, 0.0, 0.2, 1.0);
            assert_abs_diff_eq!(r.price, price, epsilon = 5e-5);
            assert_abs_diff_eq!(r.delta, delta, epsilon = 5e-5);
        }
    }

    #[test]
    fn black_scholes_bounds() {
        for &(s, k, r, q, v, t) in &[
            (100.0, 50.0, 0.05, 0.02, 0.3, 2.0),
            (80.0, 120.0, 0.01, 0.0, 0.1, 0.25),
            (100.0, 100.0, 0.03, 0.035, 0.2, 1.0),
        ] {
            let res = black_scholes_call(s, k, r, q, v, t);
            let lower = (s * (-q * t).exp() - k * (-r * t).exp()).max(0.0);
            assert!(res.price >= lower - 1e-12);
            assert!((0.0..=1.0).contains(&res.delta));
        }
    }

    #[test]
    fn norm_cdf_reference_points() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-10);
        assert_abs_diff_eq!(norm_cdf(-2.5), 0.006_209_665_325_776_132, epsilon = 1e-10);
    }

    #[test]
    fn tree_converges_to_black_scholes() {
        let p = MarketParams {
            style: ExerciseStyle::European,
            ..MarketParams::default()
        };
        let (price, delta) = binomial_bsde(&p, 5000, false);
        assert!((price - 8.4333).abs() <= 0.01, "{price}");
        assert!((delta - 0.5596).abs() <= 1e-3, "{delta}");
    }

    #[test]
    fn dense_quadrature_trivial_inputs() {
        let grid = GridPair::build(0.0, 5.0, 6).unwrap();
        let eta = vec![2.0; grid.n() + 1];
        let e = dense_quadrature_step(
            &eta,
            &grid,
            &PsiKind::brownian(MomentKind::Expectation, 0.0, 0.01),
            10 * grid.n(),
        )
        .unwrap();
        let g = dense_quadrature_step(
            &eta,
            &grid,
            &PsiKind::brownian(MomentKind::Gradient, 0.0, 0.01),
            10 * grid.n(),
        )
        .unwrap();
        let n = grid.n();
        for k in n / 4..3 * n / 4 {
            assert_abs_diff_eq!(e[k], 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(g[k], 0.0, epsilon = 1e-9);
        }
        assert!(dense_quadrature_step(
            &eta,
            &grid,
            &PsiKind::brownian(MomentKind::Expectation, 0.0, 0.01),
            10
        )
        .is_err());
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let grid = GridPair::build(0.0, 1.0, 4).unwrap();
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let vals: Vec<f64> = grid.space_nodes().iter().map(|&x| p(x)).collect();
        for &y in &[-1.0, -0.97, -0.3, 0.01, 0.5, 0.99, 1.0] {
            assert_abs_diff_eq!(interpolate(&vals, &grid, y), p(y), epsilon = 1e-12);
        }
    }
}
