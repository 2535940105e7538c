//! Boundary periodization.
//!
//! A DFT treats its input as one period of a periodic function, so a sample
//! vector whose endpoint values or slopes disagree picks up a jump at the
//! wrap. The modified dampened function
//!
//! ```text
//! eta_{beta,kappa}^alpha(x) = exp(-alpha x) (eta(x) + beta x + kappa)
//! ```
//!
//! matches both the values and the first derivatives at `x_0` and `x_N` for
//! the coefficients chosen in [`fit_coefficients`]. The linear term is
//! removed again after the convolution by subtracting [`adjustment_h`].

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::spectral::MomentKind;

/// Default minimal slope margin.
pub const DEFAULT_EPSILON: f64 = 5.0;

/// Slope estimates closer than this are treated as equal.
pub const SLOPE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub epsilon: f64,
}

impl TransformCoefficients {
    /// The identity transform.
    pub fn identity(epsilon: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            kappa: 0.0,
            epsilon,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.alpha.is_finite() && self.beta.is_finite() && self.kappa.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("transform coefficients"))
        }
    }
}

/// One-sided slope estimates `(eta'(x_0), eta'(x_N))`.
pub fn boundary_slopes(samples: &[f64], grid: &GridPair) -> (f64, f64) {
    let n = grid.n();
    let dx = grid.dx();
    (
        (samples[1] - samples[0]) / dx,
        (samples[n] - samples[n - 1]) / dx,
    )
}

/// Fits `(alpha, beta, kappa)` to samples at all `N + 1` space nodes.
pub fn fit_coefficients(
    samples: &[f64],
    grid: &GridPair,
    epsilon: f64,
) -> Result<TransformCoefficients> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    let n = grid.n();
    if samples.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            found: samples.len(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transform samples"));
    }

    let a = grid.x0();
    let b = grid.x_end();
    let (eta_a, eta_b) = (samples[0], samples[n]);
    let (slope_a, slope_b) = boundary_slopes(samples, grid);

    if (slope_a - slope_b).abs() <= SLOPE_TIE_TOLERANCE {
        return Ok(TransformCoefficients {
            alpha: 0.0,
            beta: -(eta_b - eta_a) / (b - a),
            kappa: 0.0,
            epsilon,
        });
    }

    let beta = epsilon + slope_a.abs().max(slope_b.abs());
    let alpha = ((slope_b + beta) / (slope_a + beta)).ln() / (b - a);
    let damp_a = (-alpha * a).exp();
    let damp_b = (-alpha * b).exp();
    let kappa = (damp_b * (eta_b + beta * b) - damp_a * (eta_a + beta * a)) / (damp_a - damp_b);

    let coeffs = TransformCoefficients {
        alpha,
        beta,
        kappa,
        epsilon,
    };
    coeffs.check_finite()?;
    Ok(coeffs)
}

/// Evaluates the modified dampened function at the grid nodes.
///
/// Accepts either the `N` DFT nodes or all `N + 1` nodes and returns a vector
/// of the same length.
pub fn apply_transform(
    samples: &[f64],
    grid: &GridPair,
    coeffs: &TransformCoefficients,
) -> Result<Vec<f64>> {
    let n = grid.n();
    if samples.len() != n && samples.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n,
            found: samples.len(),
        });
    }
    coeffs.check_finite()?;
    let TransformCoefficients {
        alpha, beta, kappa, ..
    } = *coeffs;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(k, &eta)| {
            let x = grid.x(k);
            (-alpha * x).exp() * (eta + beta * x + kappa)
        })
        .collect())
}

/// The correction subtracted from the convolution of the modified function.
///
/// `forward_drift` is `a(t_i, x) * Delta_i` and `forward_vol` is
/// `sigma(t_i, x)`; the pure Brownian case uses `0` and `1`.
pub fn adjustment_h(
    x: f64,
    coeffs: &TransformCoefficients,
    kind: MomentKind,
    forward_drift: f64,
    forward_vol: f64,
) -> f64 {
    let damp = (-coeffs.alpha * x).exp();
    match kind {
        MomentKind::Expectation => damp * (coeffs.beta * (x + forward_drift) + coeffs.kappa),
        MomentKind::Gradient => damp * coeffs.beta * forward_vol,
    }
}

/// Endpoint mismatch of the modified dampened function: the value gap and
/// the derivative gap, with `eta'` replaced by the same one-sided slopes the
/// fit uses.
pub fn periodization_residuals(
    samples: &[f64],
    grid: &GridPair,
    coeffs: &TransformCoefficients,
) -> (f64, f64) {
    let n = grid.n();
    let TransformCoefficients {
        alpha, beta, kappa, ..
    } = *coeffs;
    let (slope_a, slope_b) = boundary_slopes(samples, grid);
    let a = grid.x0();
    let b = grid.x_end();
    let value = |x: f64, eta: f64| (-alpha * x).exp() * (eta + beta * x + kappa);
    let slope = |x: f64, eta: f64, d: f64| -alpha * value(x, eta) + (-alpha * x).exp() * (d + beta);
    let value_gap = value(a, samples[0]) - value(b, samples[n]);
    let slope_gap = slope(a, samples[0], slope_a) - slope(b, samples[n], slope_b);
    (value_gap, slope_gap)
}
