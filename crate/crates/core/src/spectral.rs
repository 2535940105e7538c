//! DFT-based evaluation of dampened conditional expectations.
//!
//! For a dampened sample vector `eta` on the space grid and a multiplier
//! `psi` on the frequency grid, the value
//!
//! ```text
//! theta(x) = 1/(2 pi) * int exp(i nu x) F[eta](nu) psi(nu) dnu
//! ```
//!
//! is approximated at the nodes by
//!
//! ```text
//! theta(x_k) = (-1)^k D^{-1}[ psi(nu_j) D[(-1)^i w_i eta_i]_j ]_k
//! ```
//!
//! where `D` is the DFT scaled by `1/N` on the forward side. The `2 pi / dnu`
//! and `dnu / 2 pi` factors of the two quadratures cancel exactly, so they
//! never appear in the code.

use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::GridPair;

/// Largest tolerated `max|Im| / max|Re|` after the inverse transform.
pub const IMAG_RESIDUAL_LIMIT: f64 = 1e-8;

/// Which conditional moment a convolution evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MomentKind {
    /// `E[eta(X_{i+1}) | X_i = x]`
    Expectation,
    /// `E[eta(X_{i+1}) dW_i | X_i = x] / Delta_i`, i.e. `sigma * d/dx` of the expectation.
    Gradient,
}

/// Frequency multiplier for one convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiKind {
    pub kind: MomentKind,
    pub alpha: f64,
    pub step: f64,
    pub drift: f64,
    pub vol: f64,
}

impl PsiKind {
    pub fn new(kind: MomentKind, alpha: f64, step: f64, drift: f64, vol: f64) -> Self {
        Self {
            kind,
            alpha,
            step,
            drift,
            vol,
        }
    }

    /// Standard Brownian increments over `step`.
    pub fn brownian(kind: MomentKind, alpha: f64, step: f64) -> Self {
        Self::new(kind, alpha, step, 0.0, 1.0)
    }

    pub fn eval(&self, nu: f64) -> Complex64 {
        let shifted = Complex64::new(nu, -self.alpha);
        let phi = increment_cf(shifted, self.step, self.drift, self.vol);
        match self.kind {
            MomentKind::Expectation => phi,
            MomentKind::Gradient => Complex64::new(self.alpha, nu) * phi * self.vol,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(
                "step",
                format!("must be positive, got {}", self.step),
            ));
        }
        if !(self.vol > 0.0 && self.vol.is_finite()) {
            return Err(Error::invalid(
                "vol",
                format!("must be positive, got {}", self.vol),
            ));
        }
        if !(self.alpha.is_finite() && self.drift.is_finite()) {
            return Err(Error::NonFinite("psi parameters"));
        }
        Ok(())
    }
}

/// Characteristic function of a Gaussian increment with mean `drift * step`
/// and variance `vol^2 * step`, evaluated at a complex argument.
pub fn increment_cf(nu: Complex64, step: f64, drift: f64, vol: f64) -> Complex64 {
    let i = Complex64::i();
    (step * (i * drift * nu - 0.5 * vol * vol * nu * nu)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    Trapezoid,
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" | "trapezoidal" => Ok(QuadratureRule::Trapezoid),
            other => Err(Error::invalid(
                "rule",
                format!("unsupported quadrature rule `{other}`"),
            )),
        }
    }
}

/// Quadrature weights for the `N` DFT nodes, with `w_N` folded onto `w_0`.
pub fn quadrature_weights(n: usize, rule: QuadratureRule) -> Result<Vec<f64>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(
            "n",
            format!("must be even and positive, got {n}"),
        ));
    }
    match rule {
        QuadratureRule::Trapezoid => {
            let mut raw = vec![1.0; n + 1];
            raw[0] = 0.5;
            raw[n] = 0.5;
            let mut folded = raw[..n].to_vec();
            folded[0] += raw[n];
            Ok(folded)
        }
    }
}

/// Length-`N` DFT with the `1/N` scale on the forward transform.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `x_hat_k = 1/N sum_j exp(-i j k 2 pi / N) x_j`, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
        let scale = 1.0 / self.n as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// `x_k = sum_j exp(i j k 2 pi / N) x_hat_j`, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
    }
}

fn alternate(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Result of one convolution: `N + 1` node values (the last one is the
/// periodic copy of the first) and the relative imaginary residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Convolution {
    pub values: Vec<f64>,
    pub imag_residual: f64,
}

/// Reusable convolution engine bound to one grid.
#[derive(Debug, Clone)]
pub struct Convolver {
    grid: GridPair,
    dft: Dft,
    weights: Vec<f64>,
}

impl Convolver {
    pub fn new(grid: GridPair) -> Self {
        let weights =
            quadrature_weights(grid.n(), QuadratureRule::Trapezoid).expect("grid size is even");
        Self::with_weights(grid, weights).expect("weights match grid")
    }

    pub fn with_weights(grid: GridPair, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                found: weights.len(),
            });
        }
        Ok(Self {
            dft: Dft::new(grid.n()),
            grid,
            weights,
        })
    }

    pub fn grid(&self) -> &GridPair {
        &self.grid
    }

    /// `D[(-1)^i w_i eta_i]`. Accepts `N` or `N + 1` samples; `eta_N` is dropped.
    pub fn spectrum(&self, eta: &[f64]) -> Result<Vec<Complex64>> {
        let n = self.grid.n();
        if eta.len() != n && eta.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n,
                found: eta.len(),
            });
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("convolution input"));
        }
        let mut data: Vec<Complex64> = eta[..n]
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (&e, &w))| Complex64::new(alternate(i) * w * e, 0.0))
            .collect();
        self.dft.forward(&mut data);
        Ok(data)
    }

    /// Applies a spatially constant multiplier to a precomputed spectrum.
    pub fn apply(&self, spectrum: &[Complex64], psi: &PsiKind, scale: f64) -> Result<Convolution> {
        psi.validate()?;
        let mut data: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(j, &d)| psi.eval(self.grid.nu(j)) * d)
            .collect();
        self.dft.inverse(&mut data);
        let raw: Vec<Complex64> = data
            .into_iter()
            .enumerate()
            .map(|(k, v)| v * alternate(k))
            .collect();
        finish(raw, scale)
    }

    /// Applies one multiplier per output node. Each row is an `O(N)` sum,
    /// evaluated independently so the result does not depend on scheduling.
    pub fn apply_per_node(
        &self,
        spectrum: &[Complex64],
        psis: &[PsiKind],
        scale: f64,
    ) -> Result<Convolution> {
        let n = self.grid.n();
        if psis.len() != n && psis.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n,
                found: psis.len(),
            });
        }
        for p in psis {
            p.validate()?;
        }
        let twiddle: Vec<Complex64> = (0..n)
            .map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64))
            .collect();
        let nus = self.grid.frequency_nodes();
        let raw: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|k| {
                let psi = &psis[k];
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    acc += twiddle[(j * k) % n] * psi.eval(nus[j]) * spectrum[j];
                }
                acc * alternate(k)
            })
            .collect();
        finish(raw, scale)
    }

    /// Fast path: one multiplier for every node.
    pub fn convolve(&self, eta: &[f64], psi: &PsiKind) -> Result<Convolution> {
        let spec = self.spectrum(eta)?;
        self.apply(&spec, psi, max_abs(&eta[..self.grid.n()]))
    }

    /// State-dependent path.
    pub fn convolve_per_node(&self, eta: &[f64], psis: &[PsiKind]) -> Result<Convolution> {
        let spec = self.spectrum(eta)?;
        self.apply_per_node(&spec, psis, max_abs(&eta[..self.grid.n()]))
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn finish(raw: Vec<Complex64>, input_scale: f64) -> Result<Convolution> {
    let max_re = raw.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
    let max_im = raw.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    let scale = max_re.max(input_scale);
    let imag_residual = if scale > 0.0 { max_im / scale } else { 0.0 };
    if !imag_residual.is_finite() || raw.iter().any(|v| !v.re.is_finite()) {
        return Err(Error::NonFinite("convolution output"));
    }
    if imag_residual > IMAG_RESIDUAL_LIMIT {
        return Err(Error::ImaginaryResidual {
            residual: imag_residual,
            limit: IMAG_RESIDUAL_LIMIT,
        });
    }
    let mut values: Vec<f64> = raw.iter().map(|v| v.re).collect();
    values.push(values[0]);
    Ok(Convolution {
        values,
        imag_residual,
    })
}

/// One-shot fast-path convolution with explicit weights.
pub fn convolve_step(
    eta: &[f64],
    grid: &GridPair,
    psi: &PsiKind,
    weights: &[f64],
) -> Result<Vec<f64>> {
    if !grid.n().is_multiple_of(2) {
        return Err(Error::invalid("n", "must be even"));
    }
    let conv = Convolver::with_weights(*grid, weights.to_vec())?;
    Ok(conv.convolve(eta, psi)?.values)
}

/// One-shot state-dependent convolution with trapezoid weights.
pub fn convolve_step_statedep(
    eta: &[f64],
    grid: &GridPair,
    psi_per_node: &[PsiKind],
) -> Result<Vec<f64>> {
    Ok(Convolver::new(*grid)
        .convolve_per_node(eta, psi_per_node)?
        .values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn trapezoid_weights_fold_to_ones() {
        assert_eq!(
            quadrature_weights(8, QuadratureRule::Trapezoid).unwrap(),
            vec![1.0; 8]
        );
        assert_eq!(
            quadrature_weights(4, QuadratureRule::Trapezoid).unwrap(),
            vec![1.0; 4]
        );
        assert!(quadrature_weights(5, QuadratureRule::Trapezoid).is_err());
        assert!("simpson".parse::<QuadratureRule>().is_err());
        assert_eq!(
            "trapezoid".parse::<QuadratureRule>().unwrap(),
            QuadratureRule::Trapezoid
        );
    }

    #[test]
    fn characteristic_function_values() {
        let one = increment_cf(Complex64::new(0.0, 0.0), 0.3, 0.4, 0.5);
        assert_relative_eq!(one.re, 1.0);
        assert_relative_eq!(one.im, 0.0);
        let v = increment_cf(Complex64::new(1.0, 0.0), 2.0, 0.0, 1.0);
        assert_relative_eq!(v.re, 0.367_879_441_171_442_3, epsilon = 1e-15);
        let v = increment_cf(Complex64::new(0.0, -1.0), 2.0, 0.0, 1.0);
        assert_relative_eq!(v.re, std::f64::consts::E, epsilon = 1e-14);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_psi_has_conjugate_symmetry() {
        let p = PsiKind::new(MomentKind::Gradient, 0.3, 0.01, 0.2, 0.4);
        let a = p.eval(3.7);
        let b = p.eval(-3.7);
        assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
        assert_relative_eq!(a.im, -b.im, epsilon = 1e-15);
    }

    #[test]
    fn dft_matches_definition() {
        let n = 8;
        let dft = Dft::new(n);
        let x: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new(j as f64 * 0.5 - 1.0, (j * j) as f64 * 0.1))
            .collect();
        let mut y = x.clone();
        dft.forward(&mut y);
        for (k, yk) in y.iter().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (j, xj) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                s += Complex64::from_polar(1.0, ang) * xj;
            }
            s /= n as f64;
            assert_relative_eq!(yk.re, s.re, epsilon = 1e-13);
            assert_relative_eq!(yk.im, s.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn constant_input() {
        let grid = GridPair::build(0.0, 5.0, 8).unwrap();
        let conv = Convolver::new(grid);
        let eta = vec![3.25; grid.n()];
        let e = conv
            .convolve(&eta, &PsiKind::brownian(MomentKind::Expectation, 0.0, 0.01))
            .unwrap();
        assert_eq!(e.values.len(), grid.n() + 1);
        for v in &e.values {
            assert_relative_eq!(*v, 3.25, epsilon = 1e-12);
        }
        let g = conv
            .convolve(&eta, &PsiKind::brownian(MomentKind::Gradient, 0.0, 0.01))
            .unwrap();
        for v in &g.values {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_with_state_dependent_drift() {
        let grid = GridPair::build(0.0, 5.0, 6).unwrap();
        let eta = vec![-1.5; grid.n()];
        let psis: Vec<PsiKind> = grid
            .space_nodes()
            .iter()
            .take(grid.n())
            .map(|&x| {
                PsiKind::new(
                    MomentKind::Expectation,
                    0.0,
                    0.02,
                    x.sin(),
                    1.0 + 0.1 * x * x,
                )
            })
            .collect();
        for v in convolve_step_statedep(&eta, &grid, &psis).unwrap() {
            assert_relative_eq!(v, -1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_node_copies_first() {
        let grid = GridPair::build(0.0, 5.0, 7).unwrap();
        let eta: Vec<f64> = grid.space_nodes().iter().map(|x| (-x * x).exp()).collect();
        let w = quadrature_weights(grid.n(), QuadratureRule::Trapezoid).unwrap();
        let out = convolve_step(
            &eta,
            &grid,
            &PsiKind::brownian(MomentKind::Expectation, 0.0, 0.05),
            &w,
        )
        .unwrap();
        assert_eq!(out[grid.n()], out[0]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let grid = GridPair::build(0.0, 5.0, 4).unwrap();
        let w = vec![1.0; grid.n()];
        let psi = PsiKind::brownian(MomentKind::Expectation, 0.0, 0.1);
        assert!(matches!(
            convolve_step(&[1.0; 3], &grid, &psi, &w),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            convolve_step(&[1.0; 16], &grid, &psi, &w[..3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(convolve_step_statedep(&[1.0; 16], &grid, &[psi; 5]).is_err());
    }

    #[test]
    fn gradient_matches_derivative_of_expectation() {
        let grid = GridPair::build(0.0, 5.0, 10).unwrap();
        let conv = Convolver::new(grid);
        let eta: Vec<f64> = grid
            .space_nodes()
            .iter()
            .map(|x| (-0.5 * x * x).exp() * (1.0 + 0.3 * x))
            .collect();
        let (step, drift, vol) = (0.001, 0.3, 0.7);
        let e = conv
            .convolve(
                &eta,
                &PsiKind::new(MomentKind::Expectation, 0.0, step, drift, vol),
            )
            .unwrap()
            .values;
        let g = conv
            .convolve(
                &eta,
                &PsiKind::new(MomentKind::Gradient, 0.0, step, drift, vol),
            )
            .unwrap()
            .values;
        let n = grid.n();
        for k in n / 4..3 * n / 4 {
            let fd = vol * (e[k + 1] - e[k - 1]) / (2.0 * grid.dx());
            assert!(
                (g[k] - fd).abs() <= 1e-2 * g[k].abs().max(1e-3),
                "node {k}: {} vs {}",
                g[k],
                fd
            );
        }
    }

    proptest! {
        #[test]
        fn dft_round_trip(log2n in 1u32..=16, seed in 0u64..1000) {
            let n = 1usize << log2n;
            let dft = Dft::new(n);
            let x: Vec<Complex64> = (0..n)
                .map(|j| {
                    let t = (j as f64 + 1.0) * (seed as f64 + 0.37);
                    Complex64::new(t.sin() * 3.0, (1.7 * t).cos())
                })
                .collect();
            let mut y = x.clone();
            dft.forward(&mut y);
            dft.inverse(&mut y);
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn convolution_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, shift in -1.0f64..1.0) {
            let grid = GridPair::build(0.0, 4.0, 7).unwrap();
            let conv = Convolver::new(grid);
            let e1: Vec<f64> = grid.space_nodes().iter().map(|x| (-(x - shift).powi(2)).exp()).collect();
            let e2: Vec<f64> = grid.space_nodes().iter().map(|x| (0.5 * x).cos() / (1.0 + x * x)).collect();
            let mix: Vec<f64> = e1.iter().zip(&e2).map(|(p, q)| a * p + b * q).collect();
            for kind in [MomentKind::Expectation, MomentKind::Gradient] {
                let psi = PsiKind::new(kind, 0.1, 0.02, 0.3, 0.8);
                let y1 = conv.convolve(&e1, &psi).unwrap().values;
                let y2 = conv.convolve(&e2, &psi).unwrap().values;
                let ym = conv.convolve(&mix, &psi).unwrap().values;
                let scale = ym.iter().fold(1e-12f64, |m, v| m.max(v.abs()))
                    .max(y1.iter().fold(0.0f64, |m, v| m.max(v.abs())) * a.abs())
                    .max(y2.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.abs());
                for k in 0..ym.len() {
                    prop_assert!((ym[k] - a * y1[k] - b * y2[k]).abs() <= 1e-10 * scale);
                }
            }
        }
    }
}
