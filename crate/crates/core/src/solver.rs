//! Backward recursions of the convolution method.
//!
//! Each time step evaluates the conditional moments of the previous
//! solution by: fitting periodization coefficients, forming the modified
//! dampened samples, convolving in frequency space, subtracting the linear
//! adjustment and undoing the dampening. The Euler driver step and the
//! optional reflection are then applied node by node.
//!
//! The gradient output `udot` estimates `sigma(t,x) * du/dx`, which is the
//! BSDE's `Z`. Drivers receive it unchanged.

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::model::{ProblemSpec, Scheme};
use crate::spectral::{max_abs, Convolver, MomentKind, PsiKind};
use crate::transform::{
    adjustment_h, apply_transform, fit_coefficients, TransformCoefficients, DEFAULT_EPSILON,
};

/// Per-step record of the numerics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step_index: usize,
    /// Fit used for the expectation pass.
    pub coeffs: TransformCoefficients,
    /// Fit used for the gradient pass; equal to `coeffs` for scheme II.
    pub gradient_coeffs: TransformCoefficients,
    pub imag_residual: f64,
    pub reflection_active_nodes: usize,
}

/// Which time rows a solve keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    /// Every row `0..=n`.
    #[default]
    Full,
    /// Only the rows at `t_0` and `t_n`.
    Endpoints,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub epsilon: f64,
    pub storage: Storage,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            storage: Storage::Full,
        }
    }
}

/// Node values at one time step, over all `N + 1` space nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRow {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub reflection: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolutionSurface {
    grid: GridPair,
    times: Vec<f64>,
    rows: Vec<Option<SurfaceRow>>,
    reflected: bool,
    diagnostics: Vec<StepDiagnostics>,
}

impl SolutionSurface {
    pub fn grid(&self) -> &GridPair {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of time steps `n`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    pub fn row(&self, i: usize) -> Option<&SurfaceRow> {
        self.rows.get(i).and_then(Option::as_ref)
    }

    pub fn u(&self, i: usize) -> Option<&[f64]> {
        self.row(i).map(|r| r.u.as_slice())
    }

    pub fn udot(&self, i: usize) -> Option<&[f64]> {
        self.row(i).map(|r| r.udot.as_slice())
    }

    /// Reflection increments `Delta A_i`; `None` for non-reflected problems
    /// or dropped rows.
    pub fn reflection(&self, i: usize) -> Option<&[f64]> {
        self.row(i).and_then(|r| r.reflection.as_deref())
    }

    /// True when every row is stored.
    pub fn is_full(&self) -> bool {
        self.rows.iter().all(Option::is_some)
    }

    /// Diagnostics ordered by step index `0..n`.
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }
}

/// Values at the centre node at `t = 0`: `(y0, z0)`.
pub fn value_at_start(surface: &SolutionSurface) -> (f64, f64) {
    let c = surface.grid().center_index();
    let row = surface.row(0).expect("row 0 is always stored");
    (row.u[c], row.udot[c])
}

/// Solves with default options and full storage.
pub fn solve(spec: &ProblemSpec, grid: &GridPair) -> Result<SolutionSurface> {
    Solver::new(*grid).solve(spec)
}

/// Convolution solver bound to one grid. The FFT plans are reused across
/// solves.
#[derive(Debug, Clone)]
pub struct Solver {
    convolver: Convolver,
    options: SolveOptions,
}

struct Moments {
    coeffs: TransformCoefficients,
    values: Vec<Vec<f64>>,
    imag_residual: f64,
}

impl Solver {
    pub fn new(grid: GridPair) -> Self {
        Self {
            convolver: Convolver::new(grid),
            options: SolveOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SolveOptions) -> Self {
        self.options = options;
        self
    }

    pub fn grid(&self) -> &GridPair {
        self.convolver.grid()
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    pub fn solve(&self, spec: &ProblemSpec) -> Result<SolutionSurface> {
        let grid = *self.grid();
        let tol = 1e-12 * (1.0 + spec.x_init().abs());
        if (grid.center() - spec.x_init()).abs() > tol {
            return Err(Error::invalid(
                "grid",
                format!(
                    "centre {} differs from x_init {}",
                    grid.center(),
                    spec.x_init()
                ),
            ));
        }
        if self.options.epsilon.is_nan() || self.options.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon", "must be positive"));
        }

        let n = spec.steps();
        let nodes = grid.space_nodes();
        let width = nodes.len();
        let times = spec.times();
        let reflected = spec.is_reflected();

        let terminal: Vec<f64> = nodes.iter().map(|&x| spec.terminal(x)).collect();
        if terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::at_step(n, Error::NonFinite("terminal values")));
        }
        if reflected {
            let t = spec.horizon();
            for (&x, &g) in nodes.iter().zip(&terminal) {
                let b = spec.barrier(t, x).unwrap_or(f64::NEG_INFINITY);
                if g < b {
                    return Err(Error::invalid(
                        "barrier",
                        format!("terminal value {g} lies below the barrier {b} at x = {x}"),
                    ));
                }
            }
        }

        let mut rows: Vec<Option<SurfaceRow>> = vec![None; n + 1];
        let mut diagnostics = Vec::with_capacity(n);
        let mut current = SurfaceRow {
            u: terminal,
            udot: vec![0.0; width],
            reflection: reflected.then(|| vec![0.0; width]),
        };

        for i in (0..n).rev() {
            let (row, diag) = self
                .step(spec, i, &nodes, &current.u)
                .map_err(|e| Error::at_step(i, e))?;
            let previous = std::mem::replace(&mut current, row);
            if self.options.storage == Storage::Full || i + 1 == n {
                rows[i + 1] = Some(previous);
            }
            diagnostics.push(diag);
        }
        if n == 0 || self.options.storage == Storage::Full || rows[0].is_none() {
            rows[0] = Some(current);
        }
        diagnostics.reverse();

        Ok(SolutionSurface {
            grid,
            times,
            rows,
            reflected,
            diagnostics,
        })
    }

    /// Conditional moments of `eta` (given at all `N + 1` nodes) from time `t`
    /// over one step, for each requested kind.
    fn moments(
        &self,
        spec: &ProblemSpec,
        t: f64,
        nodes: &[f64],
        eta: &[f64],
        kinds: &[MomentKind],
    ) -> Result<Moments> {
        let grid = self.grid();
        let step = spec.step_size();
        let coeffs = fit_coefficients(eta, grid, self.options.epsilon)?;
        let transformed = apply_transform(eta, grid, &coeffs)?;
        let spectrum = self.convolver.spectrum(&transformed)?;
        let scale = max_abs(&transformed[..grid.n()]);

        let (drift, vol): (Vec<f64>, Vec<f64>) = if spec.coefficients_constant() {
            let x = grid.center();
            let (a, s) = (spec.drift(t, x), spec.vol(t, x));
            (vec![a; nodes.len()], vec![s; nodes.len()])
        } else {
            nodes
                .iter()
                .map(|&x| (spec.drift(t, x), spec.vol(t, x)))
                .unzip()
        };
        if let Some(s) = vol.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("vol", format!("must be positive, got {s}")));
        }

        let mut imag_residual = 0.0f64;
        let mut values = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let conv = if spec.coefficients_constant() {
                let psi = PsiKind::new(kind, coeffs.alpha, step, drift[0], vol[0]);
                self.convolver.apply(&spectrum, &psi, scale)?
            } else {
                let psis: Vec<PsiKind> = drift
                    .iter()
                    .zip(&vol)
                    .take(grid.n())
                    .map(|(&a, &s)| PsiKind::new(kind, coeffs.alpha, step, a, s))
                    .collect();
                self.convolver.apply_per_node(&spectrum, &psis, scale)?
            };
            imag_residual = imag_residual.max(conv.imag_residual);
            let recovered: Vec<f64> = conv
                .values
                .iter()
                .enumerate()
                .map(|(k, &theta)| {
                    let x = nodes[k];
                    let h = adjustment_h(x, &coeffs, kind, drift[k] * step, vol[k]);
                    (coeffs.alpha * x).exp() * (theta - h)
                })
                .collect();
            values.push(recovered);
        }
        Ok(Moments {
            coeffs,
            values,
            imag_residual,
        })
    }

    fn step(
        &self,
        spec: &ProblemSpec,
        i: usize,
        nodes: &[f64],
        next: &[f64],
    ) -> Result<(SurfaceRow, StepDiagnostics)> {
        let t = spec.time(i);
        let dt = spec.step_size();
        let width = nodes.len();

        let (pre, udot, coeffs, gradient_coeffs, imag_residual) = match spec.scheme() {
            Scheme::ExplicitII => {
                let mut m = self.moments(
                    spec,
                    t,
                    nodes,
                    next,
                    &[MomentKind::Expectation, MomentKind::Gradient],
                )?;
                let udot = m.values.pop().expect("gradient pass");
                let cond = m.values.pop().expect("expectation pass");
                let pre: Vec<f64> = (0..width)
                    .map(|k| cond[k] + dt * spec.driver(t, nodes[k], cond[k], udot[k]))
                    .collect();
                (pre, udot, m.coeffs, m.coeffs, m.imag_residual)
            }
            Scheme::ExplicitI => {
                let mut g = self.moments(spec, t, nodes, next, &[MomentKind::Gradient])?;
                let udot = g.values.pop().expect("gradient pass");
                let shifted: Vec<f64> = (0..width)
                    .map(|k| next[k] + dt * spec.driver(t, nodes[k], next[k], udot[k]))
                    .collect();
                if shifted.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("driver values"));
                }
                let mut e = self.moments(spec, t, nodes, &shifted, &[MomentKind::Expectation])?;
                let pre = e.values.pop().expect("expectation pass");
                (
                    pre,
                    udot,
                    e.coeffs,
                    g.coeffs,
                    e.imag_residual.max(g.imag_residual),
                )
            }
        };

        let (u, reflection, active) = if spec.is_reflected() {
            let mut u = Vec::with_capacity(width);
            let mut da = Vec::with_capacity(width);
            let mut active = 0;
            for k in 0..width {
                let b = spec
                    .barrier(t, nodes[k])
                    .expect("reflected problem has a barrier");
                let gap = pre[k] - b;
                let inc = (-gap).max(0.0);
                if inc > 0.0 {
                    active += 1;
                    u.push(b);
                } else {
                    u.push(pre[k]);
                }
                da.push(inc);
            }
            (u, Some(da), active)
        } else {
            (pre, None, 0)
        };

        if u.iter().chain(&udot).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution values"));
        }

        Ok((
            SurfaceRow {
                u,
                udot,
                reflection,
            },
            StepDiagnostics {
                step_index: i,
                coeffs,
                gradient_coeffs,
                imag_residual,
                reflection_active_nodes: active,
            },
        ))
    }
}
