//! Problem data for BSDEs, decoupled FBSDEs and reflected FBSDEs.
//!
//! The forward state follows `dX = a(t,X) dt + sigma(t,X) dW`; the backward
//! pair solves `-dY = f(t,X,Y,Z) dt (+ dA) - Z dW` with `Y_T = g(X_T)` and,
//! when a barrier is given, `Y >= B(t, X)`.
//!
//! Lipschitz continuity of `f` and `g` is a caller obligation; it cannot be
//! checked from samples.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::DEFAULT_HALF_WIDTH;

pub type CoefFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Largest accepted number of time steps.
pub const MAX_STEPS: usize = 10_000_000;

/// Explicit Euler time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Driver evaluated inside the conditional expectation.
    ExplicitI,
    /// Driver evaluated at the conditional expectation.
    ExplicitII,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitI => "explicit1",
            Scheme::ExplicitII => "explicit2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "explicit1" | "explicit_i" | "i" | "1" => Ok(Scheme::ExplicitI),
            "explicit2" | "explicit_ii" | "ii" | "2" => Ok(Scheme::ExplicitII),
            other => Err(Error::invalid(
                "scheme",
                format!("unknown scheme `{other}`"),
            )),
        }
    }
}

/// Wraps a closure as a coefficient function `(t, x) -> value`.
pub fn coef(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> CoefFn {
    Arc::new(f)
}

/// Wraps a closure as a driver `(t, x, y, z) -> f`.
pub fn driver(f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> DriverFn {
    Arc::new(f)
}

/// Wraps a closure as a terminal function `x -> g(x)`.
pub fn terminal(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> TerminalFn {
    Arc::new(f)
}

/// Inputs of [`ProblemSpec::fbsde`].
#[derive(Clone)]
pub struct FbsdeParts {
    pub horizon: f64,
    pub steps: usize,
    pub x_init: f64,
    pub drift: CoefFn,
    pub vol: CoefFn,
    pub terminal: TerminalFn,
    pub driver: DriverFn,
    pub barrier: Option<CoefFn>,
    pub scheme: Scheme,
    /// Set only when `drift` and `vol` are known not to depend on `x`.
    pub coefficients_constant: bool,
}

#[derive(Clone)]
pub struct ProblemSpec {
    horizon: f64,
    steps: usize,
    x_init: f64,
    drift: CoefFn,
    vol: CoefFn,
    driver: DriverFn,
    terminal: TerminalFn,
    barrier: Option<CoefFn>,
    scheme: Scheme,
    coefficients_constant: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .field("x_init", &self.x_init)
            .field("scheme", &self.scheme)
            .field("reflected", &self.barrier.is_some())
            .field("coefficients_constant", &self.coefficients_constant)
            .finish()
    }
}

fn check_mesh(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    if steps == 0 || steps > MAX_STEPS {
        return Err(Error::invalid(
            "steps",
            format!("must lie in 1..={MAX_STEPS}, got {steps}"),
        ));
    }
    Ok(())
}

impl ProblemSpec {
    /// BSDE driven directly by a standard Brownian motion started at 0.
    pub fn brownian_bsde(
        horizon: f64,
        steps: usize,
        terminal: TerminalFn,
        driver: DriverFn,
        scheme: Scheme,
    ) -> Result<Self> {
        check_mesh(horizon, steps)?;
        Ok(Self {
            horizon,
            steps,
            x_init: 0.0,
            drift: coef(|_, _| 0.0),
            vol: coef(|_, _| 1.0),
            driver,
            terminal,
            barrier: None,
            scheme,
            coefficients_constant: true,
        })
    }

    /// Decoupled FBSDE, reflected when `barrier` is present.
    pub fn fbsde(parts: FbsdeParts) -> Result<Self> {
        check_mesh(parts.horizon, parts.steps)?;
        if !parts.x_init.is_finite() {
            return Err(Error::invalid("x_init", "must be finite"));
        }
        for x in [
            parts.x_init - DEFAULT_HALF_WIDTH,
            parts.x_init,
            parts.x_init + DEFAULT_HALF_WIDTH,
        ] {
            let s = (parts.vol)(0.0, x);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(
                    "vol",
                    format!("must be positive, got {s} at x = {x}"),
                ));
            }
        }
        Ok(Self {
            horizon: parts.horizon,
            steps: parts.steps,
            x_init: parts.x_init,
            drift: parts.drift,
            vol: parts.vol,
            driver: parts.driver,
            terminal: parts.terminal,
            barrier: parts.barrier,
            scheme: parts.scheme,
            coefficients_constant: parts.coefficients_constant,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Result<Self> {
        check_mesh(self.horizon, steps)?;
        self.steps = steps;
        Ok(self)
    }

    /// Replaces the barrier; `None` turns a reflected problem into a plain one.
    pub fn with_barrier(mut self, barrier: Option<CoefFn>) -> Self {
        self.barrier = barrier;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn x_init(&self) -> f64 {
        self.x_init
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn coefficients_constant(&self) -> bool {
        self.coefficients_constant
    }

    pub fn is_reflected(&self) -> bool {
        self.barrier.is_some()
    }

    /// Uniform step `Delta = T / n`.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step_size()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    pub fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    pub fn vol(&self, t: f64, x: f64) -> f64 {
        (self.vol)(t, x)
    }

    pub fn driver(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.driver)(t, x, y, z)
    }

    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    pub fn barrier(&self, t: f64, x: f64) -> Option<f64> {
        self.barrier.as_ref().map(|b| b(t, x))
    }
}
