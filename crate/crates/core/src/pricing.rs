//! Calls under differential borrowing and lending rates.
//!
//! The log price `X = ln S` has drift `mu - div - sigma^2/2` and volatility
//! `sigma`. The replicating portfolio invests `Y - Z/sigma` in the bank at
//! rate `r` and borrows any shortfall at `R >= r`, which gives the driver
//!
//! ```text
//! f(y, z) = -r y - (mu - r)/sigma z + (R - r) (y - z/sigma)^-
//! ```
//!
//! Here `z` is the gradient moment `sigma u_x` produced by the solver.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::model::{coef, driver, terminal, FbsdeParts, ProblemSpec, Scheme};
use crate::solver::{SolutionSurface, SolveOptions, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExerciseStyle {
    European,
    American,
}

impl fmt::Display for ExerciseStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExerciseStyle::European => "european",
            ExerciseStyle::American => "american",
        })
    }
}

impl FromStr for ExerciseStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "european" | "eu" => Ok(ExerciseStyle::European),
            "american" | "am" => Ok(ExerciseStyle::American),
            other => Err(Error::invalid(
                "style",
                format!("unknown exercise style `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub spot: f64,
    pub strike: f64,
    /// Lending rate `r`.
    pub rate: f64,
    /// Borrowing rate `R`.
    pub borrow_rate: f64,
    /// Drift of the stock under the physical measure.
    pub mu: f64,
    /// Continuous dividend yield.
    pub div: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub style: ExerciseStyle,
}

impl Default for MarketParams {
    /// At-the-money one-year call, `S0 = 100`, `r = R = 0.01`, `mu = 0.05`,
    /// `sigma = 0.2`, no dividend.
    fn default() -> Self {
        Self {
            spot: 100.0,
            strike: 100.0,
            rate: 0.01,
            borrow_rate: 0.01,
            mu: 0.05,
            div: 0.0,
            sigma: 0.2,
            maturity: 1.0,
            style: ExerciseStyle::European,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("spot", self.spot),
            ("strike", self.strike),
            ("rate", self.rate),
            ("borrow_rate", self.borrow_rate),
            ("mu", self.mu),
            ("div", self.div),
            ("sigma", self.sigma),
            ("maturity", self.maturity),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("spot", self.spot),
            ("strike", self.strike),
            ("sigma", self.sigma),
            ("maturity", self.maturity),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.borrow_rate < self.rate {
            return Err(Error::invalid(
                "borrow_rate",
                format!(
                    "must be at least the lending rate {}, got {}",
                    self.rate, self.borrow_rate
                ),
            ));
        }
        Ok(())
    }

    pub fn log_spot(&self) -> f64 {
        self.spot.ln()
    }

    pub fn log_drift(&self) -> f64 {
        self.mu - self.div - 0.5 * self.sigma * self.sigma
    }

    /// Market price of risk `(mu - r) / sigma`.
    pub fn risk_premium(&self) -> f64 {
        (self.mu - self.rate) / self.sigma
    }

    pub fn is_frictionless(&self) -> bool {
        self.borrow_rate == self.rate
    }
}

/// Evaluates the pricing driver at `(y, z)`.
pub fn pricing_driver(params: &MarketParams, y: f64, z: f64) -> f64 {
    let base = -params.rate * y - params.risk_premium() * z;
    if params.is_frictionless() {
        base
    } else {
        base + (params.borrow_rate - params.rate) * (z / params.sigma - y).max(0.0)
    }
}

/// Builds the call-pricing FBSDE on `n` time steps; American calls are
/// reflected on the payoff.
pub fn build_pricing_problem(
    params: &MarketParams,
    n: usize,
    scheme: Scheme,
) -> Result<ProblemSpec> {
    params.validate()?;
    let p = *params;
    let strike = p.strike;
    let b = p.log_drift();
    let sigma = p.sigma;
    let drv = if p.is_frictionless() {
        let (r, theta) = (p.rate, p.risk_premium());
        driver(move |_, _, y, z| -r * y - theta * z)
    } else {
        driver(move |_, _, y, z| pricing_driver(&p, y, z))
    };
    let barrier = match p.style {
        ExerciseStyle::European => None,
        ExerciseStyle::American => Some(coef(move |_, x: f64| (x.exp() - strike).max(0.0))),
    };
    ProblemSpec::fbsde(FbsdeParts {
        horizon: p.maturity,
        steps: n,
        x_init: p.log_spot(),
        drift: coef(move |_, _| b),
        vol: coef(move |_, _| sigma),
        terminal: terminal(move |x: f64| (x.exp() - strike).max(0.0)),
        driver: drv,
        barrier,
        scheme,
        coefficients_constant: true,
    })
}

/// Hedge ratio `dY/dS` at time zero, from the gradient moment at `X_0`.
pub fn extract_delta(surface: &SolutionSurface, params: &MarketParams) -> f64 {
    let (_, z0) = crate::solver::value_at_start(surface);
    z0 / (params.sigma * params.spot)
}

/// Grid settings for [`price`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingGrid {
    pub half_width: f64,
    pub log2_n: u32,
    pub epsilon: f64,
}

impl Default for PricingGrid {
    fn default() -> Self {
        Self {
            half_width: crate::grid::DEFAULT_HALF_WIDTH,
            log2_n: crate::grid::DEFAULT_LOG2_N,
            epsilon: crate::transform::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub price: f64,
    pub delta: f64,
}

/// Price and delta at `S0` with `n` time steps.
pub fn price(params: &MarketParams, n: usize, scheme: Scheme, grid: &PricingGrid) -> Result<Quote> {
    let spec = build_pricing_problem(params, n, scheme)?;
    let pair = GridPair::build(params.log_spot(), grid.half_width, grid.log2_n)?;
    let options = SolveOptions {
        epsilon: grid.epsilon,
        storage: crate::solver::Storage::Endpoints,
    };
    let surface = Solver::new(pair).with_options(options).solve(&spec)?;
    let (y0, _) = crate::solver::value_at_start(&surface);
    Ok(Quote {
        price: y0,
        delta: extract_delta(&surface, params),
    })
}
