use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use convbsde::pricing::{ExerciseStyle, MarketParams, PricingGrid};
use convbsde::Scheme;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub mu: f64,
    pub div: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub style: String,
}

impl Default for MarketConfig {
    fn default() -> Self {
        let p = MarketParams::default();
        Self {
            spot: p.spot,
            strike: p.strike,
            rate: p.rate,
            borrow_rate: p.borrow_rate,
            mu: p.mu,
            div: p.div,
            sigma: p.sigma,
            maturity: p.maturity,
            style: "american".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(rename = "log2N")]
    pub log2_n: u32,
    pub half_width: f64,
    pub epsilon: f64,
    pub n: usize,
    pub scheme: String,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let g = PricingGrid::default();
        Self {
            log2_n: g.log2_n,
            half_width: g.half_width,
            epsilon: g.epsilon,
            n: 1000,
            scheme: Scheme::ExplicitII.name().into(),
        }
    }
}

/// Everything a command needs; defaults reproduce the reference experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketConfig,
    pub numerics: NumericsConfig,
    pub strikes: Vec<f64>,
    pub n_list: Vec<usize>,
    pub schemes: Vec<String>,
    pub seed: u64,
    pub paths: usize,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            market: MarketConfig::default(),
            numerics: NumericsConfig::default(),
            strikes: vec![90.0, 100.0, 110.0],
            n_list: vec![500, 1000, 2000, 5000],
            schemes: vec![
                Scheme::ExplicitI.name().into(),
                Scheme::ExplicitII.name().into(),
            ],
            seed: 20_130_601,
            paths: 50,
            output: None,
        }
    }
}

/// Command-line overrides; every flag is optional and wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["explicit1", "explicit2"])]
    pub scheme: Option<String>,
    /// Number of time steps.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long = "log2N", global = true)]
    pub log2_n: Option<u32>,
    #[arg(long, global = true)]
    pub half_width: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub strike: Option<f64>,
    #[arg(long, global = true)]
    pub spot: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub borrow_rate: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub div: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub maturity: Option<f64>,
    #[arg(long, global = true, value_parser = ["european", "american"])]
    pub style: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads the file named by `--config` (if any) and applies the flags.
    pub fn resolve(ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &ov.config {
            Some(p) => Self::from_path(p)?,
            None => Self::default(),
        };
        cfg.apply(ov);
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        let m = &mut self.market;
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut m.spot, ov.spot);
        set(&mut m.strike, ov.strike);
        set(&mut m.rate, ov.rate);
        set(&mut m.borrow_rate, ov.borrow_rate);
        set(&mut m.mu, ov.mu);
        set(&mut m.div, ov.div);
        set(&mut m.sigma, ov.sigma);
        set(&mut m.maturity, ov.maturity);
        if let Some(s) = &ov.style {
            m.style = s.clone();
        }
        let num = &mut self.numerics;
        if let Some(s) = &ov.scheme {
            num.scheme = s.clone();
        }
        if let Some(n) = ov.n {
            num.n = n;
        }
        if let Some(v) = ov.log2_n {
            num.log2_n = v;
        }
        set(&mut num.half_width, ov.half_width);
        set(&mut num.epsilon, ov.epsilon);
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(p) = ov.paths {
            self.paths = p;
        }
        if let Some(o) = &ov.out {
            self.output = Some(o.clone());
        }
    }

    pub fn market_params(&self) -> Result<MarketParams, CliError> {
        self.market_params_with_strike(self.market.strike)
    }

    pub fn market_params_with_strike(&self, strike: f64) -> Result<MarketParams, CliError> {
        let m = &self.market;
        let style: ExerciseStyle = m
            .style
            .parse()
            .map_err(|e| CliError::Config(format!("market.style: {e}")))?;
        let p = MarketParams {
            spot: m.spot,
            strike,
            rate: m.rate,
            borrow_rate: m.borrow_rate,
            mu: m.mu,
            div: m.div,
            sigma: m.sigma,
            maturity: m.maturity,
            style,
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("market: {e}")))?;
        Ok(p)
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        parse_scheme(&self.numerics.scheme)
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        self.schemes.iter().map(|s| parse_scheme(s)).collect()
    }

    pub fn grid(&self) -> Result<PricingGrid, CliError> {
        let num = &self.numerics;
        if !(num.half_width > 0.0 && num.half_width.is_finite()) {
            return Err(CliError::Config(format!(
                "numerics.half_width must be positive, got {}",
                num.half_width
            )));
        }
        if !(2..=24).contains(&num.log2_n) {
            return Err(CliError::Config(format!(
                "numerics.log2N must lie in 2..=24, got {}",
                num.log2_n
            )));
        }
        if !(num.epsilon > 0.0 && num.epsilon.is_finite()) {
            return Err(CliError::Config(format!(
                "numerics.epsilon must be positive, got {}",
                num.epsilon
            )));
        }
        Ok(PricingGrid {
            half_width: num.half_width,
            log2_n: num.log2_n,
            epsilon: num.epsilon,
        })
    }

    pub fn steps(&self) -> Result<usize, CliError> {
        check_steps(self.numerics.n, "numerics.n")
    }
}

pub(crate) fn check_steps(n: usize, field: &str) -> Result<usize, CliError> {
    if n == 0 || n > convbsde::model::MAX_STEPS {
        return Err(CliError::Config(format!(
            "{field} must lie in 1..={}, got {n}",
            convbsde::model::MAX_STEPS
        )));
    }
    Ok(n)
}

fn parse_scheme(s: &str) -> Result<Scheme, CliError> {
    s.parse()
        .map_err(|e| CliError::Config(format!("scheme: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        let p = c.market_params().unwrap();
        assert_eq!(p.spot, 100.0);
        assert_eq!(p.style, ExerciseStyle::American);
        let g = c.grid().unwrap();
        assert_eq!((g.half_width, g.log2_n, g.epsilon), (5.0, 12, 5.0));
        assert_eq!(c.scheme().unwrap(), Scheme::ExplicitII);
        assert_eq!(c.steps().unwrap(), 1000);
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c = RunConfig::from_json_str(
            r#"{"market": {"borrow_rate": 0.03}, "numerics": {"log2N": 10}}"#,
        )
        .unwrap();
        assert_eq!(c.market.borrow_rate, 0.03);
        assert_eq!(c.market.rate, 0.01);
        assert_eq!(c.numerics.log2_n, 10);
        assert_eq!(c.numerics.n, 1000);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::from_json_str("{\n  \"market\": {\"sigma\": \"x\"}\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = RunConfig::from_json_str(r#"{"markt": {}}"#).unwrap_err();
        assert!(err.to_string().contains("markt"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.market.sigma = -0.2;
        let err = c.market_params().unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            strike: Some(110.0),
            n: Some(20),
            scheme: Some("explicit1".into()),
            ..Default::default()
        });
        assert_eq!(c.market.strike, 110.0);
        assert_eq!(c.numerics.n, 20);
        assert_eq!(c.scheme().unwrap(), Scheme::ExplicitI);
    }
}
