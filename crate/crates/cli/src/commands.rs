use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use convbsde::oracles::{binomial_bsde, black_scholes_call, BsResult};
use convbsde::pathsim::{simulate_paths, PathBundle, RNG_ALGORITHM};
use convbsde::pricing::{build_pricing_problem, ExerciseStyle, MarketParams, PricingGrid};
use convbsde::solver::value_at_start;
use convbsde::{GridPair, Scheme, SolutionSurface, SolveOptions, Solver, Storage};

use crate::config::{check_steps, RunConfig};
use crate::CliError;

pub fn solve_pricing(
    params: &MarketParams,
    n: usize,
    scheme: Scheme,
    grid: &PricingGrid,
    storage: Storage,
) -> Result<SolutionSurface, CliError> {
    let spec = build_pricing_problem(params, n, scheme)?;
    let pair = GridPair::build(params.log_spot(), grid.half_width, grid.log2_n)?;
    let options = SolveOptions {
        epsilon: grid.epsilon,
        storage,
    };
    Ok(Solver::new(pair).with_options(options).solve(&spec)?)
}

/// Closed-form reference when one exists: no friction, and no early exercise
/// premium (European, or an American call without dividends).
pub fn closed_form(params: &MarketParams, spot: f64) -> Option<BsResult> {
    let no_premium = params.style == ExerciseStyle::European || params.div <= 0.0;
    (params.is_frictionless() && no_premium).then(|| {
        black_scholes_call(
            spot,
            params.strike,
            params.rate,
            params.div,
            params.sigma,
            params.maturity,
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRecord {
    pub scheme: String,
    pub style: String,
    pub strike: f64,
    pub n: usize,
    pub price: f64,
    pub delta: f64,
    pub y0: f64,
    pub z0: f64,
    pub runtime_ms: f64,
}

pub fn price(cfg: &RunConfig) -> Result<PriceRecord, CliError> {
    let params = cfg.market_params()?;
    let scheme = cfg.scheme()?;
    let n = cfg.steps()?;
    let grid = cfg.grid()?;
    let start = Instant::now();
    let surface = solve_pricing(&params, n, scheme, &grid, Storage::Endpoints)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let (y0, z0) = value_at_start(&surface);
    Ok(PriceRecord {
        scheme: scheme.name().into(),
        style: params.style.to_string(),
        strike: params.strike,
        n,
        price: y0,
        delta: z0 / (params.sigma * params.spot),
        y0,
        z0,
        runtime_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub scheme: String,
    #[serde(rename = "K")]
    pub strike: f64,
    pub n: usize,
    pub price: f64,
    pub delta: f64,
    pub ref_price: f64,
    pub rel_err_pct: f64,
    pub ref_delta: f64,
    pub delta_rel_err_pct: f64,
    pub reference: String,
}

fn rel_pct(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference).abs() / reference.abs()
}

/// Sweeps schemes x strikes x meshes, in that nesting order. A failing cell
/// is reported on stderr and recorded as NaN.
pub fn table(cfg: &RunConfig) -> Result<Vec<TableRow>, CliError> {
    if cfg.strikes.is_empty() {
        return Err(CliError::Config("strikes must not be empty".into()));
    }
    if cfg.n_list.is_empty() {
        return Err(CliError::Config("n_list must not be empty".into()));
    }
    let schemes = cfg.schemes()?;
    if schemes.is_empty() {
        return Err(CliError::Config("schemes must not be empty".into()));
    }
    let grid = cfg.grid()?;
    let mut cells = Vec::new();
    for &scheme in &schemes {
        for &k in &cfg.strikes {
            let params = cfg.market_params_with_strike(k)?;
            for &n in &cfg.n_list {
                check_steps(n, "n_list")?;
                cells.push((scheme, params, n));
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(scheme, params, n)| {
            let (ref_price, ref_delta, reference) = match closed_form(&params, params.spot) {
                Some(bs) => (bs.price, bs.delta, "black-scholes"),
                None => {
                    let (p, d) = binomial_bsde(&params, n, params.style == ExerciseStyle::American);
                    (p, d, "binomial")
                }
            };
            let (price, delta) = match solve_pricing(&params, n, scheme, &grid, Storage::Endpoints)
            {
                Ok(s) => {
                    let (y, z) = value_at_start(&s);
                    (y, z / (params.sigma * params.spot))
                }
                Err(e) => {
                    eprintln!("cell scheme={scheme} K={} n={n} failed: {e}", params.strike);
                    (f64::NAN, f64::NAN)
                }
            };
            TableRow {
                scheme: scheme.name().into(),
                strike: params.strike,
                n,
                price,
                delta,
                ref_price,
                rel_err_pct: rel_pct(price, ref_price),
                ref_delta,
                delta_rel_err_pct: rel_pct(delta, ref_delta),
                reference: reference.into(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub x: f64,
    pub spot: f64,
    pub price: f64,
    pub ref_price: f64,
    pub abs_err: f64,
    pub log10_abs_err: f64,
    pub delta: f64,
    pub ref_delta: f64,
    pub delta_abs_err: f64,
    pub log10_delta_abs_err: f64,
}

fn log10_floor(v: f64) -> f64 {
    v.max(1e-300).log10()
}

/// Absolute price and delta errors at `t = 0` over every space node.
pub fn error_surface(cfg: &RunConfig) -> Result<Vec<ErrorRow>, CliError> {
    let params = cfg.market_params()?;
    if closed_form(&params, params.spot).is_none() {
        return Err(CliError::Config(
            "error-surface needs a closed-form reference: set borrow_rate = rate, and div = 0 unless style is european"
                .into(),
        ));
    }
    let surface = solve_pricing(
        &params,
        cfg.steps()?,
        cfg.scheme()?,
        &cfg.grid()?,
        Storage::Endpoints,
    )?;
    let row = surface.row(0).expect("row 0 is stored");
    Ok(surface
        .grid()
        .space_nodes()
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let s = x.exp();
            let bs = closed_form(&params, s).expect("checked above");
            let price = row.u[k];
            let delta = row.udot[k] / (params.sigma * s);
            let abs_err = (price - bs.price).abs();
            let delta_abs_err = (delta - bs.delta).abs();
            ErrorRow {
                x,
                spot: s,
                price,
                ref_price: bs.price,
                abs_err,
                log10_abs_err: log10_floor(abs_err),
                delta,
                ref_delta: bs.delta,
                delta_abs_err,
                log10_delta_abs_err: log10_floor(delta_abs_err),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeRow {
    pub n: usize,
    pub price: f64,
    pub abs_err: f64,
    /// Previous error over this error; NaN on the first row.
    pub ratio: f64,
    /// `log(e_prev / e) / log(n / n_prev)`; NaN on the first row.
    pub estimated_order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeReport {
    pub reference: f64,
    pub rows: Vec<ConvergeRow>,
    /// Least-squares slope of `-log(err)` against `log(n)`.
    pub fitted_order: f64,
}

pub fn converge(cfg: &RunConfig) -> Result<ConvergeReport, CliError> {
    let list = &cfg.n_list;
    if list.len() < 3 {
        return Err(CliError::Config(format!(
            "n_list needs at least 3 points, got {}",
            list.len()
        )));
    }
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(
            "n_list must be strictly increasing".into(),
        ));
    }
    for &n in list {
        check_steps(n, "n_list")?;
    }
    let params = cfg.market_params()?;
    let reference = closed_form(&params, params.spot)
        .ok_or_else(|| CliError::Config("converge needs a closed-form reference price".into()))?
        .price;
    let (scheme, grid) = (cfg.scheme()?, cfg.grid()?);
    let prices: Vec<f64> = list
        .par_iter()
        .map(|&n| {
            solve_pricing(&params, n, scheme, &grid, Storage::Endpoints)
                .map(|s| value_at_start(&s).0)
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<ConvergeRow> = Vec::with_capacity(list.len());
    for (&n, &price) in list.iter().zip(&prices) {
        let abs_err = (price - reference).abs();
        let (ratio, estimated_order) = match rows.last() {
            Some(prev) => {
                let ratio = prev.abs_err / abs_err;
                (ratio, ratio.ln() / (n as f64 / prev.n as f64).ln())
            }
            None => (f64::NAN, f64::NAN),
        };
        rows.push(ConvergeRow {
            n,
            price,
            abs_err,
            ratio,
            estimated_order,
        });
    }
    let fitted_order = empirical_order(
        &rows
            .iter()
            .map(|r| (r.n as f64, r.abs_err))
            .collect::<Vec<_>>(),
    );
    Ok(ConvergeReport {
        reference,
        rows,
        fitted_order,
    })
}

/// Least-squares slope of `-log(err)` against `log(n)`.
pub fn empirical_order(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRow {
    pub path_id: usize,
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMeta {
    pub rng: &'static str,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub scheme: String,
    pub clamped_paths: usize,
}

pub fn paths(cfg: &RunConfig) -> Result<(Vec<PathBundle>, PathMeta), CliError> {
    if cfg.paths == 0 {
        return Err(CliError::Config("paths must be at least 1".into()));
    }
    let params = cfg.market_params()?;
    let (n, scheme, grid) = (cfg.steps()?, cfg.scheme()?, cfg.grid()?);
    let spec = build_pricing_problem(&params, n, scheme)?;
    let surface = solve_pricing(&params, n, scheme, &grid, Storage::Full)?;
    let bundles = simulate_paths(&spec, &surface, cfg.paths, cfg.seed)?;
    let meta = PathMeta {
        rng: RNG_ALGORITHM,
        seed: cfg.seed,
        paths: cfg.paths,
        steps: n,
        scheme: scheme.name().into(),
        clamped_paths: bundles.iter().filter(|b| b.clamped).count(),
    };
    Ok((bundles, meta))
}

pub fn path_rows(bundles: &[PathBundle]) -> Vec<PathRow> {
    bundles
        .iter()
        .flat_map(|b| {
            (0..b.times.len()).map(move |i| PathRow {
                path_id: b.path_index,
                t: b.times[i],
                x: b.x_path[i],
                s: b.x_path[i].exp(),
                y: b.y_path[i],
                z: b.z_path[i],
                a: b.a_path[i],
            })
        })
        .collect()
}

/// Writes rows with a header to `out`, or to stdout.
pub fn write_csv<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn write_meta(meta: &PathMeta, out: &Path) -> Result<(), CliError> {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    let mut f = std::fs::File::create(&name)?;
    serde_json::to_writer_pretty(&mut f, meta).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.numerics.log2_n = 9;
        c.numerics.n = 20;
        c.n_list = vec![10, 20, 40];
        c.strikes = vec![100.0];
        c
    }

    #[test]
    fn fitted_order_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [100.0, 200.0, 400.0, 1000.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 / n))
            .collect();
        assert!((empirical_order(&pts) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converge_needs_three_points() {
        let mut c = small();
        c.n_list = vec![500];
        assert_eq!(converge(&c).unwrap_err().exit_code(), 2);
        c.n_list = vec![500, 400, 1000];
        assert!(converge(&c).is_err());
    }

    #[test]
    fn table_rejects_empty_sweeps() {
        let mut c = small();
        c.strikes.clear();
        assert_eq!(table(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn table_is_ordered() {
        let mut c = small();
        c.strikes = vec![90.0, 110.0];
        let rows = table(&c).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert_eq!(rows[0].scheme, "explicit1");
        assert_eq!((rows[0].strike, rows[0].n), (90.0, 10));
        assert_eq!((rows[5].strike, rows[5].n), (110.0, 40));
        assert!(rows.iter().all(|r| r.reference == "black-scholes"));
    }

    #[test]
    fn friction_uses_binomial_reference() {
        let mut c = small();
        c.market.borrow_rate = 0.03;
        c.schemes = vec!["explicit2".into()];
        let rows = table(&c).unwrap();
        assert!(rows.iter().all(|r| r.reference == "binomial"));
        assert!(error_surface(&c).is_err());
    }

    #[test]
    fn error_surface_covers_the_grid() {
        let rows = error_surface(&small()).unwrap();
        assert_eq!(rows.len(), (1 << 9) + 1);
        assert!(rows
            .iter()
            .all(|r| r.abs_err >= 0.0 && r.log10_abs_err.is_finite()));
    }

    #[test]
    fn path_rows_are_long_format() {
        let mut c = small();
        c.paths = 3;
        let (b, meta) = paths(&c).unwrap();
        let rows = path_rows(&b);
        assert_eq!(rows.len(), 3 * 21);
        assert_eq!(rows[21].path_id, 1);
        assert_eq!(rows[21].t, 0.0);
        assert_eq!(meta.paths, 3);
        c.paths = 0;
        assert!(paths(&c).is_err());
    }
}
