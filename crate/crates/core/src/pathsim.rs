//! Forward Euler paths of `X` with `Y`, `Z` and `A` read off a solved surface.
//!
//! Path `p` under seed `s` draws its normals from `ChaCha8Rng` seeded with
//! `s` on stream `p`, so each path is reproducible on its own and the result
//! does not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::model::ProblemSpec;
use crate::solver::SolutionSurface;

/// Generator description written next to simulated output.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = path index";

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub path_index: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub x_path: Vec<f64>,
    pub y_path: Vec<f64>,
    pub z_path: Vec<f64>,
    /// Cumulative reflection; all zeros when the problem is not reflected.
    pub a_path: Vec<f64>,
    /// Set when the path left the grid and was held at a boundary node.
    pub clamped: bool,
}

fn interpolate(row: &[f64], grid: &GridPair, x: f64) -> f64 {
    let (k, w, _) = grid.locate(x);
    if w == 0.0 {
        row[k]
    } else {
        (1.0 - w) * row[k] + w * row[k + 1]
    }
}

/// Simulates `count` paths on the solver's time mesh.
pub fn simulate_paths(
    spec: &ProblemSpec,
    surface: &SolutionSurface,
    count: usize,
    seed: u64,
) -> Result<Vec<PathBundle>> {
    if !surface.is_full() {
        return Err(Error::invalid(
            "surface",
            "path simulation needs every time row",
        ));
    }
    if surface.steps() != spec.steps() {
        return Err(Error::invalid(
            "surface",
            format!(
                "has {} steps, problem has {}",
                surface.steps(),
                spec.steps()
            ),
        ));
    }
    let (lo, hi) = (surface.grid().x0(), surface.grid().x_end());
    if !(lo..=hi).contains(&spec.x_init()) {
        return Err(Error::invalid("x_init", "lies outside the grid"));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|p| simulate_one(spec, surface, p, seed))
        .collect())
}

fn simulate_one(
    spec: &ProblemSpec,
    surface: &SolutionSurface,
    path_index: usize,
    seed: u64,
) -> PathBundle {
    let grid = surface.grid();
    let n = spec.steps();
    let dt = spec.step_size();
    let sqdt = dt.sqrt();
    let (lo, hi) = (grid.x0(), grid.x_end());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index as u64);

    let mut x_path = Vec::with_capacity(n + 1);
    let mut y_path = Vec::with_capacity(n + 1);
    let mut z_path = Vec::with_capacity(n + 1);
    let mut a_path = Vec::with_capacity(n + 1);
    let mut clamped = false;
    let mut x = spec.x_init();
    let mut a = 0.0;
    for i in 0..=n {
        let row = surface.row(i).expect("full surface");
        x_path.push(x);
        y_path.push(interpolate(&row.u, grid, x));
        z_path.push(interpolate(&row.udot, grid, x));
        if let Some(da) = &row.reflection {
            if i < n {
                a += interpolate(da, grid, x);
            }
        }
        a_path.push(a);
        if i < n {
            let t = spec.time(i);
            let xi: f64 = StandardNormal.sample(&mut rng);
            let next = x + spec.drift(t, x) * dt + spec.vol(t, x) * sqdt * xi;
            if next < lo || next > hi || !next.is_finite() {
                clamped = true;
                x = if next < lo || next.is_nan() { lo } else { hi };
            } else {
                x = next;
            }
        }
    }
    PathBundle {
        path_index,
        seed,
        times: surface.times().to_vec(),
        x_path,
        y_path,
        z_path,
        a_path,
        clamped,
    }
}
