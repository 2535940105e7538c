//! Coupled space / frequency discretization.
//!
//! The space grid `x_k = x_0 + k dx` and the frequency grid
//! `nu_j = -L/2 + j dnu` share the node count `N` and are tied together by
//! the Nyquist relation `L * l = 2 pi N`, which is what lets a length-`N`
//! DFT map one grid onto the other.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default half width of the space window around the initial state.
pub const DEFAULT_HALF_WIDTH: f64 = 5.0;
/// Default `log2 N`.
pub const DEFAULT_LOG2_N: u32 = 12;

const MIN_LOG2_N: u32 = 2;
const MAX_LOG2_N: u32 = 24;

/// A uniform space grid and its dual frequency grid.
///
/// The grid is centred on the initial state so the value at `t = 0` can be
/// read off node `N/2` without interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPair {
    n: usize,
    x0: f64,
    dx: f64,
    l: f64,
    nu0: f64,
    dnu: f64,
    big_l: f64,
    center: f64,
}

impl GridPair {
    /// Builds the grid with `N = 2^log2_n` cells on `[center - half_width, center + half_width]`.
    pub fn build(center: f64, half_width: f64, log2_n: u32) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(
                "half_width",
                format!("must be positive, got {half_width}"),
            ));
        }
        if !(MIN_LOG2_N..=MAX_LOG2_N).contains(&log2_n) {
            return Err(Error::invalid(
                "log2_n",
                format!("must lie in {MIN_LOG2_N}..={MAX_LOG2_N}, got {log2_n}"),
            ));
        }
        let n = 1usize << log2_n;
        let nf = n as f64;
        let l = 2.0 * half_width;
        let dx = l / nf;
        let big_l = 2.0 * PI * nf / l;
        let dnu = big_l / nf;
        Ok(Self {
            n,
            x0: center - half_width,
            dx,
            l,
            nu0: -0.5 * big_l,
            dnu,
            big_l,
            center,
        })
    }

    /// Number of cells `N` (the DFT length).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Right endpoint `x_N`.
    pub fn x_end(&self) -> f64 {
        self.x(self.n)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Space width `l = N dx`.
    pub fn width(&self) -> f64 {
        self.l
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn dnu(&self) -> f64 {
        self.dnu
    }

    /// Frequency width `L = N dnu`.
    pub fn frequency_width(&self) -> f64 {
        self.big_l
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Index of the centre node, `N/2`.
    pub fn center_index(&self) -> usize {
        self.n / 2
    }

    /// Space node `x_k` for `k = 0..=N`. Node `N/2` is exactly the centre.
    pub fn x(&self, k: usize) -> f64 {
        self.center + (k as f64 - (self.n / 2) as f64) * self.dx
    }

    /// Frequency node `nu_j` for `j = 0..=N`.
    pub fn nu(&self, j: usize) -> f64 {
        self.nu0 + j as f64 * self.dnu
    }

    /// All `N + 1` space nodes, including the wrap node `x_N`.
    pub fn space_nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.x(k)).collect()
    }

    /// The `N` frequency nodes used by the DFT (`nu_0 .. nu_{N-1}`).
    pub fn frequency_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.nu(j)).collect()
    }

    /// Locates `x` on the grid, returning the left node index and the
    /// interpolation weight of the right node. Points outside `[x_0, x_N]`
    /// are clamped; the flag reports whether clamping happened.
    pub fn locate(&self, x: f64) -> (usize, f64, bool) {
        let s = (x - self.x0) / self.dx;
        if s.is_nan() || s <= 0.0 {
            return (0, 0.0, s < 0.0 || s.is_nan());
        }
        if s >= self.n as f64 {
            return (self.n - 1, 1.0, s > self.n as f64);
        }
        let k = s.floor() as usize;
        let k = k.min(self.n - 1);
        (k, s - k as f64, false)
    }
}
