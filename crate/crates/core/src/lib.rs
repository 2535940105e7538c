//! Fourier-convolution solver for BSDEs, decoupled FBSDEs and reflected
//! FBSDEs on a uniform log-space grid, with a call-pricing layer for markets
//! with different borrowing and lending rates.
//!
//! ```no_run
//! use convbsde::{pricing, Scheme};
//!
//! let params = pricing::MarketParams::default();
//! let quote = pricing::price(&params, 1000, Scheme::ExplicitII, &Default::default()).unwrap();
//! println!("{:.4} {:.4}", quote.price, quote.delta);
//! ```

pub mod error;
pub mod grid;
pub mod model;
pub mod oracles;
pub mod pathsim;
pub mod pricing;
pub mod solver;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use grid::GridPair;
pub use model::{FbsdeParts, ProblemSpec, Scheme};
pub use pricing::{ExerciseStyle, MarketParams};
pub use solver::{solve, SolutionSurface, SolveOptions, Solver, Storage};
pub use spectral::{MomentKind, PsiKind};
pub use transform::TransformCoefficients;
