//! Relaxation schemes for the fast diffusion equation `d_t alpha(z) = Delta z`
//! with `alpha(s) = |s|^{q-2} s`, `q > 2`.

pub mod cli;
pub mod config;
pub mod constitutive;
pub mod error;
pub mod experiments;
pub mod grid;
pub(crate) mod linalg;
pub mod stationary;
pub mod stepper;

pub use constitutive::PowerLaw;
pub use error::{Error, Result};
pub use grid::{Field, Grid, TimeGrid};
