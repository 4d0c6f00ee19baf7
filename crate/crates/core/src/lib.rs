//! Robust estimation for autoregressions with heavy-tailed innovations and
//! characteristic roots on the unit circle.

pub mod ar;
pub mod asymptotics;
pub mod bootstrap;
pub mod error;
pub mod estimation;
pub mod io;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
