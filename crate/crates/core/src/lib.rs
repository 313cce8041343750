pub mod ansatz;
pub mod bessel;
pub mod corrector;
pub mod domain;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod harmonic;
pub mod params;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::Point;
