use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point or argument outside the region where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid problem data or bubble configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite integrand value at a quadrature node.
    #[error("non-finite integrand ({value}) at node {node} of patch {patch} (x = {x:?})")]
    NonFinite {
        patch: String,
        node: usize,
        x: Point,
        value: f64,
    },

    /// The grid is too coarse for the narrowest bubble.
    #[error("grid n = {n} under-resolves a bubble of width {width:.3e}; need n >= {required}")]
    UnderResolved { n: usize, width: f64, required: usize },

    /// Linear or nonlinear solver failure.
    #[error("solver failure: {reason}")]
    Solver { reason: String, history: Vec<f64> },
}
