use thiserror::Error;

/// Failure modes shared by every computation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates a type invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Walk enumeration would exceed the configured depth or dimension caps.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The expansion ratio is at or above one, so the series is not certified.
    #[error("series does not converge: ratio {ratio:.6} >= 1")]
    Divergence { ratio: f64 },

    /// A closed form was asked for outside its branch domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A point lies on the wrong side of, or too close to, an integration contour.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Adaptive quadrature ran out of its node budget.
    #[error("quadrature did not converge after {nodes} nodes (last change {change:.3e})")]
    Quadrature { nodes: usize, change: f64 },

    /// A linear solve finished with a residual above tolerance.
    #[error("solver breakdown at sample {sample:?}: relative residual {residual:.3e}")]
    Solver { sample: Option<usize>, residual: f64 },

    /// Inverse-CDF sampling failed to bracket or converge.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// A computed term exceeded its a priori bound.
    #[error("certificate violated at order {order}: |term| = {magnitude:.6e} > bound {bound:.6e}")]
    Certificate {
        order: usize,
        magnitude: f64,
        bound: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
