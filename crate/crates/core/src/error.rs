//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration (message names the offending field).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A post-treatment history event has no component label where one is needed.
    #[error("labels required: post-treatment history event {index} is unlabelled")]
    LabelsRequired { index: usize },

    /// An intensity hit zero where the score needs both components positive.
    #[error("margin violated: component {component} intensity is zero at t={t}")]
    MarginViolated { component: usize, t: f64 },

    /// Event term with nonpositive intensity at its own component.
    #[error("log of nonpositive intensity at event {index} (component {component})")]
    NonpositiveIntensity { index: usize, component: usize },

    /// Branching matrix spectral radius at or above one.
    #[error("spectral radius >= 1 (got {radius})")]
    Supercritical { radius: f64 },

    /// Simulation produced more events than the configured cap.
    #[error("explosion guard: event count exceeded cap {cap}")]
    ExplosionGuard { cap: usize },

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: achieved {achieved:e}, bound {bound:e}")]
    QuadratureFailed { achieved: f64, bound: f64 },

    /// Optimizer could not produce a usable iterate.
    #[error("optimization failed: {0}")]
    OptimFailed(String),

    /// Non-finite gradient entry, naming the coordinate.
    #[error("non-finite gradient in coordinate {coord} ({name})")]
    NonFiniteGradient { coord: usize, name: String },

    /// Operation needs true labels but none were supplied.
    #[error("truth labelling required: {0}")]
    MissingTruth(String),

    /// Labelling length does not match the catalog.
    #[error("labelling length {got} does not match {expected} post-treatment events")]
    LabellingMismatch { got: usize, expected: usize },
}
