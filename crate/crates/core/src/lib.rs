//! Finite-element workbench for boundary trace regularity of linear
//! elastodynamics on annulus and spherical-shell domains.
//!
//! The library is organized around the pipeline
//! mesh -> FE spaces -> stationary lifts -> time integration -> boundary
//! traces and norms, plus two self-contained verification components: a
//! pointwise identity checker driven by exact derivatives and a Fourier
//! model of the time-interpolation machinery. The `harness` module wires
//! everything into reproducible estimate experiments and the binary
//! exposes them as subcommands.

pub mod config;
pub mod dynamics;
pub mod elliptic;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod identities;
pub mod jets;
pub mod lin;
pub mod report;
pub mod spaces;
pub mod timescale;
pub mod traces;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incompatible data: {0}")]
    Incompatible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Guard added to denominators of relative residuals to avoid 0/0.
pub const RESIDUAL_EPS: f64 = 1e-300;

/// Relative residual |a - b| / (|a| + |b| + eps).
pub fn rel_residual(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs() + RESIDUAL_EPS)
}
