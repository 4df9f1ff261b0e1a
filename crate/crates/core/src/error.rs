//! Error type shared by every solver layer.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point left the tubular neighborhood: |v| = {dist:.6e} exceeds rho0 = {rho0:.6e}")]
    TubeExit { dist: f64, rho0: f64 },

    #[error("degenerate normal (|grad d| = {grad_norm:.3e} < 0.5); projection helper invalid here")]
    DegenerateNormal { grad_norm: f64 },

    #[error(
        "potential is not in critical-manifold normal form: {component} = {value:.3e} exceeds {tol:.1e}"
    )]
    NondegeneracyViolation {
        component: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("descent exceeded {max_iters} iterations (gradient norm {grad_norm:.3e})")]
    MaxItersExceeded { max_iters: usize, grad_norm: f64 },

    #[error("homotopy class changed during descent: {from:?} -> {to:?}")]
    ClassDrift { from: Vec<i64>, to: Vec<i64> },

    #[error("loop is not a geodesic: gradient norm {grad_norm:.3e} > {tol:.1e}")]
    NotAGeodesic { grad_norm: f64, tol: f64 },

    #[error("lambda0 = {lambda0:.9e} lies within {dist:.3e} of periodic eigenvalue {eigen:.9e}")]
    ResonantLambda { lambda0: f64, eigen: f64, dist: f64 },

    #[error("fixed-point iteration diverged (contraction ratio {ratio:.3})")]
    FixedPointDiverged { ratio: f64 },

    #[error("geodesic is degenerate: {reason}")]
    DegenerateGeodesic { reason: String },

    #[error("Newton diverged at eps = {eps:.3e} after {iters} iterations (residual {residual:.3e})")]
    NewtonDiverged { eps: f64, iters: usize, residual: f64 },

    #[error("linearization numerically singular (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("attractive admissibility 4*Lambda*Hbar*A < b0 fails: {lhs:.6e} >= {b0:.6e}")]
    AdmissibilityFailed { lhs: f64, b0: f64 },

    #[error("normal fixed point failed to contract at eps = {eps:.3e}: {detail}")]
    ContractionFailed { eps: f64, detail: String },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("slope fit needs at least {needed} positive points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
