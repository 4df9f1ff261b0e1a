//! orbitlab: slow periodic orbits of x'' + (1/eps) V'(x) = 0 near a critical
//! manifold, their second-order asymptotic expansion, the Lyapunov-Schmidt
//! reduction to loops on the manifold, and rate verification for the
//! geodesic adiabatic limit.

pub mod error;
pub mod expansion;
pub mod geometry;
pub mod harness;
pub mod jets;
pub mod linalg;
pub mod loops;
pub mod num;
pub mod orbit;
pub mod par;
pub mod periodic_ode;
pub mod reduction;

pub use error::{Error, Result};
