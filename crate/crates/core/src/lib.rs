//! Steady subsonic Euler–Poisson flow in a rectangular nozzle extended
//! periodically to `[0,1] × T²`.
//!
//! The solver builds a 1-D subsonic background profile by phase-plane
//! integration ([`background`]) and then finds the perturbation
//! `W = (s - s₀, u₂/u₁, u₃/u₁, B - B₀, φ - φ₀)` as the fixed point of a
//! three-step map ([`fixpoint`]): transport of the Bernoulli function along
//! particle paths, a coupled elliptic solve for the log-density and potential
//! perturbations ([`elliptic`]), and characteristic integration of the flow
//! angles ([`transport`]). [`verify`] checks reconstructed flows against the
//! original conservation laws and the derived identities.

pub mod background;
pub mod boundary;
pub mod elliptic;
pub mod error;
pub mod fixpoint;
pub mod gas;
pub mod grid;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
