//! Driven-dissipative spin chains with power-law Lindblad jump operators.
//!
//! The crate covers four levels of description of the same model:
//!
//! * [`model`]: parameters, Kac-normalized power-law couplings and the
//!   dissipation weight `F_eta` that carries the range of the jump operators
//!   into every closed equation of motion.
//! * [`meanfield`] and [`fixedpoints`]: the three-variable mean-field flow,
//!   its steady states, their stability and the `(chi, eta)` phase diagram.
//! * [`cumulant`]: the Gaussian (vanishing third cumulant) closure, both in the
//!   thermodynamic limit and distance-resolved at finite size.
//! * [`exact`]: dense integration of the full master equation for a handful of
//!   spins, used as a brute-force reference for the closures.
//!
//! [`analysis`] works on trajectories (envelope decay, oscillation onset,
//! basins of attraction) and [`ode`] holds the integrators everything above
//! runs on.
//!
//! Time is reported in units of `J t` throughout.

pub mod analysis;
pub mod cumulant;
mod error;
pub mod exact;
pub mod fixedpoints;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod output;
pub mod special;

pub use error::{Error, Partial, Result};
pub use meanfield::{MagState, Trajectory};
pub use model::{CouplingTable, ModelParams};
