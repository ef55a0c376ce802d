//! Numerical toolkit for an interacting particle system with double-well
//! confinement and quadratic interaction, its McKean-Vlasov limit, and the
//! Wasserstein-2 functionals used to quantify propagation of chaos.

pub mod error;
pub mod limit;
pub mod linalg;
pub mod model;
pub mod particles;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use limit::{GridDensity, GridSpec};
pub use model::{ModelParams, WjConstants};
pub use particles::{CoupledEnsemble, ParticleEnsemble, SimConfig};
pub use transport::DiscreteMeasure;
