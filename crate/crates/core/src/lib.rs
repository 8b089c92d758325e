//! Exact `rho_n` transport costs between stationary finite-alphabet sources,
//! optimal stationary couplings from sliding block codes built on convex and
//! c-concave potentials, and diagnostics for cost functions and gluing.

pub mod ctools;
pub mod equivariant;
pub mod error;
pub mod glue;
pub mod model;
pub mod rhobar;
pub mod transport;

pub use error::{Error, Result};
pub use nalgebra;
pub use model::{
    Alphabet, FieldSpec, JointWindowDistribution, Point, SourceKind, SourceSpec, WindowDistribution,
    DEFAULT_ENUMERATION_CAP,
};
pub use transport::{solve_exact, TransportPlan};
