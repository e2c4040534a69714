// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod error;
pub mod higher_orders;
pub mod influence;
pub mod ode;
pub mod oracle;
pub mod quadrature;
pub mod rates;
pub mod su_basis;
pub mod system;

pub use error::{Error, Result};

pub use bath::{DampedMode, Environment, GammaProfile, Kernel, SpectralDensity, Thermal};
pub use influence::{InfluenceMatrix, ReducedTrajectory, TimeGrid};
pub use oracle::{FockConfig, ModeRepresentation};
pub use rates::RateReport;
pub use su_basis::{PVector, SuBasis};
pub use system::{Segment, SystemModel};
