//! Geometric gait design for planar legged systems under the no-slip
//! contact constraint.

pub mod error;
pub mod export;
pub mod gait;
pub mod model;
pub mod se2;
pub mod shapefield;

pub use error::{Error, Result};
pub use model::{ContactState, LegModule, LocalConnection, ModelSpec, ShapePoint};
pub use se2::{SE2Velocity, SE2};
pub use shapefield::{FlowPath, ReducedShapeSubspace, ShapeField, Singularity, SingularityKind};
