//! Mean curvature flow of closed submanifolds in space forms.
//!
//! The crate integrates `dF/dt = H` for parametrized surfaces and
//! 3-manifolds of any codimension in hyperbolic space, Euclidean space or a
//! round sphere, and evaluates the curvature quantities that govern
//! pinching, roundness and extinction along the flow.

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod immersion;
mod linalg;
pub mod pinch;
pub mod spaceform;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowTrace, Integrator, Termination};
pub use geometry::{Gauge, GeometryField, InvariantBundle, PointGeometry};
pub use grid::{Grid, ParamDomain, ParamPoint, Topology};
pub use immersion::Immersion;
pub use pinch::{PinchPreset, PinchReport, Regime};
pub use spaceform::{FlatVec, Signature, SpaceForm};
pub use verify::{ConvergenceTable, DistanceReport, Equation, ResidualReport, ShrinkerOracle};
