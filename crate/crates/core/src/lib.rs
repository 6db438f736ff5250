//! Distributed adaptive Nash equilibrium seeking over communication graphs.
//!
//! Agents keep local estimates of every player's action, run a gradient
//! step on their own block and are pulled toward consensus by a Laplacian
//! coupling whose gains adapt online. Constrained games use tangent-cone
//! projection of the own-block dynamics.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod graph;
pub mod harness;
pub mod par;
pub mod sets;
pub mod solver;

pub use dynamics::{DaiParams, ExtendedState, Flow, FlowKind};
pub use error::{Error, Result};
pub use game::{Game, QuadraticGame, Selection};
pub use graph::{Graph, Laplacian};
pub use par::Parallelism;
pub use sets::ConvexSet;
pub use solver::{IntegratorSpec, Method, Trajectory};
