//! Trajectory query engine.

pub mod animation;
pub mod district;
pub mod error;
pub mod ingest;
pub mod mesh;
pub mod model;
pub mod script;
pub mod selection;
pub mod selector;
pub mod session;
pub mod wire;

pub use error::{Error, Result};
pub use model::{Aabb, Atom, Dataset, Path, PathId};
pub use session::{Command, Event, Session, Snapshot};
