//! Decentralized deployment of a J2-perturbed satellite swarm into a
//! coplanar, equidistant formation.

pub mod dynamics;
pub mod error;
pub mod frames;
pub mod graph;
pub mod io;
pub mod grouping;
pub mod relorbit;
pub mod sim;
pub mod stabilizer;
pub mod targets;

pub use error::{Error, Result};
