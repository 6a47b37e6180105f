//! Lyapunov spectra, joint splittings and entropy formulas for pairs of
//! commuting maps and their i.i.d. random compositions.

pub mod config;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod orbitspace;
pub mod registry;
pub mod report;
pub mod runner;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
