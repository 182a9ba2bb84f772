pub mod adjoint;
pub mod cli;
pub mod config;
pub mod corrector;
pub mod dump;
pub mod error;
pub mod flux;
pub mod forward;
pub mod grid;
pub mod objective;
pub mod topo;
pub mod validation;

pub use error::{Result, SweError};
