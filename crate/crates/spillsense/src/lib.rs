//! File formats, the identity-suite driver and the command-line front end
//! for [`spillsense_core`].

pub mod cli;
pub mod error;
pub mod io;
pub mod network_file;
pub mod observed;
pub mod params_file;
pub mod population_file;
pub mod scenario_file;
pub mod verify;

pub use error::{Failure, FailureResult};
pub use spillsense_core as core;
