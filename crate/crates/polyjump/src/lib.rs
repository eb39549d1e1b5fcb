//! File formats, parallel Monte Carlo and the command-line front end for
//! [`polyjump_core`].

pub mod cli;
pub mod controller_file;
pub mod modelfile;
pub mod parallel;
pub mod report;
pub mod sdpa;

pub use modelfile::{load_model, parse_model, save_model, save_model_string, ModelFileError};
