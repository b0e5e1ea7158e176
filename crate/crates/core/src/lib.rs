pub mod analysis;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod hilbert;
pub mod models;
pub mod sme;

pub use error::{Error, Result};
