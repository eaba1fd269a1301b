pub mod actuarial;
pub mod banded;
pub mod dynamics;
pub mod error;
pub mod gordon_loeb;
pub mod hawkes;
pub mod hjb;
pub mod numeric;
pub mod persist;
pub mod poisson;
pub mod radau;
pub mod rng;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
