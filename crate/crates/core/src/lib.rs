#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod convspec;
pub mod error;
pub mod linalg;
pub mod network;
pub mod norms;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
