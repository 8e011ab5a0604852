pub mod balance;
pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod pseudolabel;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
