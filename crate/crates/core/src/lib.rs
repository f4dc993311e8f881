pub mod bestresponse;
pub mod cli;
pub mod error;
pub mod normalform;
pub mod numfmt;
pub mod game;
pub mod pwl;
pub mod sgm;

pub use error::{Error, Result};
