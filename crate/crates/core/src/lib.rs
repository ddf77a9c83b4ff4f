//! Stability certificates for positive linear systems in feedback with
//! feedforward neural-network controllers, under interval uncertainty and
//! time delays.

pub mod certificate;
pub mod error;
pub mod ffnn;
pub mod lp;
pub mod lure;
pub mod matrix;
pub mod monte_carlo;
pub mod sector;
pub mod sim;

pub use error::{Error, Result};
