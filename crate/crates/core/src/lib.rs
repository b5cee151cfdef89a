//! Reduced-order modeling of parametric 1D Burgers flow with a latent linear
//! ODE and Gaussian-process coefficient interpolation.

pub mod autoencoder;
pub mod commands;
pub mod error;
pub mod fom;
pub mod gp;
pub mod greedy;
pub mod io;
pub mod par;
pub mod rng;
pub mod rom;
pub mod sindy;

pub use error::{Error, Result};
