//! Simulation and analysis of active (self-oscillating) and passive (driven)
//! magnon-polaritons: stationary states, linear stability, stability phase maps,
//! hysteretic field sweeps and emission spectra, plus calibration fits.

pub mod calib;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod phasemap;
pub mod spectral;
pub mod stability;
pub mod steady;

pub use error::{Error, Result};
