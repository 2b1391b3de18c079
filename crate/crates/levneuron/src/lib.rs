//! Active learning for single neuron models `min_w ||f(Xw) - y||^2` via
//! statistical leverage score sampling, together with the synthetic and
//! parametric ODE/PDE experiments that exercise it.

pub mod error;
pub mod features;
pub mod fit;
pub mod harness;
pub mod leverage;
pub mod neuron;
pub mod qoi_sims;

pub use error::{Error, Result};
