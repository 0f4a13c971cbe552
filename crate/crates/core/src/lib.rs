//! Resonator mode coupled to a quantum-circuit refrigerator: photon-assisted
//! tunneling rates, environment coupling strength and temperature, the
//! dynamic effective Lamb shift, drive-power mapping, reflection-trace
//! synthesis and fitting, and the fermionic-bath pole shift.

pub mod config;
pub mod drive;
pub mod environment;
pub mod error;
pub mod lamb_shift;
pub mod matrix_elements;
pub mod matsubara;
pub mod optimize;
pub mod quad;
pub mod reflection;
pub mod selftest;
pub mod sweep;
pub mod tunneling;
pub mod units;

pub use error::{Error, Result};
