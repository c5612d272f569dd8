#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod distributions;
pub mod estimators;
pub mod lundberg;
pub mod math;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod runoff;
