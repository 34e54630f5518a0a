pub mod covstruct;
pub mod error;
pub mod estimate;
pub mod evalharness;
pub mod locfdr;
pub mod math;
pub mod pipeline;
pub mod procedures;
pub mod rng;
pub mod threshold;
pub mod twogroup;
