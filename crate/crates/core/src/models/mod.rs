//! Concrete systems.

pub mod coupled;
pub mod planar;
pub mod stick_slip;
