#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod energy_model;
pub mod error;
pub mod event_camera;
pub mod geometry;
pub mod grid;
pub mod pgnn;
pub mod planner;
pub mod polynomial;
pub mod scenario;
pub mod sim;
pub mod snn_detector;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use grid::Grid;
