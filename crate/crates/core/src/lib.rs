//! Desk-scale quadrotor navigation: plane segmentation of body-frame point
//! clouds by scalable sparse subspace clustering, and a penalty-based NMPC
//! that keeps the vehicle away from the extracted planes while tracking
//! waypoints with entropy-adaptive weights.

pub mod clustering;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod nmpc;
pub mod sim;

pub use error::{Error, Result};
