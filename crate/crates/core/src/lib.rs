//! Rigid-body dynamics of fixed-base revolute chains in spatial vector
//! algebra, with a parameter-linear regressor, least-squares inertial
//! parameter identification and computed-torque control.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod identify;
pub mod io;
mod linalg;
pub mod model;
pub mod regressor;
pub mod sim;
pub mod spatial;
pub mod verify;

pub use error::{Error, Result};
