//! Particle filtering toolkit for non-linear state space models.

// `!(x > 0.0)` is the NaN-rejecting form of the validation guards here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod config;
pub mod error;
pub mod filters;
pub mod forecast;
pub mod kalman;
pub mod math;
pub mod models;
pub mod pmmh;
pub mod rng;
pub mod runner;
pub mod unscented;
