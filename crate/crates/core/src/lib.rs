//! Partial, conditional and exact symmetries of differential systems.
//!
//! The crate is organised bottom-up: [`expr`] is the exact expression kernel,
//! [`jet`] adds total derivatives and prolongations, [`engine`] runs the
//! symmetry chains, [`verify`] checks solution families numerically and
//! symbolically, and [`dsl`] reads problem files and writes reports.

pub mod expr;
pub mod jet;
pub mod engine;
pub mod verify;
pub mod dsl;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar used by every numeric routine.
pub trait Scalar: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use expr::{Expr, Rational, Symbol};

/// Grid samples and trajectories at the precision the reports use.
pub type Grid64 = verify::Grid<f64>;
pub type Trajectory64 = verify::Trajectory<f64>;
