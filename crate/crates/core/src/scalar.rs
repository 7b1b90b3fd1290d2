//! Numeric bounds shared by the alignment and entropy code.
//!
//! Alignment only needs ring operations and an ordering, so it runs over
//! exact rationals as well as floats. The entropy pipeline needs `ln`/`exp`
//! and is restricted to [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};

/// Values an alignment score can be accumulated in.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {}

/// Floating point scalars (`f32`, `f64`).
pub trait Real: Scalar + Float + FromPrimitive {}

impl<T> Real for T where T: Scalar + Float + FromPrimitive {}

pub(crate) fn neg<T: Scalar>(x: T) -> T {
    T::zero() - x
}

pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in target float type")
}
