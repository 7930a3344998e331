//! Scalar abstraction so the whole simulator runs on `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftNum;
use serde::Serialize;

/// Floating-point scalar used throughout the crate.
///
/// `of` exists so numeric literals stay readable in generic code:
/// `T::of(0.5)` instead of `T::from_f64(0.5).unwrap()`.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + FftNum
    + SampleUniform
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Serialize
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in scalar")
    }

    /// One draw from N(0, 1) on this scalar's own precision.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
