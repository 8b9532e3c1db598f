//! Scalar abstractions.
//!
//! The algebraic routines (collapsing, joint tables, the saturated
//! construction, Fisher enumeration) only need field arithmetic and an
//! ordering, so they are written against [`Scalar`] and run unchanged on
//! `f32`, `f64` and exact [`BigRational`]. Anything that needs logarithms or
//! random draws requires the floating-point refinement [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Field-like scalar: exact rationals or IEEE floats.
pub trait Scalar:
    Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Allowed deviation of a probability vector's sum from one.
    fn sum_tolerance() -> Self;

    /// Relative slack used when comparing probabilities for ties.
    fn tie_slack() -> Self;

    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }
}

/// Floating-point scalar usable by the sampler.
pub trait Real: Scalar + Float + Serialize + DeserializeOwned {
    /// Draws from Gamma(shape, 1).
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self;

    /// Uniform draw on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn sum_tolerance() -> Self {
        1e-10
    }
    fn tie_slack() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn sum_tolerance() -> Self {
        1e-5
    }
    fn tie_slack() -> Self {
        1e-6
    }
}

impl Scalar for BigRational {
    fn sum_tolerance() -> Self {
        BigRational::zero()
    }
    fn tie_slack() -> Self {
        BigRational::zero()
    }
    fn from_usize_exact(v: usize) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

impl Real for f64 {
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive")
            .sample(rng)
    }
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Real for f32 {
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive")
            .sample(rng)
    }
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}

pub(crate) fn abs<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        T::zero() - x
    } else {
        x
    }
}

pub(crate) fn sum<T: Scalar>(xs: &[T]) -> T {
    xs.iter().cloned().fold(T::zero(), |a, b| a + b)
}

/// Checks that `v` is a probability vector within the scalar's tolerance.
pub(crate) fn is_probability_vector<T: Scalar>(v: &[T], tolerance: &T) -> bool {
    if v.iter().any(|x| *x < T::zero()) {
        return false;
    }
    abs(sum(v) - T::one()) <= *tolerance
}

/// Log-sum-exp normalisation of log weights in place; returns `false` when
/// every weight is `-inf`.
pub(crate) fn normalize_log_weights<F: Real>(log_w: &mut [F]) -> bool {
    let max = log_w
        .iter()
        .cloned()
        .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == F::neg_infinity() || max.is_nan() {
        return false;
    }
    let mut total = F::zero();
    for w in log_w.iter_mut() {
        *w = (*w - max).exp();
        total = total + *w;
    }
    for w in log_w.iter_mut() {
        *w = *w / total;
    }
    true
}
