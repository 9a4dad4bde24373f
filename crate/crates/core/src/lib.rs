//! Corrected BDF-k convolution quadrature for time-fractional evolution
//! equations.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`] exact Laurent-series arithmetic in `s = 1 - ζ`,
//! * [`correction`] derivation and certification of the starting-step
//!   correction coefficients,
//! * [`cq_weights`] floating-point convolution weights of `δ(ζ)^α`,
//! * [`fem1d`] the piecewise-linear Galerkin discretisation on `(0, 1)`,
//! * [`stability`] critical orders and CFL constants for `1 < α < 2`,
//! * [`stepper`] the time-stepping engines,
//! * [`harness`] convergence studies and table/CSV/JSON output.
//!
//! Everything numeric is generic over the scalar: exact code over any
//! [`Field`] (normally [`Rational`]), floating-point code over any [`Real`]
//! (`f32` or `f64`). The aliases at the bottom of this file fix the
//! common choices.

pub mod correction;
pub mod cq_weights;
pub mod error;
pub mod fem1d;
pub mod harness;
pub mod quadrature;
pub mod series;
pub mod stability;
pub mod stepper;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

pub use error::{Error, Result};

/// Exact rational number with arbitrary-precision numerator and denominator.
pub type Rational = BigRational;

/// Coefficient field for the exact series machinery.
pub trait Field: Clone + PartialEq + Debug + Num + Neg<Output = Self> + Send + Sync {
    fn int(n: i64) -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::int(num) / Self::int(den)
    }

    /// Lossy conversion used when exact coefficients feed floating-point code.
    fn to_f64_lossy(&self) -> f64;
}

impl Field for BigRational {
    fn int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Field for f64 {
    fn int(n: i64) -> Self {
        n as f64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn int(n: i64) -> Self {
        n as f32
    }

    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
}

/// Floating-point scalar for weights, FEM assembly and time stepping.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Field
    + rustfft::FftNum
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + Default
{
    /// Literal conversion from `f64`.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    fn from_exact<F: Field>(x: &F) -> Self {
        Self::lit(x.to_f64_lossy())
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Order `k` of a backward differentiation formula, `1 ..= 6`.
///
/// BDF-k is zero-stable only up to `k = 6`, so the bound is part of the type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(transparent)]
pub struct BdfOrder(usize);

impl BdfOrder {
    pub const MAX: usize = 6;

    pub fn new(k: usize) -> Result<Self> {
        if (1..=Self::MAX).contains(&k) {
            Ok(BdfOrder(k))
        } else {
            Err(Error::InvalidOrder {
                k,
                min: 1,
                max: Self::MAX,
            })
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn all() -> impl Iterator<Item = BdfOrder> {
        (1..=Self::MAX).map(BdfOrder)
    }
}

impl Display for BdfOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exact Laurent series in `s = 1 - ζ`.
pub type ExactSeries = series::LaurentSeries<Rational>;
/// Correction coefficients over exact rationals.
pub type ExactCorrectionSet = correction::CorrectionSet<Rational>;
pub type WeightTable64 = cq_weights::WeightTable<f64>;
pub type SpatialSystem64 = fem1d::SpatialSystem<f64>;
pub type GridFunction64 = fem1d::GridFunction<f64>;
pub type ProblemSpec64 = stepper::ProblemSpec<f64>;
pub type SolverRun64<'a> = stepper::SolverRun<'a, f64>;
