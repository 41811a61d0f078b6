//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], which is any
//! IEEE float with the conversions we need. `f32` and `f64` implement it;
//! concrete aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Convert from `f64`, panicking on failure (cannot fail for f32/f64).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is convertible to every Real")
    }

    /// Widen to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("every Real widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic function.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Stable `ln(1 + e^x)`.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
