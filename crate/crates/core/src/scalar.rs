//! Scalar abstraction shared by all numerical modules.
//!
//! The physics is written once against [`Real`] and instantiated for `f32`
//! and `f64`. Literal constants go through [`lit`], which keeps the call sites
//! readable without sprinkling `T::from(..).unwrap()` everywhere.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Signed
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Signed
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in target float type")
}

/// Converts an index or count into `T`.
#[inline]
pub fn idx<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in target float type")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Neumaier-compensated accumulator for complex sums.
///
/// Used for the long oscillatory lattice sums, where plain summation loses
/// several digits once the partial sums are much larger than the summands.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: Complex<T>,
    carry: Complex<T>,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: Complex::new(T::zero(), T::zero()),
            carry: Complex::new(T::zero(), T::zero()),
        }
    }

    #[inline]
    pub fn add(&mut self, x: Complex<T>) {
        let (re, cre) = neumaier_step(self.sum.re, self.carry.re, x.re);
        let (im, cim) = neumaier_step(self.sum.im, self.carry.im, x.im);
        self.sum = Complex::new(re, im);
        self.carry = Complex::new(cre, cim);
    }

    pub fn value(&self) -> Complex<T> {
        self.sum + self.carry
    }
}

#[inline]
fn neumaier_step<T: Real>(sum: T, carry: T, x: T) -> (T, T) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        carry + ((sum - t) + x)
    } else {
        carry + ((x - t) + sum)
    };
    (t, c)
}

/// Compensated sum of a real sequence.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for x in values {
        let (s, c) = neumaier_step(sum, carry, x);
        sum = s;
        carry = c;
    }
    sum + carry
}

/// `exp(z) - 1` for complex `z` without cancellation near `z = 0`.
pub fn complex_exp_m1<T: Real>(z: Complex<T>) -> Complex<T> {
    let two = lit::<T>(2.0);
    let half = (z.im / two).sin();
    let re = z.re.exp_m1() * z.im.cos() - two * half * half;
    let im = z.re.exp() * z.im.sin();
    Complex::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
        let mut acc = CompensatedSum::<f64>::new();
        for x in xs {
            acc.add(Complex::new(x, -x));
        }
        assert_eq!(acc.value(), Complex::new(2.0, -2.0));
    }

    #[test]
    fn exp_m1_matches_direct_away_from_zero() {
        let z = Complex::new(-0.3, 1.2);
        let d = complex_exp_m1(z) - (z.exp() - Complex::new(1.0, 0.0));
        assert!(d.norm() < 1e-15);
        let tiny = Complex::new(0.0, 1e-10);
        let e = complex_exp_m1(tiny);
        assert!((e.im - 1e-10).abs() < 1e-25);
        assert!((e.re + 0.5e-20).abs() < 1e-35);
    }
}
