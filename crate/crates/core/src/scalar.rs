//! Scalar abstraction shared by the rate tables, the moment recursions and the
//! exact oracle.
//!
//! Everything that is pure arithmetic on rates is written against [`Scalar`], so
//! the same code runs in `f64`, `f32` and exact rational arithmetic. Transcendental
//! work (log-gamma, quadrature, Monte Carlo) stays in `f64`.

use std::fmt::{Debug, Display};

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Clone + Debug + Display + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Whether arithmetic is exact; exact types skip compensated summation.
    const EXACT: bool;

    /// Converts a (finite) real parameter. Exact types convert the binary value exactly.
    fn from_real(x: f64) -> Self;

    fn to_real(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn powu(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_real(x: f64) -> Self {
        x
    }

    fn powu(&self, e: u32) -> Self {
        self.powi(e as i32)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_real(x: f64) -> Self {
        x as f32
    }

    fn powu(&self, e: u32) -> Self {
        self.powi(e as i32)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_real(x: f64) -> Self {
        BigRational::from_float(x).expect("finite real parameter")
    }

    fn to_real(&self) -> f64 {
        // Numerator and denominator may each overflow f64; divide as integers with
        // 64 extra bits and rescale.
        let num = self.numer().abs();
        let den = self.denom();
        if num.bits() == 0 {
            return 0.0;
        }
        let shift = den.bits() as i64 - num.bits() as i64 + 64;
        let quotient = if shift >= 0 { (num << shift as usize) / den } else { num / (den << (-shift) as usize) };
        let magnitude = libm::ldexp(quotient.to_f64().unwrap_or(f64::INFINITY), (-shift).clamp(-1_000_000, 1_000_000) as i32);
        if self.is_negative() {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Binomial coefficient in the scalar type, by the multiplicative formula.
pub fn binomial<T: Scalar>(n: u64, k: u64) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * T::from_count(n - i) / T::from_count(i + 1);
    }
    acc
}

/// Kahan-Babuska (Neumaier) summation; for exact types the compensation stays zero
/// and is skipped.
#[derive(Debug, Clone)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: T) {
        if T::EXACT {
            self.sum = self.sum.clone() + x;
            return;
        }
        let t = self.sum.clone() + x.clone();
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry.clone() + ((self.sum.clone() - t.clone()) + x);
        } else {
            self.carry = self.carry.clone() + ((x - t.clone()) + self.sum.clone());
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum.clone() + self.carry.clone()
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn binomials_agree_across_scalars() {
        assert_eq!(binomial::<f64>(10, 3), 120.0);
        assert_eq!(binomial::<f64>(3, 5), 0.0);
        let exact: BigRational = binomial(40, 20);
        assert_eq!(exact, BigRational::from_integer(BigInt::from(137_846_528_820u64)));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::<f64>::new();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-15).abs() < 1e-25);
    }

    #[test]
    fn rational_to_real_handles_huge_parts() {
        let big = BigRational::new(BigInt::from(3) << 2000usize, BigInt::from(1) << 2000usize);
        assert_eq!(big.to_real(), 3.0);
        let tiny = BigRational::new(BigInt::from(1), BigInt::from(7));
        assert!((tiny.to_real() - 1.0 / 7.0).abs() < 1e-17);
    }
}
