//! Scalar abstractions shared by scoring, sampling and metric code.
//!
//! Token scores and probabilities are generic over [`Real`] (`f32`/`f64`).
//! Rates derived from counts (IoU, precision, recall, F1) are generic over
//! [`Fraction`], which additionally admits exact rationals so metric
//! identities can be checked without rounding.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point scalar used for token scores and probabilities.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// A scalar that can represent a ratio of two counts.
pub trait Fraction: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// `num / den`; callers guarantee `den > 0`.
    fn from_counts(num: u64, den: u64) -> Self;

    fn to_f64_lossy(&self) -> f64;
}

impl Fraction for f32 {
    fn from_counts(num: u64, den: u64) -> Self {
        num as f32 / den as f32
    }

    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Fraction for f64 {
    fn from_counts(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Fraction for Ratio<u64> {
    fn from_counts(num: u64, den: u64) -> Self {
        Ratio::new(num, den)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Fraction for Ratio<i64> {
    fn from_counts(num: u64, den: u64) -> Self {
        Ratio::new(num as i64, den as i64)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(scores: &[F]) -> Vec<F> {
    let max = scores
        .iter()
        .copied()
        .fold(F::neg_infinity(), |acc, s| if s > acc { s } else { acc });
    if max == F::neg_infinity() {
        return vec![F::zero(); scores.len()];
    }
    let exps: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total = exps.iter().fold(F::zero(), |acc, &e| acc + e);
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0f64, 2.0, 3.0]);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    #[test]
    fn softmax_ignores_masked_entries() {
        let p = softmax(&[f32::NEG_INFINITY, 0.0, f32::NEG_INFINITY]);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn all_masked_gives_zeros() {
        let p = softmax(&[f64::NEG_INFINITY; 3]);
        assert_eq!(p, vec![0.0; 3]);
    }

    #[test]
    fn exact_fraction() {
        let r = <Ratio<u64> as Fraction>::from_counts(2, 6);
        assert_eq!(r, Ratio::new(1, 3));
    }
}
