//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// A real scalar the models can be instantiated over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function.
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax of a slice; an empty slice yields an empty vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let Some(max) = logits.iter().copied().reduce(T::max) else {
        return Vec::new();
    };
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest element (first one on ties).
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_bounded() {
        for x in [-40.0f64, -3.0, 0.0, 2.5, 40.0] {
            let s = logistic(x);
            assert!(s > 0.0 && s < 1.0 || x.abs() > 30.0);
            assert!((s + logistic(-x) - 1.0).abs() < 1e-12);
        }
        assert_eq!(logistic(0.0f32), 0.5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0f64, -2.0, 700.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&p), 2);
        assert!(softmax::<f64>(&[]).is_empty());
    }
}
