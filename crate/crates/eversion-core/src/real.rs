//! Scalar abstraction for the whole crate.
//!
//! Everything geometric is generic over [`Real`], which bundles the nalgebra
//! field operations with the conversions we need for tolerances and I/O.
//! `f32` and `f64` are the two implementations; the crate root exposes
//! concrete aliases built on `f64`, which is what the pipeline uses.

use num_traits::cast::{FromPrimitive, ToPrimitive};

/// Scalar type for mesh positions, energies and tolerances.
pub trait Real:
    nalgebra::RealField
    + Copy
    + Default
    + num_traits::Num
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::str::FromStr
    + Send
    + Sync
    + 'static
{
    /// Shorthand for pulling literals and tolerances into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable in scalar type")
    }

    /// Lossy view as f64, used for reporting and text output.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Free-function form of [`Real::of`]; reads better in long arithmetic.
pub fn real<T: Real>(v: f64) -> T {
    T::of(v)
}

/// Deterministic pairwise (tree) summation.
///
/// All metric and energy sums in the crate go through this so that results
/// do not depend on incidental evaluation order, and so that long sums do not
/// lose precision linearly.
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        n if n <= 8 => {
            let mut acc = values[0];
            for v in &values[1..] {
                acc += *v;
            }
            acc
        }
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Pairwise sum of `f(i)` for `i in 0..n` without allocating.
pub fn pairwise_sum_with<T: Real, F: Fn(usize) -> T>(n: usize, f: &F) -> T {
    fn go<T: Real, F: Fn(usize) -> T>(lo: usize, hi: usize, f: &F) -> T {
        match hi - lo {
            0 => T::zero(),
            1 => f(lo),
            len if len <= 8 => {
                let mut acc = f(lo);
                for i in lo + 1..hi {
                    acc += f(i);
                }
                acc
            }
            _ => {
                let mid = lo + (hi - lo) / 2;
                go(lo, mid, f) + go(mid, hi, f)
            }
        }
    }
    go(0, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_sequential_on_smalls() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.125).collect();
        let seq: f64 = xs.iter().sum();
        assert_eq!(pairwise_sum(&xs), seq); // exact: all values are dyadic
        assert_eq!(pairwise_sum_with(xs.len(), &|i| xs[i]), seq);
    }

    #[test]
    fn pairwise_is_deterministic() {
        let xs: Vec<f64> =
            (0..1023u64).map(|i| ((i * 2654435761) % 1000) as f64 * 1e-3).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a, b);
    }
}
