//! Bernoulli numbers in the `x/(eˣ-1)` convention, i.e. `B₁ = -1/2`.

use crate::error::CoreError;
use num::rational::BigRational;
use num::traits::{One, ToPrimitive, Zero};
use num::BigInt;
use std::sync::OnceLock;

pub const BERNOULLI_MAX: usize = 32;

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn table() -> &'static Vec<BigRational> {
    static TABLE: OnceLock<Vec<BigRational>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut b: Vec<BigRational> = Vec::with_capacity(BERNOULLI_MAX + 1);
        b.push(BigRational::one());
        for m in 1..=BERNOULLI_MAX {
            // Σ_{j=0..m} C(m+1, j)·B_j = 0
            let mut acc = BigRational::zero();
            for (j, bj) in b.iter().enumerate() {
                acc += BigRational::from_integer(binomial(m + 1, j)) * bj;
            }
            b.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
        }
        b
    })
}

/// Exact Bernoulli number `B_k` for `0 ≤ k ≤ 32`.
pub fn bernoulli(k: usize) -> Result<BigRational, CoreError> {
    if k > BERNOULLI_MAX {
        return Err(CoreError::InvalidParameter {
            name: "k".into(),
            reason: format!("Bernoulli index must be <= {BERNOULLI_MAX}"),
        });
    }
    Ok(table()[k].clone())
}

/// `B_k` as f64; exact rationals round once.
pub(crate) fn bernoulli_f64(k: usize) -> f64 {
    table()[k].to_f64().expect("Bernoulli value fits in f64")
}
