//! Exact integer weights of the weighted Bergman spaces `A²_n`.
//!
//! The weight `w[n][k]` is the k-th Taylor coefficient of `(1 - x)^{-n}`,
//! i.e. `C(n + k - 1, k)`. Everything is kept in `u128` with checked
//! arithmetic; overflow surfaces as [`Error::Overflow`].

use crate::error::{Error, Result};

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact binomial coefficient `C(n, k)`, zero when `k > n`.
///
/// Multiplicative formula with gcd reduction at every step, so intermediate
/// values never exceed the final result by more than a factor of `k`.
pub fn binomial(n: u128, k: u128) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) / i, reduced so the division stays exact
        let mut num = n - k + i;
        let mut den = i;
        let g = gcd(num, den);
        num /= g;
        den /= g;
        let g = gcd(acc, den);
        let reduced = acc / g;
        den /= g;
        debug_assert_eq!(den, 1);
        acc = reduced.checked_mul(num).ok_or(Error::Overflow { what: "binomial coefficient" })?;
    }
    Ok(acc)
}

/// Table of Bergman weights `w[n][k] = C(n + k - 1, k)` for
/// `0 <= n <= n_max`, `0 <= k <= k_max`.
///
/// Row `n = 0` is the degenerate sequence `(1, 0, 0, ...)` coming from
/// `(1 - x)^0 = 1`; it is stored so the recurrence
/// `w[n][k] - w[n][k-1] = w[n-1][k]` can be checked from `n = 1` on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTable {
    n_max: usize,
    k_max: usize,
    entries: Vec<Vec<u128>>,
}

impl WeightTable {
    pub fn new(n_max: usize, k_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("weight table needs n_max >= 1".into()));
        }
        let mut entries = Vec::with_capacity(n_max + 1);
        entries.push((0..=k_max).map(|k| u128::from(k == 0)).collect());
        for n in 1..=n_max {
            let row = (0..=k_max).map(|k| binomial((n + k - 1) as u128, k as u128)).collect::<Result<Vec<_>>>()?;
            entries.push(row);
        }
        Ok(Self { n_max, k_max, entries })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn covers(&self, n: usize, k: usize) -> bool {
        n <= self.n_max && k <= self.k_max
    }

    /// Exact weight, or `WeightTableTooSmall` when out of range.
    pub fn get(&self, n: usize, k: usize) -> Result<u128> {
        if !self.covers(n, k) {
            return Err(Error::WeightTableTooSmall { n, k, n_max: self.n_max, k_max: self.k_max });
        }
        Ok(self.entries[n][k])
    }

    /// Weight converted to `f64` for the floating-point consumers.
    pub fn get_f64(&self, n: usize, k: usize) -> Result<f64> {
        self.get(n, k).map(|w| w as f64)
    }

    pub fn row(&self, n: usize) -> Option<&[u128]> {
        self.entries.get(n).map(Vec::as_slice)
    }
}

/// Convenience constructor matching the operation name used by the CLI.
pub fn build_weight_table(n_max: usize, k_max: usize) -> Result<WeightTable> {
    WeightTable::new(n_max, k_max)
}
