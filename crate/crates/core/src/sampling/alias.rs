//! Walker/Vose alias table: O(N) construction, O(1) categorical draws.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    /// Probability of keeping column `i` rather than jumping to `alias[i]`.
    keep: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table for `probs`, which must be non-negative and sum to one.
    pub fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        assert!(n >= 1 && n <= u32::MAX as usize, "alias table needs 1..=u32::MAX outcomes");
        let scale = n as f64;
        let mut keep: Vec<f64> = probs.iter().map(|p| p * scale).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &k) in keep.iter().enumerate() {
            if k < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            let remaining = keep[l as usize] - (1.0 - keep[s as usize]);
            keep[l as usize] = remaining;
            if remaining < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Whatever is left is within rounding of a full column.
        for i in small.into_iter().chain(large) {
            keep[i as usize] = 1.0;
            alias[i as usize] = i;
        }
        Self { keep, alias }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.random_range(0..self.keep.len());
        let coin: f64 = rng.random();
        if coin < self.keep[column] {
            column
        } else {
            self.alias[column] as usize
        }
    }

    /// The distribution the table actually samples from.
    pub fn implied_probs(&self) -> Vec<f64> {
        let n = self.keep.len() as f64;
        let mut p: Vec<f64> = self.keep.iter().map(|k| k / n).collect();
        for (i, (&k, &a)) in self.keep.iter().zip(&self.alias).enumerate() {
            if a as usize != i {
                p[a as usize] += (1.0 - k) / n;
            }
        }
        p
    }
}
