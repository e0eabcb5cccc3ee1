//! Boolean attention masks.

use crate::error::{Error, Result};

/// `allowed(i, j)` means query position `i` may attend key position `j`.
///
/// Every mask satisfies `allowed(i, j) ⟹ j ≤ i` and `allowed(i, i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    len: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    /// The standard lower-triangular mask.
    pub fn causal(len: usize) -> Self {
        let mut allowed = vec![false; len * len];
        for i in 0..len {
            for j in 0..=i {
                allowed[i * len + j] = true;
            }
        }
        Self { len, allowed }
    }

    /// Builds a mask from a predicate and validates it.
    pub fn from_fn(len: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut allowed = vec![false; len * len];
        for i in 0..len {
            for j in 0..len {
                allowed[i * len + j] = f(i, j);
            }
        }
        let mask = Self { len, allowed };
        mask.validate()?;
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.len + j]
    }

    /// Keys visible from query `i`, ascending.
    pub fn row(&self, i: usize) -> Vec<usize> {
        (0..=i).filter(|&j| self.allowed(i, j)).collect()
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.len {
            if !self.allowed(i, i) {
                return Err(Error::Mask(format!("row {i} does not attend to itself")));
            }
            for j in i + 1..self.len {
                if self.allowed(i, j) {
                    return Err(Error::Mask(format!("query {i} attends to future key {j}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_rows() {
        let m = AttentionMask::causal(3);
        assert_eq!(m.row(0), vec![0]);
        assert_eq!(m.row(2), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_future_and_empty_rows() {
        assert!(AttentionMask::from_fn(3, |_, _| true).is_err());
        assert!(AttentionMask::from_fn(3, |i, j| j < i).is_err());
        assert!(AttentionMask::from_fn(3, |i, j| i == j).is_ok());
    }
}
