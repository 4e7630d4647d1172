//! Sparse joint probability mass functions over age tuples.
//!
//! Every exact solver and the empirical estimators report their result as a
//! [`JointPmf`]: mass on age tuples inside a box `{1, ..., box_size}^dims`
//! together with an upper bound on the mass that falls outside the box.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Probability mass over age tuples, truncated to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    dims: usize,
    box_size: u64,
    tail_mass_bound: f64,
    mass: BTreeMap<Vec<u64>, f64>,
}

impl JointPmf {
    /// Builds a pmf from explicit masses. Keys must have length `dims` and
    /// coordinates inside `1..=box_size`; masses must be non-negative.
    pub fn new(
        dims: usize,
        box_size: u64,
        tail_mass_bound: f64,
        mass: BTreeMap<Vec<u64>, f64>,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "must be positive".into(),
            });
        }
        if box_size == 0 {
            return Err(Error::BoxTooSmall { k: 0, min: 1 });
        }
        if !(tail_mass_bound >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tail_mass_bound",
                reason: format!("must be non-negative, got {tail_mass_bound}"),
            });
        }
        for (key, &p) in &mass {
            if key.len() != dims {
                return Err(Error::DimensionMismatch {
                    left: key.len(),
                    right: dims,
                });
            }
            if key.iter().any(|&a| a < 1 || a > box_size) {
                return Err(Error::InvalidParameter {
                    name: "support",
                    reason: format!("tuple {key:?} outside box 1..={box_size}"),
                });
            }
            if !(p >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "mass",
                    reason: format!("negative or NaN mass {p} at {key:?}"),
                });
            }
        }
        Ok(Self {
            dims,
            box_size,
            tail_mass_bound,
            mass,
        })
    }

    /// Number of tracked coordinates.
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Truncation box edge length.
    pub fn box_size(&self) -> u64 {
        self.box_size
    }

    /// Upper bound on the probability mass outside the box.
    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// Mass stored at one tuple (zero when absent).
    pub fn prob(&self, key: &[u64]) -> f64 {
        self.mass.get(key).copied().unwrap_or(0.0)
    }

    /// Total stored mass; at most one, and at least `1 - tail_mass_bound`
    /// for distributions produced by the solvers in this crate.
    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Iterates over `(tuple, mass)` in lexicographic tuple order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u64], f64)> {
        self.mass.iter().map(|(k, &p)| (k.as_slice(), p))
    }

    /// Marginal mass along one axis.
    pub fn marginal(&self, axis: usize) -> Result<BTreeMap<u64, f64>> {
        if axis >= self.dims {
            return Err(Error::DimensionMismatch {
                left: axis,
                right: self.dims,
            });
        }
        let mut out = BTreeMap::new();
        for (key, &p) in &self.mass {
            *out.entry(key[axis]).or_insert(0.0) += p;
        }
        Ok(out)
    }

    /// Total variation distance: half the L1 distance over the union of the
    /// two supports.
    pub fn total_variation(&self, other: &JointPmf) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        let mut l1 = 0.0;
        for (key, &p) in &self.mass {
            l1 += (p - other.prob(key)).abs();
        }
        for (key, &q) in &other.mass {
            if !self.mass.contains_key(key) {
                l1 += q;
            }
        }
        Ok(0.5 * l1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(entries: &[(&[u64], f64)]) -> JointPmf {
        let mass = entries
            .iter()
            .map(|(k, p)| (k.to_vec(), *p))
            .collect::<BTreeMap<_, _>>();
        JointPmf::new(entries[0].0.len(), 100, 0.0, mass).unwrap()
    }

    #[test]
    fn total_variation_of_identical_is_zero() {
        let a = pmf(&[(&[1, 2], 0.5), (&[2, 2], 0.5)]);
        assert_eq!(a.total_variation(&a).unwrap(), 0.0);
    }

    #[test]
    fn total_variation_of_disjoint_is_one() {
        let a = pmf(&[(&[1, 2], 1.0)]);
        let b = pmf(&[(&[2, 3], 1.0)]);
        assert_eq!(a.total_variation(&b).unwrap(), 1.0);
    }

    #[test]
    fn marginal_sums_rows() {
        let a = pmf(&[(&[1, 2], 0.25), (&[1, 3], 0.25), (&[2, 2], 0.5)]);
        let m = a.marginal(0).unwrap();
        assert_eq!(m[&1], 0.5);
        assert_eq!(m[&2], 0.5);
    }

    #[test]
    fn rejects_support_outside_box() {
        let mut mass = BTreeMap::new();
        mass.insert(vec![0u64], 1.0);
        assert!(JointPmf::new(1, 10, 0.0, mass).is_err());
    }

    #[test]
    fn rejects_mismatched_tuple_length() {
        let mut mass = BTreeMap::new();
        mass.insert(vec![1u64, 1], 1.0);
        assert!(JointPmf::new(1, 10, 0.0, mass).is_err());
    }
}
