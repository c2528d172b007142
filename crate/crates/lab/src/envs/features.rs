use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Names and bounds of the variables the causal learner sees, plus the
/// conjunction pairs appended as derived features.
///
/// A conjunction feature for a pair `(i, j)` is 1 when both base features are
/// positive and 0 otherwise; derived features always come after the base
/// features, so the total feature count is `base + conjunction_pairs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub names: Vec<String>,
    pub min_val: Vec<f64>,
    pub max_val: Vec<f64>,
    pub conjunction_pairs: Vec<(usize, usize)>,
}

impl FeatureSpec {
    /// Builds a spec from base feature definitions and conjunction pairs.
    /// Conjunction features are named `<a>_and_<b>` and bounded by [0, 1].
    pub fn new(base: Vec<(String, f64, f64)>, conjunction_pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n_base = base.len();
        let mut names = Vec::with_capacity(n_base + conjunction_pairs.len());
        let mut min_val = Vec::with_capacity(names.capacity());
        let mut max_val = Vec::with_capacity(names.capacity());
        for (name, lo, hi) in base {
            if lo > hi {
                return Err(LabError::Config(format!("feature {name}: min {lo} > max {hi}")));
            }
            names.push(name);
            min_val.push(lo);
            max_val.push(hi);
        }
        for &(i, j) in &conjunction_pairs {
            if i >= n_base || j >= n_base {
                return Err(LabError::Config(format!(
                    "conjunction pair ({i}, {j}) out of range for {n_base} base features"
                )));
            }
            names.push(format!("{}_and_{}", names[i], names[j]));
            min_val.push(0.0);
            max_val.push(1.0);
        }
        Ok(Self { names, min_val, max_val, conjunction_pairs })
    }

    /// Total number of features, base plus derived.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of base features (before conjunction augmentation).
    pub fn n_base(&self) -> usize {
        self.names.len() - self.conjunction_pairs.len()
    }

    /// Index of a feature by name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Appends conjunction features to the base values and clamps everything
    /// to the declared bounds.
    pub fn augment(&self, base: &[f64]) -> Result<FeatureVector> {
        if base.len() != self.n_base() {
            return Err(LabError::Dimension { expected: self.n_base(), got: base.len() });
        }
        let mut values = Vec::with_capacity(self.len());
        values.extend_from_slice(base);
        for &(i, j) in &self.conjunction_pairs {
            let on = base[i] > 0.0 && base[j] > 0.0;
            values.push(if on { 1.0 } else { 0.0 });
        }
        for (k, v) in values.iter_mut().enumerate() {
            *v = v.clamp(self.min_val[k], self.max_val[k]);
        }
        Ok(FeatureVector { values })
    }
}

/// One extracted feature vector; every value lies within the governing
/// spec's bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> FeatureSpec {
        FeatureSpec::new(
            vec![
                ("keys".into(), 0.0, 3.0),
                ("food".into(), 0.0, 1.0),
            ],
            vec![(0, 1)],
        )
        .unwrap()
    }

    #[test]
    fn conjunction_zero_when_either_side_zero() {
        let s = spec();
        let f = s.augment(&[0.0, 0.0]).unwrap();
        assert_eq!(f.values, vec![0.0, 0.0, 0.0]);
        let f = s.augment(&[2.0, 0.0]).unwrap();
        assert_eq!(f.values[2], 0.0);
    }

    #[test]
    fn conjunction_is_indicator_not_product() {
        let s = spec();
        let f = s.augment(&[2.0, 1.0]).unwrap();
        assert_eq!(f.values[2], 1.0);
    }

    #[test]
    fn values_clamped_to_bounds() {
        let s = spec();
        let f = s.augment(&[5.0, -1.0]).unwrap();
        assert_eq!(f.values[0], 3.0);
        assert_eq!(f.values[1], 0.0);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(FeatureSpec::new(vec![("x".into(), 1.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn out_of_range_pair_rejected() {
        assert!(FeatureSpec::new(vec![("x".into(), 0.0, 1.0)], vec![(0, 3)]).is_err());
    }
}
