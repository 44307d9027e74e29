//! Discretization of scalar features into equal-width bins. The bin edges
//! come from training-fold data and ship with the model so train and test
//! see the same mapping.

use crate::error::{Error, Result};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub const DEFAULT_N_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub x_min: f64,
    pub x_max: f64,
    pub n_bins: usize,
}

/// Per-feature bin edges, keyed by feature name in schema order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub entries: IndexMap<String, BinEntry>,
}

/// Map `x` to its bin index in `[0, n_bins)`.
///
/// `x' = floor((x - x_min) / x_intv)` with `x_intv = (x_max - x_min) /
/// n_bins`; out-of-range inputs clamp to the boundary bins and a
/// degenerate entry (`x_max == x_min`) maps everything to bin 0.
pub fn bin_dense(x: f64, entry: &BinEntry) -> usize {
    if entry.x_max <= entry.x_min || entry.n_bins <= 1 {
        return 0;
    }
    let interval = (entry.x_max - entry.x_min) / entry.n_bins as f64;
    let idx = ((x - entry.x_min) / interval).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(entry.n_bins - 1)
    }
}

impl BinningSpec {
    pub fn bin(&self, feature: &str, x: f64) -> usize {
        match self.entries.get(feature) {
            Some(entry) => bin_dense(x, entry),
            None => 0,
        }
    }
}

/// Fit per-feature min/max from training-fold feature values.
/// `values_of` yields, per feature name, the observed training values.
pub fn build_binning_spec<'a>(
    features: impl Iterator<Item = (&'a str, &'a [f64])>,
    n_bins: usize,
) -> Result<BinningSpec> {
    let mut entries = IndexMap::new();
    for (name, values) in features {
        if values.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for &v in values {
            x_min = x_min.min(v);
            x_max = x_max.max(v);
        }
        entries.insert(name.to_string(), BinEntry { x_min, x_max, n_bins });
    }
    if entries.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(BinningSpec { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEN: BinEntry = BinEntry {
        x_min: 0.0,
        x_max: 10.0,
        n_bins: 10,
    };

    #[test]
    fn lower_boundary_is_bin_zero() {
        assert_eq!(bin_dense(0.0, &TEN), 0);
    }

    #[test]
    fn upper_boundary_clamps_to_last_bin() {
        assert_eq!(bin_dense(10.0, &TEN), 9);
        assert_eq!(bin_dense(123.0, &TEN), 9);
        assert_eq!(bin_dense(-5.0, &TEN), 0);
    }

    #[test]
    fn interior_value_floors() {
        assert_eq!(bin_dense(5.3, &TEN), 5);
    }

    #[test]
    fn degenerate_entry_maps_to_zero() {
        let entry = BinEntry {
            x_min: 4.0,
            x_max: 4.0,
            n_bins: 10,
        };
        for x in [-1.0, 4.0, 9.0] {
            assert_eq!(bin_dense(x, &entry), 0);
        }
    }

    #[test]
    fn spec_from_single_value_is_degenerate() {
        let values = [7.0];
        let spec = build_binning_spec([("f", &values[..])].into_iter(), 10).unwrap();
        let entry = spec.entries["f"];
        assert_eq!(entry.x_min, 7.0);
        assert_eq!(entry.x_max, 7.0);
        assert_eq!(spec.bin("f", 100.0), 0);
    }

    #[test]
    fn spec_covers_observed_range() {
        let values: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let spec = build_binning_spec([("f", &values[..])].into_iter(), 10).unwrap();
        assert_eq!(spec.entries["f"].x_min, 0.0);
        assert_eq!(spec.entries["f"].x_max, 9.0);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let values = [0.0, 2.5, 9.0];
        let spec = build_binning_spec([("f", &values[..])].into_iter(), 10).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: BinningSpec = serde_json::from_str(&json).unwrap();
        for probe in [-1.0, 0.1, 4.4, 8.9, 42.0] {
            assert_eq!(spec.bin("f", probe), back.bin("f", probe));
        }
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let result = build_binning_spec(std::iter::empty(), 10);
        assert!(matches!(result.unwrap_err(), Error::EmptyTrainingSet));
    }

    #[test]
    fn indices_always_in_range() {
        let values = [-3.0, 8.0];
        let spec = build_binning_spec([("f", &values[..])].into_iter(), 7).unwrap();
        for i in -100..100 {
            let idx = spec.bin("f", i as f64 * 0.37);
            assert!(idx < 7);
        }
    }
}
