//! Single-image baseline: sum activations over channels and keep cells above
//! the map's own mean.

use crate::descriptor::DescriptorGrid;
use crate::localize::BinaryMask;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationMap {
    pub image_id: String,
    pub h: usize,
    pub w: usize,
    /// Row-major channel sums.
    pub values: Vec<f64>,
    /// Mean of `values`.
    pub threshold: f64,
}

pub fn aggregation_map(grid: &DescriptorGrid) -> AggregationMap {
    let values: Vec<f64> = grid
        .descriptors()
        .map(|x| x.iter().map(|&v| f64::from(v)).sum())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    // rounding can push the mean of a constant map past its only value
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    AggregationMap {
        image_id: grid.image_id().to_owned(),
        h: grid.h(),
        w: grid.w(),
        values,
        threshold: mean.clamp(lo, hi),
    }
}

/// Cells strictly above the mean, at grid resolution.
pub fn scda_mask(map: &AggregationMap) -> BinaryMask {
    BinaryMask::from_fn(map.w, map.h, |x, y| map.values[y * map.w + x] > map.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, d: usize, data: Vec<f32>) -> DescriptorGrid {
        DescriptorGrid::new("g", h, w, d, h, w, data).unwrap()
    }

    #[test]
    fn depth_sum_of_single_cell() {
        let m = aggregation_map(&grid(1, 1, 3, vec![1.0, 2.0, 3.0]));
        assert_eq!(m.values, vec![6.0]);
        assert_eq!(m.threshold, 6.0);
        assert_eq!(scda_mask(&m).count(), 0);
    }

    #[test]
    fn two_cell_map() {
        let m = aggregation_map(&grid(1, 2, 1, vec![2.0, 4.0]));
        assert_eq!(m.values, vec![2.0, 4.0]);
        assert_eq!(m.threshold, 3.0);
        let mask = scda_mask(&m);
        assert!(!mask.get(0, 0) && mask.get(1, 0));
    }

    #[test]
    fn constant_map_selects_nothing() {
        let m = aggregation_map(&grid(3, 3, 1, vec![0.1; 9]));
        assert_eq!(scda_mask(&m).count(), 0);
    }

    proptest! {
        #[test]
        fn mask_is_never_full(values in proptest::collection::vec(0.0f32..100.0, 1..64)) {
            let n = values.len();
            let m = aggregation_map(&grid(1, n, 1, values));
            prop_assert!(scda_mask(&m).count() < n);
        }

        #[test]
        fn mask_is_scale_free(values in proptest::collection::vec(0.0f32..100.0, 1..64), c in 0.5f32..8.0) {
            let n = values.len();
            let g = grid(1, n, 1, values);
            // powers of two scale exactly in binary floating point
            let c = c.log2().round().exp2();
            let scaled = g.map_values(|v| v * c).unwrap();
            let a = aggregation_map(&g);
            let b = aggregation_map(&scaled);
            prop_assert_eq!(scda_mask(&a), scda_mask(&b));
            prop_assert!((b.threshold - a.threshold * f64::from(c)).abs() <= 1e-9 * b.threshold.abs().max(1.0));
        }
    }
}
