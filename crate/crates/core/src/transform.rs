//! Set-level descriptor transform: principal directions of all descriptors
//! in a set and the per-image indicator maps they induce.
//!
//! Projecting each centered descriptor onto the leading direction gives an
//! `h x w` indicator map per image. Positive cells correlate with what the
//! images share; the direction's sign is fixed so that positive cells are the
//! minority across the whole set, since the shared object covers less of each
//! image than the background does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorGrid, DescriptorSet};
use crate::error::{Error, Result};
use crate::linalg::{compute_statistics, top_eigenpairs_with, EigenPair, SetStatistics, SolverOptions};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub components: usize,
    pub solver: SolverOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            components: 1,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DdtModel {
    stats: SetStatistics,
    components: Vec<EigenPair>,
    sign_flips: Vec<i8>,
    min_relative_gap: Option<f64>,
    degenerate: bool,
}

/// Fits `k` components over the whole set.
pub fn fit(set: &DescriptorSet, k: usize) -> Result<DdtModel> {
    fit_with(
        set,
        &FitOptions {
            components: k,
            ..Default::default()
        },
    )
}

pub fn fit_with(set: &DescriptorSet, opts: &FitOptions) -> Result<DdtModel> {
    let stats = compute_statistics(set)?;
    DdtModel::from_statistics(stats, set, opts)
}

impl DdtModel {
    /// Builds a model from precomputed statistics of `set`.
    pub fn from_statistics(
        stats: SetStatistics,
        set: &DescriptorSet,
        opts: &FitOptions,
    ) -> Result<Self> {
        if set.d() != stats.d() {
            return Err(Error::InvalidArgument(format!(
                "statistics have d={} but set has d={}",
                stats.d(),
                set.d()
            )));
        }
        let decomposition = top_eigenpairs_with(stats.cov(), opts.components, &opts.solver)?;
        let sign_flips = decomposition
            .pairs
            .iter()
            .map(|pair| orient_sign(&pair.vector, stats.mean(), set))
            .collect();
        Ok(Self {
            stats,
            components: decomposition.pairs,
            sign_flips,
            min_relative_gap: decomposition.min_relative_gap,
            degenerate: decomposition.degenerate,
        })
    }

    pub fn d(&self) -> usize {
        self.stats.d()
    }

    pub fn stats(&self) -> &SetStatistics {
        &self.stats
    }

    pub fn mean(&self) -> &[f64] {
        self.stats.mean()
    }

    /// Eigenpairs in canonical sign, descending by eigenvalue.
    pub fn components(&self) -> &[EigenPair] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.value).collect()
    }

    pub fn sign_flips(&self) -> &[i8] {
        &self.sign_flips
    }

    pub fn min_relative_gap(&self) -> Option<f64> {
        self.min_relative_gap
    }

    /// True when the solver accepted a degenerate spectrum on request.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Direction of component `k` (1-based) after semantic orientation.
    pub fn oriented_direction(&self, k: usize) -> Result<Vec<f64>> {
        let idx = self.component_index(k)?;
        let flip = f64::from(self.sign_flips[idx]);
        Ok(self.components[idx].vector.iter().map(|v| v * flip).collect())
    }

    fn component_index(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.components.len() {
            return Err(Error::InvalidArgument(format!(
                "component {k} outside 1..={}",
                self.components.len()
            )));
        }
        Ok(k - 1)
    }

    /// Indicator map of component `k` (1-based) for one grid.
    pub fn indicator_map(&self, grid: &DescriptorGrid, k: usize) -> Result<IndicatorMap> {
        if grid.d() != self.d() {
            return Err(Error::DimensionMismatch {
                first: "model".into(),
                first_d: self.d(),
                second: grid.image_id().to_owned(),
                second_d: grid.d(),
            });
        }
        let direction = self.oriented_direction(k)?;
        Ok(IndicatorMap {
            image_id: grid.image_id().to_owned(),
            component: k,
            h: grid.h(),
            w: grid.w(),
            img_h: grid.img_h(),
            img_w: grid.img_w(),
            values: project(grid, self.mean(), &direction),
        })
    }
}

/// `directionᵀ (x − mean)` for every cell of `grid`, row-major.
pub fn project(grid: &DescriptorGrid, mean: &[f64], direction: &[f64]) -> Vec<f64> {
    grid.descriptors()
        .map(|x| {
            x.iter()
                .zip(mean)
                .zip(direction)
                .map(|((&v, &m), &u)| u * (f64::from(v) - m))
                .sum()
        })
        .collect()
}

/// Returns −1 when strictly positive projections outnumber strictly negative
/// ones across the whole set, +1 otherwise (ties included).
pub fn orient_sign(direction: &[f64], mean: &[f64], set: &DescriptorSet) -> i8 {
    let (pos, neg) = set
        .grids()
        .par_iter()
        .map(|g| {
            project(g, mean, direction)
                .into_iter()
                .fold((0u64, 0u64), |(p, n), v| {
                    (p + u64::from(v > 0.0), n + u64::from(v < 0.0))
                })
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if pos > neg {
        -1
    } else {
        1
    }
}

/// Projection values of one image onto one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMap {
    pub image_id: String,
    /// 1-based component index.
    pub component: usize,
    pub h: usize,
    pub w: usize,
    pub img_h: usize,
    pub img_w: usize,
    /// Row-major `h x w`.
    pub values: Vec<f64>,
}

impl IndicatorMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.w + col]
    }

    /// Values scaled by the largest magnitude into [−1, 1]; display only.
    pub fn normalized(&self) -> Vec<f64> {
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| v / peak).collect()
    }
}

/// Number of strictly positive cells; zero marks an image with no trace of
/// the common object.
pub fn noise_score(map: &IndicatorMap) -> u64 {
    map.values.iter().filter(|&&v| v > 0.0).count() as u64
}

/// Positive-cell count divided by the cell count, for mixed resolutions.
pub fn normalized_noise_score(map: &IndicatorMap) -> f64 {
    noise_score(map) as f64 / (map.h * map.w) as f64
}
