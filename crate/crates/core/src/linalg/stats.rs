use rayon::prelude::*;

use super::SymMatrix;
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// Descriptors per reduction leaf. Leaf boundaries depend only on the data,
/// so the summation tree (and every bit of the result) is the same for any
/// thread count.
const LEAF_LEN: usize = 8192;
/// Rows per centered panel fed to the Gram kernel.
const PANEL_ROWS: usize = 256;
/// Column tile width for the upper-triangular Gram blocks.
const TILE: usize = 128;

/// Population mean and covariance over every descriptor of a set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetStatistics {
    count: u64,
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl SetStatistics {
    pub fn new(count: u64, mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptySet);
        }
        if mean.len() != cov.dim() {
            return Err(Error::InvalidArgument(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        Ok(Self { count, mean, cov })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }
}

/// A contiguous run of cells inside one grid.
#[derive(Debug, Clone, Copy)]
struct Span {
    grid: usize,
    start: usize,
    end: usize,
}

/// Splits the concatenated descriptor sequence into leaves of `LEAF_LEN`.
fn leaves(set: &DescriptorSet) -> Vec<Vec<Span>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut filled = 0;
    for (gi, grid) in set.grids().iter().enumerate() {
        let mut start = 0;
        let cells = grid.cell_count();
        while start < cells {
            let take = (LEAF_LEN - filled).min(cells - start);
            current.push(Span {
                grid: gi,
                start,
                end: start + take,
            });
            filled += take;
            start += take;
            if filled == LEAF_LEN {
                out.push(std::mem::take(&mut current));
                filled = 0;
            }
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Pairwise reduction in fixed order: (0,1), (2,3), ... until one remains.
fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut it = parts.into_iter();
        let mut next = Vec::new();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

fn leaf_sum(set: &DescriptorSet, spans: &[Span], d: usize) -> Vec<f64> {
    let mut sum = vec![0.0f64; d];
    for span in spans {
        let grid = &set.grids()[span.grid];
        for x in grid.data()[span.start * d..span.end * d].chunks_exact(d) {
            for (s, &v) in sum.iter_mut().zip(x) {
                *s += f64::from(v);
            }
        }
    }
    sum
}

/// Upper triangle of Σ (x − mean)(x − mean)ᵀ over one leaf.
fn leaf_gram(set: &DescriptorSet, spans: &[Span], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let mut gram = vec![0.0f64; d * d];
    let mut panel = Vec::with_capacity(PANEL_ROWS * d);

    let mut flush = |panel: &mut Vec<f64>| {
        let rows = panel.len() / d;
        if rows > 0 {
            gram_update_upper(&mut gram, panel, rows, d);
        }
        panel.clear();
    };

    for span in spans {
        let grid = &set.grids()[span.grid];
        for x in grid.data()[span.start * d..span.end * d].chunks_exact(d) {
            panel.extend(x.iter().zip(mean).map(|(&v, &m)| f64::from(v) - m));
            if panel.len() == PANEL_ROWS * d {
                flush(&mut panel);
            }
        }
    }
    flush(&mut panel);
    gram
}

/// `gram[I, J] += panel[:, I]ᵀ panel[:, J]` for every column tile pair I ≤ J.
fn gram_update_upper(gram: &mut [f64], panel: &[f64], rows: usize, d: usize) {
    let tiles: Vec<(usize, usize)> = (0..d)
        .step_by(TILE)
        .map(|s| (s, TILE.min(d - s)))
        .collect();
    for (ti, &(i0, iw)) in tiles.iter().enumerate() {
        for &(j0, jw) in &tiles[ti..] {
            // SAFETY: all offsets and strides stay inside `panel` (rows x d)
            // and `gram` (d x d); the two buffers do not alias.
            unsafe {
                matrixmultiply::dgemm(
                    iw,
                    rows,
                    jw,
                    1.0,
                    panel.as_ptr().add(i0),
                    1,
                    d as isize,
                    panel.as_ptr().add(j0),
                    d as isize,
                    1,
                    1.0,
                    gram.as_mut_ptr().add(i0 * d + j0),
                    d as isize,
                    1,
                );
            }
        }
    }
}

/// Mean and population covariance (divisor K) of all descriptors in `set`.
///
/// Two passes: the mean first, then centered outer products. Each pass sums
/// fixed-size leaves in parallel on the current rayon pool and merges them
/// with a fixed pairwise tree.
pub fn compute_statistics(set: &DescriptorSet) -> Result<SetStatistics> {
    let count = set.descriptor_count()?;
    if count == 0 {
        return Err(Error::EmptySet);
    }
    let d = set.d();
    let leaves = leaves(set);
    let k = count as f64;

    let sums: Vec<Vec<f64>> = leaves.par_iter().map(|l| leaf_sum(set, l, d)).collect();
    let mean: Vec<f64> = tree_sum(sums).into_iter().map(|s| s / k).collect();

    let grams: Vec<Vec<f64>> = leaves
        .par_iter()
        .map(|l| leaf_gram(set, l, &mean))
        .collect();
    let mut cov = tree_sum(grams);
    for v in &mut cov {
        *v /= k;
    }
    SetStatistics::new(count, mean, SymMatrix::from_upper(d, cov))
}
