//! From a per-cell score map to one bounding box: nearest-neighbour
//! upsampling to image resolution, strict thresholding, the largest
//! 8-connected component, and its enclosing rectangle.

use crate::bbox::BoundingBox;
use crate::descriptor::DescriptorGrid;
use crate::error::{Error, Result};
use crate::scda::{aggregation_map, scda_mask};
use crate::transform::{DdtModel, IndicatorMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data does not match {width}x{height}");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.contains(&true)
    }
}

/// Upsamples a row-major `h x w` map to `img_h x img_w`; pixel (y, x) takes
/// cell (⌊y·h/img_h⌋, ⌊x·w/img_w⌋).
pub fn resize_nearest<T: Copy>(values: &[T], h: usize, w: usize, img_h: usize, img_w: usize) -> Vec<T> {
    assert_eq!(values.len(), h * w);
    let cols: Vec<usize> = (0..img_w).map(|x| x * w / img_w).collect();
    let mut out = Vec::with_capacity(img_h * img_w);
    for y in 0..img_h {
        let row = &values[(y * h / img_h) * w..][..w];
        out.extend(cols.iter().map(|&c| row[c]));
    }
    out
}

pub fn positive_mask(values: &[f64], width: usize, height: usize, threshold: f64) -> BinaryMask {
    BinaryMask::new(width, height, values.iter().map(|&v| v > threshold).collect())
}

/// Largest 8-connected component, or `None` for an empty mask. Equal sizes
/// resolve to the component whose first pixel comes first in row-major order.
pub fn largest_connected_component(mask: &BinaryMask) -> Option<BinaryMask> {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut stack = Vec::new();
    let mut next_label = 0u32;
    let mut best: Option<(usize, u32)> = None;

    for seed in 0..w * h {
        if !mask.data[seed] || labels[seed] != 0 {
            continue;
        }
        next_label += 1;
        labels[seed] = next_label;
        stack.push(seed);
        let mut size = 0usize;
        while let Some(p) = stack.pop() {
            size += 1;
            let (px, py) = (p % w, p / w);
            for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask.data[q] && labels[q] == 0 {
                        labels[q] = next_label;
                        stack.push(q);
                    }
                }
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, next_label));
        }
    }

    best.map(|(_, label)| BinaryMask::new(w, h, labels.iter().map(|&l| l == label).collect()))
}

/// Tightest rectangle around every set pixel.
pub fn bounding_box(mask: &BinaryMask) -> Result<BoundingBox> {
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.data.iter().enumerate().filter(|(_, &b)| b) {
        let (x, y) = (i % mask.width, i / mask.width);
        extent = Some(match extent {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) =
        extent.ok_or_else(|| Error::InvalidArgument("bounding box of an empty mask".into()))?;
    Ok(BoundingBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

fn box_of_largest(mask: &BinaryMask) -> Result<Option<BoundingBox>> {
    largest_connected_component(mask)
        .map(|c| bounding_box(&c))
        .transpose()
}

/// Box for an indicator map, thresholded at zero after upsampling.
pub fn localize_map(map: &IndicatorMap) -> Result<Option<BoundingBox>> {
    if !map.values.iter().any(|&v| v > 0.0) {
        return Ok(None);
    }
    let resized = resize_nearest(&map.values, map.h, map.w, map.img_h, map.img_w);
    box_of_largest(&positive_mask(&resized, map.img_w, map.img_h, 0.0))
}

/// Box for a grid-resolution mask (the baseline thresholds before
/// upsampling).
pub fn localize_grid_mask(mask: &BinaryMask, img_h: usize, img_w: usize) -> Result<Option<BoundingBox>> {
    if mask.is_empty() {
        return Ok(None);
    }
    let resized = resize_nearest(mask.as_slice(), mask.height, mask.width, img_h, img_w);
    box_of_largest(&BinaryMask::new(img_w, img_h, resized))
}

#[derive(Debug, Clone, Copy)]
pub enum Localizer<'a> {
    Ddt(&'a DdtModel),
    Scda,
}

pub fn localize_image(grid: &DescriptorGrid, localizer: Localizer<'_>) -> Result<Option<BoundingBox>> {
    match localizer {
        Localizer::Ddt(model) => localize_map(&model.indicator_map(grid, 1)?),
        Localizer::Scda => {
            let map = aggregation_map(grid);
            localize_grid_mask(&scda_mask(&map), grid.img_h(), grid.img_w())
        }
    }
}
