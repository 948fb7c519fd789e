//! Whole-set localization run and its JSON results document.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::eval::Scored;
use crate::linalg::SolverOptions;
use crate::localize::{localize_grid_mask, localize_map};
use crate::scda::{aggregation_map, scda_mask};
use crate::transform::{fit_with, noise_score, normalized_noise_score, FitOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ddt,
    Scda,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub method: Method,
    pub components: usize,
    pub allow_degenerate: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            method: Method::Ddt,
            components: 1,
            allow_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub k: usize,
    pub d: usize,
    pub descriptor_count: u64,
    pub eigenvalues: Vec<f64>,
    pub sign_flips: Vec<i8>,
    pub min_relative_gap: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Pixel (y, x) reads cell (⌊y·h/img_h⌋, ⌊x·w/img_w⌋).
    pub resize: String,
    pub connectivity: u8,
    /// "0" for indicator maps, "mean" for aggregation maps.
    pub threshold: String,
    pub noise_score: String,
}

/// Indicator maps of one image, one row-major `h x w` array per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMaps {
    pub h: usize,
    pub w: usize,
    pub components: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub noise_score: u64,
    pub noise_score_normalized: f64,
    pub img_h: usize,
    pub img_w: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<ImageMaps>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    #[serde(default)]
    pub load: f64,
    #[serde(default)]
    pub fit: f64,
    #[serde(default)]
    pub transform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub schema_version: u32,
    pub method: Method,
    pub model: Option<ModelSummary>,
    pub metadata: RunMetadata,
    pub images: Vec<ImageResult>,
    /// Kept last so everything before it is reproducible byte for byte.
    pub timing_ms: Timing,
}

impl RunResults {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let results: RunResults =
            serde_json::from_str(text).map_err(|e| Error::json("results", e))?;
        if results.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported results schema_version {}",
                results.schema_version
            )));
        }
        Ok(results)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path.display().to_string(), source),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn predictions(&self) -> Vec<Scored> {
        self.images
            .iter()
            .map(|i| Scored {
                image_id: i.image_id.clone(),
                bbox: i.bbox,
                noise_score: i.noise_score,
            })
            .collect()
    }

    pub fn scores(&self, normalized: bool) -> BTreeMap<String, f64> {
        self.images
            .iter()
            .map(|i| {
                let s = if normalized {
                    i.noise_score_normalized
                } else {
                    i.noise_score as f64
                };
                (i.image_id.clone(), s)
            })
            .collect()
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Localizes every image of `set`. Per-image work runs on the current rayon
/// pool; output order follows the set.
pub fn run(set: &DescriptorSet, opts: &RunOptions) -> Result<RunResults> {
    if opts.components == 0 {
        return Err(Error::InvalidArgument("components must be >= 1".into()));
    }
    match opts.method {
        Method::Ddt => run_ddt(set, opts),
        Method::Scda => run_scda(set),
    }
}

fn run_ddt(set: &DescriptorSet, opts: &RunOptions) -> Result<RunResults> {
    let start = Instant::now();
    let model = fit_with(
        set,
        &FitOptions {
            components: opts.components,
            solver: SolverOptions {
                allow_degenerate: opts.allow_degenerate,
                ..Default::default()
            },
        },
    )?;
    let fit_ms = elapsed_ms(start);

    let start = Instant::now();
    let k = model.component_count();
    let images = set
        .grids()
        .par_iter()
        .map(|grid| {
            let maps = (1..=k)
                .map(|c| model.indicator_map(grid, c))
                .collect::<Result<Vec<_>>>()?;
            let first = &maps[0];
            Ok(ImageResult {
                image_id: grid.image_id().to_owned(),
                bbox: localize_map(first)?,
                noise_score: noise_score(first),
                noise_score_normalized: normalized_noise_score(first),
                img_h: grid.img_h(),
                img_w: grid.img_w(),
                maps: Some(ImageMaps {
                    h: grid.h(),
                    w: grid.w(),
                    components: maps.into_iter().map(|m| m.values).collect(),
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let transform_ms = elapsed_ms(start);

    Ok(RunResults {
        schema_version: SCHEMA_VERSION,
        method: Method::Ddt,
        model: Some(ModelSummary {
            k,
            d: model.d(),
            descriptor_count: model.stats().count(),
            eigenvalues: model.eigenvalues(),
            sign_flips: model.sign_flips().to_vec(),
            min_relative_gap: model.min_relative_gap(),
            degenerate: model.is_degenerate(),
        }),
        metadata: RunMetadata {
            resize: "nearest-floor".into(),
            connectivity: 8,
            threshold: "0".into(),
            noise_score: "count of strictly positive cells of the first indicator map".into(),
        },
        images,
        timing_ms: Timing {
            load: 0.0,
            fit: fit_ms,
            transform: transform_ms,
        },
    })
}

fn run_scda(set: &DescriptorSet) -> Result<RunResults> {
    let start = Instant::now();
    let images = set
        .grids()
        .par_iter()
        .map(|grid| {
            let map = aggregation_map(grid);
            let mask = scda_mask(&map);
            let above = mask.count() as u64;
            Ok(ImageResult {
                image_id: grid.image_id().to_owned(),
                bbox: localize_grid_mask(&mask, grid.img_h(), grid.img_w())?,
                noise_score: above,
                noise_score_normalized: above as f64 / grid.cell_count() as f64,
                img_h: grid.img_h(),
                img_w: grid.img_w(),
                maps: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResults {
        schema_version: SCHEMA_VERSION,
        method: Method::Scda,
        model: None,
        metadata: RunMetadata {
            resize: "nearest-floor".into(),
            connectivity: 8,
            threshold: "mean".into(),
            noise_score: "count of aggregation-map cells above the mean".into(),
        },
        images,
        timing_ms: Timing {
            load: 0.0,
            fit: 0.0,
            transform: elapsed_ms(start),
        },
    })
}
