//! Planted-signal descriptor sets with known ground truth.
//!
//! Background cells are `ReLU(σ_b · z)` with `z` standard normal per channel.
//! Cells inside an image's planted rectangle add `s · u`, where `u` is one
//! unit direction shared by the whole set. Directions are nonnegative and
//! supported on a random subset of channels, like rectified activations of
//! one object class. Optional extras:
//!
//! * a distractor rectangle per image carrying its own random direction,
//!   supported on channels the shared direction leaves unused,
//! * a two-part object whose upper half adds `+t · v` and lower half `−t · v`
//!   along a second direction `v` orthogonal to `u`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::descriptor::{
    annotations_to_json, save_set, Annotation, Annotations, DescriptorGrid, DescriptorSet,
};
use crate::error::{Error, Result};
use crate::eval::NoiseLabel;

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl CellRect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..=self.row1).contains(&row) && (self.col0..=self.col1).contains(&col)
    }

    pub fn cells(&self) -> usize {
        (self.row1 - self.row0 + 1) * (self.col1 - self.col0 + 1)
    }

    /// True when the rectangles overlap or touch (8-neighbourhood).
    pub fn touches(&self, other: &CellRect) -> bool {
        self.row0 <= other.row1 + 1
            && other.row0 <= self.row1 + 1
            && self.col0 <= other.col1 + 1
            && other.col0 <= self.col1 + 1
    }

    pub fn to_pixels(&self, scale: usize) -> BoundingBox {
        BoundingBox::new(
            (self.col0 * scale) as u32,
            (self.row0 * scale) as u32,
            ((self.col1 + 1) * scale - 1) as u32,
            ((self.row1 + 1) * scale - 1) as u32,
        )
    }

    /// Upper and lower halves (the upper one gets the extra row when odd).
    pub fn split_rows(&self) -> (CellRect, Option<CellRect>) {
        let rows = self.row1 - self.row0 + 1;
        if rows < 2 {
            return (*self, None);
        }
        let top_end = self.row0 + rows.div_ceil(2) - 1;
        (
            CellRect {
                row1: top_end,
                ..*self
            },
            Some(CellRect {
                row0: top_end + 1,
                ..*self
            }),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_images: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub d: usize,
    /// Pixels per cell along each axis.
    pub image_scale: usize,
    /// Background level σ_b.
    pub noise_sigma: f64,
    /// Planted signal strength s (norm of the added vector).
    pub signal_strength: f64,
    /// Images without a planted object; chosen at random positions.
    pub n_noisy: usize,
    /// Seed for the boxes and background noise.
    pub seed: u64,
    /// Seed for the shared direction; defaults to `seed`.
    pub direction_seed: Option<u64>,
    /// Fraction of cells a random planted rectangle covers.
    pub min_cover: f64,
    pub max_cover: f64,
    /// Fraction of channels each planted direction uses.
    pub support_fraction: f64,
    /// Strength of a per-image distractor region, if any.
    pub distractor_strength: Option<f64>,
    /// Strength t of the two-part signal, if any.
    pub part_strength: Option<f64>,
    /// Explicit planted rectangles, one per clean image in order.
    pub planted: Option<Vec<CellRect>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_images: 20,
            grid_h: 30,
            grid_w: 30,
            d: 64,
            image_scale: 8,
            noise_sigma: 1.0,
            signal_strength: 5.0,
            n_noisy: 0,
            seed: 0,
            direction_seed: None,
            min_cover: 0.10,
            max_cover: 0.30,
            support_fraction: 0.125,
            distractor_strength: None,
            part_strength: None,
            planted: None,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_images == 0 || self.grid_h == 0 || self.grid_w == 0 || self.d == 0 {
            return bad("image count and grid dimensions must be positive".into());
        }
        if self.image_scale == 0 {
            return bad("image scale must be positive".into());
        }
        if self.n_noisy > self.n_images {
            return bad(format!(
                "{} noisy images requested out of {}",
                self.n_noisy, self.n_images
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise level must be finite and >= 0".into());
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal strength must be finite and >= 0".into());
        }
        if !(0.0 < self.min_cover && self.min_cover <= self.max_cover && self.max_cover <= 1.0) {
            return bad("cover range must satisfy 0 < min <= max <= 1".into());
        }
        if !(0.0 < self.support_fraction && self.support_fraction <= 1.0) {
            return bad("support fraction must be in (0, 1]".into());
        }
        if self.part_strength.is_some() && self.d < 2 {
            return bad("a two-part signal needs d >= 2".into());
        }
        if let Some(rects) = &self.planted {
            let clean = self.n_images - self.n_noisy;
            if rects.len() != clean {
                return bad(format!(
                    "{} planted rectangles given for {clean} clean images",
                    rects.len()
                ));
            }
            for r in rects {
                if r.row0 > r.row1 || r.col0 > r.col1 || r.row1 >= self.grid_h || r.col1 >= self.grid_w {
                    return bad(format!("planted rectangle {r:?} outside the {}x{} grid", self.grid_h, self.grid_w));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth for one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub image_id: String,
    pub object: Option<CellRect>,
    pub distractor: Option<CellRect>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub set: DescriptorSet,
    pub annotations: Annotations,
    pub noise_labels: BTreeMap<String, NoiseLabel>,
    pub truth: Vec<PlantedTruth>,
    pub direction: Vec<f64>,
    pub part_direction: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct TruthFile<'a> {
    direction: &'a [f64],
    part_direction: Option<&'a [f64]>,
    images: &'a [PlantedTruth],
}

impl SynthDataset {
    /// Writes `<id>.ddtd` files, `manifest.tsv`, `annotations.json`,
    /// `noise_labels.json` and `truth.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        save_set(&self.set, dir, &dir.join("manifest.tsv"))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
        };
        write("annotations.json", annotations_to_json(&self.annotations))?;
        write(
            "noise_labels.json",
            serde_json::to_string_pretty(&self.noise_labels).map_err(|e| Error::json("noise labels", e))?,
        )?;
        let truth = TruthFile {
            direction: &self.direction,
            part_direction: self.part_direction.as_deref(),
            images: &self.truth,
        };
        write(
            "truth.json",
            serde_json::to_string_pretty(&truth).map_err(|e| Error::json("truth", e))?,
        )
    }
}

/// Nonnegative unit vector on a random channel subset of size `support`,
/// avoiding channels in `exclude` while enough remain.
fn sparse_direction(rng: &mut impl Rng, d: usize, support: usize, exclude: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let allowed: Vec<usize> = (0..d).filter(|c| !exclude.contains(c)).collect();
    let pool = if allowed.len() >= support { allowed } else { (0..d).collect() };
    let mut chosen: Vec<usize> = sample(rng, pool.len(), support.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    chosen.sort_unstable();
    let mut v = vec![0.0; d];
    for &c in &chosen {
        let z: f64 = StandardNormal.sample(rng);
        // keep every support entry clearly nonzero
        v[c] = z.abs().max(0.05);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    (v, chosen)
}

fn random_rect(rng: &mut impl Rng, spec: &SynthSpec, avoid: Option<&CellRect>) -> Result<CellRect> {
    let (gh, gw) = (spec.grid_h, spec.grid_w);
    let total = (gh * gw) as f64;
    for _ in 0..100_000 {
        let cover = rng.random_range(spec.min_cover..=spec.max_cover);
        let aspect = rng.random_range(0.5f64.ln()..=2.0f64.ln()).exp();
        let rows = ((cover * total * aspect).sqrt().round() as usize).clamp(1, gh);
        let cols = ((cover * total / rows as f64).round() as usize).clamp(1, gw);
        let got = (rows * cols) as f64 / total;
        if got < spec.min_cover || got > spec.max_cover {
            continue;
        }
        let row0 = rng.random_range(0..=gh - rows);
        let col0 = rng.random_range(0..=gw - cols);
        let rect = CellRect {
            row0,
            col0,
            row1: row0 + rows - 1,
            col1: col0 + cols - 1,
        };
        if avoid.is_some_and(|a| a.touches(&rect)) {
            continue;
        }
        return Ok(rect);
    }
    Err(Error::InvalidArgument(format!(
        "could not place a rectangle covering {}..{} of a {gh}x{gw} grid",
        spec.min_cover, spec.max_cover
    )))
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let d = spec.d;
    let support = ((d as f64 * spec.support_fraction).round() as usize).clamp(1, d);

    let mut dir_rng = ChaCha8Rng::seed_from_u64(spec.direction_seed.unwrap_or(spec.seed));
    let (direction, used) = sparse_direction(&mut dir_rng, d, support, &[]);
    let part_direction = spec.part_strength.map(|_| {
        let (v, _) = sparse_direction(&mut dir_rng, d, support, &used);
        // disjoint supports make this exact; re-orthogonalize for small d
        let c: f64 = v.iter().zip(&direction).map(|(a, b)| a * b).sum();
        let mut v: Vec<f64> = v.iter().zip(&direction).map(|(a, b)| a - c * b).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    });

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy: Vec<usize> = {
        let mut idx = sample(&mut rng, spec.n_images, spec.n_noisy).into_vec();
        idx.sort_unstable();
        idx
    };

    let (h, w) = (spec.grid_h, spec.grid_w);
    let width = spec.n_images.saturating_sub(1).to_string().len().max(3);
    let mut grids = Vec::with_capacity(spec.n_images);
    let mut annotations = Annotations::new();
    let mut noise_labels = BTreeMap::new();
    let mut truth = Vec::with_capacity(spec.n_images);
    let mut explicit = spec.planted.iter().flatten();

    for n in 0..spec.n_images {
        let image_id = format!("img_{n:0width$}");
        let is_noisy = noisy.binary_search(&n).is_ok();
        let object = if is_noisy {
            None
        } else if spec.planted.is_some() {
            explicit.next().copied()
        } else {
            Some(random_rect(&mut rng, spec, None)?)
        };
        let distractor = match spec.distractor_strength {
            Some(_) => {
                let rect = random_rect(&mut rng, spec, object.as_ref())?;
                let (v, _) = sparse_direction(&mut rng, d, support, &used);
                Some((rect, v))
            }
            None => None,
        };

        let halves = object.map(|o| o.split_rows());
        let mut data = Vec::with_capacity(h * w * d);
        let mut cell = vec![0.0f64; d];
        for row in 0..h {
            for col in 0..w {
                for c in cell.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = (spec.noise_sigma * z).max(0.0);
                }
                if object.is_some_and(|o| o.contains(row, col)) {
                    add_scaled(&mut cell, spec.signal_strength, &direction);
                    if let (Some(t), Some(v), Some((top, _))) =
                        (spec.part_strength, &part_direction, halves)
                    {
                        let sign = if top.contains(row, col) { 1.0 } else { -1.0 };
                        add_scaled(&mut cell, sign * t, v);
                    }
                }
                if let (Some(s), Some((rect, v))) = (spec.distractor_strength, &distractor) {
                    if rect.contains(row, col) {
                        add_scaled(&mut cell, s, v);
                    }
                }
                data.extend(cell.iter().map(|&x| x as f32));
            }
        }
        let img_h = h * spec.image_scale;
        let img_w = w * spec.image_scale;
        grids.push(DescriptorGrid::new(image_id.clone(), h, w, d, img_h, img_w, data)?);
        annotations.insert(
            image_id.clone(),
            Annotation {
                image_id: image_id.clone(),
                boxes: object.iter().map(|o| o.to_pixels(spec.image_scale)).collect(),
            },
        );
        noise_labels.insert(
            image_id.clone(),
            if is_noisy {
                NoiseLabel::Noisy
            } else {
                NoiseLabel::Clean
            },
        );
        truth.push(PlantedTruth {
            image_id,
            object,
            distractor: distractor.map(|(r, _)| r),
        });
    }

    Ok(SynthDataset {
        set: DescriptorSet::new(grids)?,
        annotations,
        noise_labels,
        truth,
        direction,
        part_direction,
    })
}

fn add_scaled(cell: &mut [f64], s: f64, v: &[f64]) {
    for (c, x) in cell.iter_mut().zip(v) {
        *c += s * x;
    }
}
