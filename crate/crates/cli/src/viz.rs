use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use ddt_core::localize::resize_nearest;
use ddt_core::pipeline::ImageResult;
use ddt_core::{BoundingBox, Error, RunResults};

use crate::commands::{init_threads, CmdResult};
use crate::font::{draw_text, text_width, GLYPH_H};
use crate::{VizArgs, VizMode};

pub const BOX_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
const BOX_THICKNESS: u32 = 2;
const NEGATIVE: [f32; 3] = [59.0, 76.0, 192.0];
const POSITIVE: [f32; 3] = [180.0, 4.0, 38.0];

fn find_image(dir: &Path, id: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

/// Maps a box given for a `src_w x src_h` image onto `dst_w x dst_h`.
fn rescale_box(b: BoundingBox, src_w: usize, src_h: usize, dst_w: u32, dst_h: u32) -> BoundingBox {
    if (src_w as u32, src_h as u32) == (dst_w, dst_h) {
        return b;
    }
    let sx = |v: u32| (v as u64 * dst_w as u64 / src_w as u64) as u32;
    let sy = |v: u32| (v as u64 * dst_h as u64 / src_h as u64) as u32;
    let x1 = sx(b.xmax + 1).saturating_sub(1).max(sx(b.xmin));
    let y1 = sy(b.ymax + 1).saturating_sub(1).max(sy(b.ymin));
    BoundingBox::new(sx(b.xmin), sy(b.ymin), x1.min(dst_w - 1), y1.min(dst_h - 1))
}

pub fn draw_box(img: &mut RgbImage, b: &BoundingBox) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let (x0, y0) = (b.xmin.min(w - 1), b.ymin.min(h - 1));
    let (x1, y1) = (b.xmax.min(w - 1), b.ymax.min(h - 1));
    for t in 0..BOX_THICKNESS {
        let (ix0, iy0) = ((x0 + t).min(x1), (y0 + t).min(y1));
        let (ix1, iy1) = (x1.saturating_sub(t).max(x0), y1.saturating_sub(t).max(y0));
        for x in ix0..=ix1 {
            img.put_pixel(x, iy0, BOX_COLOR);
            img.put_pixel(x, iy1, BOX_COLOR);
        }
        for y in iy0..=iy1 {
            img.put_pixel(ix0, y, BOX_COLOR);
            img.put_pixel(ix1, y, BOX_COLOR);
        }
    }
}

pub fn label_no_detection(img: &mut RgbImage) {
    let text = "NO DETECTION";
    let scale = if img.width() >= text_width(text, 2) + 8 { 2 } else { 1 };
    let (tw, th) = (text_width(text, scale), GLYPH_H * scale);
    for y in 0..(th + 4).min(img.height()) {
        for x in 0..(tw + 4).min(img.width()) {
            img.put_pixel(x, y, Rgb([0, 0, 0]));
        }
    }
    draw_text(img, 2, 2, text, scale, BOX_COLOR);
}

/// Blue below zero, white at zero, red above; `v` in [−1, 1].
pub fn diverging(v: f64) -> [f32; 3] {
    let t = v.clamp(-1.0, 1.0).abs() as f32;
    let end = if v < 0.0 { NEGATIVE } else { POSITIVE };
    [0, 1, 2].map(|c| 255.0 + (end[c] - 255.0) * t)
}

/// Row-major values scaled by their largest magnitude.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v / peak).collect()
}

pub fn blend_heatmap(img: &mut RgbImage, values: &[f64], h: usize, w: usize, alpha: f32) {
    let (iw, ih) = img.dimensions();
    let norm = normalize(values);
    let up = resize_nearest(&norm, h, w, ih as usize, iw as usize);
    for (px, &v) in img.pixels_mut().zip(&up) {
        let c = diverging(v);
        for (ch, target) in px.0.iter_mut().zip(c) {
            let mixed = (1.0 - alpha) * f32::from(*ch) + alpha * target;
            *ch = mixed.round().clamp(0.0, 255.0) as u8;
        }
    }
}

enum Outcome {
    Written,
    Skipped(String),
}

fn render_one(args: &VizArgs, r: &ImageResult) -> Result<Outcome, Error> {
    let Some(path) = find_image(&args.images, &r.image_id) else {
        return Ok(Outcome::Skipped(format!("no image file for {}", r.image_id)));
    };
    let mut img = match image::open(&path) {
        Ok(i) => i.to_rgb8(),
        Err(e) => return Ok(Outcome::Skipped(format!("{}: {e}", path.display()))),
    };
    let (w, h) = img.dimensions();
    let out = match args.mode {
        VizMode::Boxes => {
            match r.bbox {
                Some(b) => draw_box(&mut img, &rescale_box(b, r.img_w, r.img_h, w, h)),
                None => label_no_detection(&mut img),
            }
            args.out.join(format!("{}.png", r.image_id))
        }
        VizMode::Heatmap => {
            let k = args.component as usize;
            let maps = r.maps.as_ref().ok_or_else(|| {
                Error::Validation(format!(
                    "{}: results carry no indicator maps (produced with --method scda?)",
                    r.image_id
                ))
            })?;
            let values = maps.components.get(k - 1).ok_or_else(|| {
                Error::Validation(format!(
                    "{}: component {k} requested but results hold {}",
                    r.image_id,
                    maps.components.len()
                ))
            })?;
            blend_heatmap(&mut img, values, maps.h, maps.w, args.alpha);
            args.out.join(format!("{}_p{k}.png", r.image_id))
        }
    };
    img.save(&out)
        .map_err(|e| Error::Format(format!("{}: {e}", out.display())))?;
    Ok(Outcome::Written)
}

pub fn viz(args: VizArgs) -> CmdResult {
    init_threads(args.threads)?;
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(format!("alpha {} outside [0, 1]", args.alpha).into());
    }
    let results = RunResults::read(&args.results)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let outcomes = results
        .images
        .par_iter()
        .map(|r| render_one(&args, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut written = 0;
    for o in outcomes {
        match o {
            Outcome::Written => written += 1,
            Outcome::Skipped(msg) => eprintln!("warning: {msg}"),
        }
    }
    println!(
        "rendered {written} of {} images into {}",
        results.images.len(),
        args.out.display()
    );
    Ok(())
}
