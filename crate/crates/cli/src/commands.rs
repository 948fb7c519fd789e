use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use ddt_core::descriptor::{default_manifest_path, load_set, read_annotations, DescriptorGrid};
use ddt_core::eval::{evaluate, labels_from_annotations, roc_curve, NoiseLabel, RocPoint};
use ddt_core::pipeline::SCHEMA_VERSION;
use ddt_core::scda::aggregation_map;
use ddt_core::synth::{generate, CellRect, SynthSpec};
use ddt_core::{Error, Method, RunOptions, RunResults};

use crate::{EvalArgs, MethodArg, RocArgs, RunArgs, SynthArgs};

pub type CmdResult = Result<(), Box<dyn StdError + Send + Sync>>;

pub fn init_threads(threads: usize) -> CmdResult {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

pub fn run(args: RunArgs) -> CmdResult {
    init_threads(args.threads)?;
    let manifest = args
        .manifest
        .unwrap_or_else(|| default_manifest_path(&args.descriptors));

    let start = Instant::now();
    let set = load_set(&args.descriptors, &manifest)?;
    let load_ms = start.elapsed().as_secs_f64() * 1e3;

    let opts = RunOptions {
        method: match args.method {
            MethodArg::Ddt => Method::Ddt,
            MethodArg::Scda => Method::Scda,
        },
        components: args.components as usize,
        allow_degenerate: args.allow_degenerate,
    };
    let mut results = ddt_core::run(&set, &opts).map_err(|e| match e {
        Error::DegenerateSpectrum { .. } => format!("{e} (rerun with --allow-degenerate to accept it)").into(),
        other => Box::<dyn StdError + Send + Sync>::from(other),
    })?;
    results.timing_ms.load = load_ms;
    results.write(&args.output)?;

    let found = results.images.iter().filter(|i| i.bbox.is_some()).count();
    println!(
        "{} images, {} with a box; load {:.1} ms, fit {:.1} ms, transform {:.1} ms -> {}",
        results.images.len(),
        found,
        results.timing_ms.load,
        results.timing_ms.fit,
        results.timing_ms.transform,
        args.output.display()
    );
    if let Some(m) = &results.model {
        if m.degenerate {
            eprintln!("warning: leading eigenvalues are not separated; directions are arbitrary");
        }
    }
    Ok(())
}

fn fmt_box(b: Option<ddt_core::BoundingBox>) -> String {
    match b {
        Some(b) => format!("[{},{},{},{}]", b.xmin, b.ymin, b.xmax, b.ymax),
        None => "-".into(),
    }
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let results = RunResults::read(&args.results)?;
    let annotations = read_annotations(&args.annotations)?;
    let report = evaluate(&results.predictions(), &annotations)?;

    let width = report.per_image.iter().map(|v| v.image_id.len()).max().unwrap_or(0).max(8);
    println!("{:<width$}  {:<22}  {:>6}  correct", "image", "box", "iou");
    for v in &report.per_image {
        let iou = v.best_iou.map_or("-".into(), |x| format!("{x:.3}"));
        let ok = match v.correct {
            Some(true) => "yes",
            Some(false) => "no",
            None => "noisy",
        };
        println!("{:<width$}  {:<22}  {:>6}  {}", v.image_id, fmt_box(v.bbox), iou, ok);
    }
    println!(
        "CorLoc: {:.1}% ({}/{})",
        report.corloc_percent, report.correct, report.annotated
    );
    if let Some(auc) = report.auc {
        println!("noise AUC: {auc:.4}");
    }
    if let Some(path) = &args.output {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RocReport<'a> {
    schema_version: u32,
    positive_class: &'a str,
    rule: &'a str,
    score: &'a str,
    auc: f64,
    points: Vec<RocPoint>,
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, NoiseLabel>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn roc(args: RocArgs) -> CmdResult {
    let results = RunResults::read(&args.results)?;
    let labels = match (&args.labels, &args.annotations) {
        (Some(p), _) => read_labels(p)?,
        (None, Some(p)) => labels_from_annotations(&read_annotations(p)?),
        (None, None) => unreachable!("clap requires one label source"),
    };
    let curve = roc_curve(&results.scores(args.normalized), &labels)?;
    println!("AUC: {:.4} ({} points)", curve.auc, curve.points.len());
    if let Some(path) = &args.output {
        let report = RocReport {
            schema_version: SCHEMA_VERSION,
            positive_class: "noisy",
            rule: "score <= threshold",
            score: if args.normalized {
                "noise_score_normalized"
            } else {
                "noise_score"
            },
            auc: curve.auc,
            points: curve.points,
        };
        let text = serde_json::to_string_pretty(&report)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn parse_cell_rect(s: &str) -> Result<CellRect, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected row0,col0,row1,col1: {e}"))?;
    let [row0, col0, row1, col1] = parts[..] else {
        return Err(format!("expected 4 comma-separated values, got {}", parts.len()));
    };
    Ok(CellRect {
        row0,
        col0,
        row1,
        col1,
    })
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        n_images: args.n_images,
        grid_h: args.grid_h,
        grid_w: args.grid_w,
        d: args.d,
        image_scale: args.image_scale,
        noise_sigma: args.noise_sigma,
        signal_strength: args.signal_strength,
        n_noisy: args.n_noisy,
        seed: args.seed,
        direction_seed: args.direction_seed,
        min_cover: args.min_cover,
        max_cover: args.max_cover,
        support_fraction: args.support_fraction,
        distractor_strength: args.distractor_strength,
        part_strength: args.part_strength,
        planted: (!args.planted.is_empty()).then_some(args.planted),
    };
    let data = generate(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    data.write_to_dir(&args.out)?;
    if args.render_images {
        let dir = args.out.join("images");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for g in data.set.grids() {
            render_grid(g).save(dir.join(format!("{}.png", g.image_id())))?;
        }
    }
    println!(
        "wrote {} images ({} noisy) to {}",
        spec.n_images,
        spec.n_noisy,
        args.out.display()
    );
    Ok(())
}

/// Channel-sum intensity of each cell, stretched to 0..255 per image.
fn render_grid(grid: &DescriptorGrid) -> image::GrayImage {
    let map = aggregation_map(grid);
    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (grid.img_w() as u32, grid.img_h() as u32);
    image::GrayImage::from_fn(w, h, |x, y| {
        let row = y as usize * grid.h() / grid.img_h();
        let col = x as usize * grid.w() / grid.img_w();
        let v = (map.values[row * grid.w() + col] - lo) / span;
        image::Luma([(v * 255.0).round() as u8])
    })
}
