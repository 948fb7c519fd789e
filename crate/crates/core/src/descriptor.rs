//! Descriptor grids, descriptor sets and their on-disk formats.
//!
//! A grid is the `h x w x d` activation tensor of one image, stored row-major
//! by (row, col, channel) together with the original image size. The DDTD
//! binary layout (all integers little-endian):
//!
//! ```text
//! "DDTD" | version u16 = 1 | reserved u16 = 0
//! h u32 | w u32 | d u32 | img_h u32 | img_w u32
//! image_id_len u32 | image_id (UTF-8)
//! h*w*d f32, ordered (row, col, channel)
//! ```
//!
//! A manifest is UTF-8 text with one `image_id<TAB>filename` per line;
//! blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DDTD";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    image_id: String,
    h: usize,
    w: usize,
    d: usize,
    img_h: usize,
    img_w: usize,
    data: Vec<f32>,
}

impl DescriptorGrid {
    /// Builds a grid, checking the length, finiteness and size invariants.
    pub fn new(
        image_id: impl Into<String>,
        h: usize,
        w: usize,
        d: usize,
        img_h: usize,
        img_w: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let grid = Self {
            image_id: image_id.into(),
            h,
            w,
            d,
            img_h,
            img_w,
            data,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.image_id;
        if self.h == 0 || self.w == 0 || self.d == 0 {
            return Err(Error::Validation(format!(
                "{id}: grid dimensions must be positive, got {}x{}x{}",
                self.h, self.w, self.d
            )));
        }
        if self.h > self.img_h || self.w > self.img_w {
            return Err(Error::Validation(format!(
                "{id}: grid {}x{} exceeds image {}x{}",
                self.h, self.w, self.img_h, self.img_w
            )));
        }
        if u32::try_from(self.img_h).is_err() || u32::try_from(self.img_w).is_err() {
            return Err(Error::Validation(format!("{id}: image size overflows u32")));
        }
        let expected = self
            .h
            .checked_mul(self.w)
            .and_then(|n| n.checked_mul(self.d))
            .ok_or_else(|| Error::Validation(format!("{id}: h*w*d overflows")))?;
        if self.data.len() != expected {
            return Err(Error::Validation(format!(
                "{id}: expected {expected} scalars, got {}",
                self.data.len()
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{id}: non-finite value at cell {} channel {}",
                pos / self.d,
                pos % self.d
            )));
        }
        Ok(())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn img_h(&self) -> usize {
        self.img_h
    }

    pub fn img_w(&self) -> usize {
        self.img_w
    }

    pub fn cell_count(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Descriptor at (`row`, `col`).
    pub fn descriptor(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.w + col) * self.d;
        &self.data[start..start + self.d]
    }

    /// Descriptors in row-major cell order.
    pub fn descriptors(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.d)
    }

    /// Returns a copy with every scalar mapped through `f`.
    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(
            self.image_id.clone(),
            self.h,
            self.w,
            self.d,
            self.img_h,
            self.img_w,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn with_image_id(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = image_id.into();
        self
    }

    pub fn write_to(&self, sink: &mut impl Write) -> std::io::Result<()> {
        let id = self.image_id.as_bytes();
        let mut header = Vec::with_capacity(HEADER_LEN + id.len());
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        header.extend_from_slice(&0u16.to_le_bytes());
        for v in [self.h, self.w, self.d, self.img_h, self.img_w, id.len()] {
            header.extend_from_slice(&(v as u32).to_le_bytes());
        }
        header.extend_from_slice(id);
        sink.write_all(&header)?;

        let mut payload = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&payload)
    }

    pub fn read_from(source: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        read_exact_counted(source, &mut header, "header")?;
        if header[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"DDTD\"",
                String::from_utf8_lossy(&header[0..4])
            )));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let field = |i: usize| {
            let at = 8 + 4 * i;
            u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize
        };
        let (h, w, d, img_h, img_w, id_len) =
            (field(0), field(1), field(2), field(3), field(4), field(5));

        let mut id = vec![0u8; id_len];
        read_exact_counted(source, &mut id, "image id")?;
        let image_id = String::from_utf8(id)
            .map_err(|_| Error::Format("image id is not valid UTF-8".into()))?;

        let count = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(d))
            .ok_or_else(|| Error::Format("h*w*d overflows".into()))?;
        let mut raw = Vec::new();
        source
            .take((count * 4) as u64)
            .read_to_end(&mut raw)
            .map_err(|e| Error::Format(format!("payload read failed: {e}")))?;
        if raw.len() != count * 4 {
            return Err(Error::Length {
                what: "payload",
                expected: count * 4,
                found: raw.len(),
            });
        }
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(image_id, h, w, d, img_h, img_w, data)
    }
}

fn read_exact_counted(source: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Length {
                    what,
                    expected: buf.len(),
                    found: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(format!("{what} read failed: {e}"))),
        }
    }
    Ok(())
}

pub fn write_descriptor_file(grid: &DescriptorGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut sink = BufWriter::new(file);
    grid.write_to(&mut sink)
        .and_then(|_| sink.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_file(path: &Path) -> Result<DescriptorGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    DescriptorGrid::read_from(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Ordered, non-empty collection of grids sharing one descriptor dimension.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    grids: Vec<DescriptorGrid>,
}

impl DescriptorSet {
    pub fn new(grids: Vec<DescriptorGrid>) -> Result<Self> {
        let first = grids.first().ok_or(Error::EmptySet)?;
        let mut seen = HashSet::with_capacity(grids.len());
        for g in &grids {
            if g.d() != first.d() {
                return Err(Error::DimensionMismatch {
                    first: first.image_id().to_owned(),
                    first_d: first.d(),
                    second: g.image_id().to_owned(),
                    second_d: g.d(),
                });
            }
            if !seen.insert(g.image_id()) {
                return Err(Error::Validation(format!(
                    "duplicate image id {:?}",
                    g.image_id()
                )));
            }
        }
        Ok(Self { grids })
    }

    pub fn grids(&self) -> &[DescriptorGrid] {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn d(&self) -> usize {
        self.grids[0].d()
    }

    /// Total descriptor count K over all grids.
    pub fn descriptor_count(&self) -> Result<u64> {
        self.grids.iter().try_fold(0u64, |acc, g| {
            acc.checked_add(g.cell_count() as u64)
                .ok_or_else(|| Error::Validation("descriptor count overflows u64".into()))
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&DescriptorGrid> {
        self.grids.iter().find(|g| g.image_id() == image_id)
    }

    pub fn into_grids(self) -> Vec<DescriptorGrid> {
        self.grids
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub filename: String,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, file) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!(
                "manifest line {}: expected \"image_id<TAB>filename\"",
                lineno + 1
            ))
        })?;
        if id.is_empty() || file.is_empty() {
            return Err(Error::Format(format!(
                "manifest line {}: empty field",
                lineno + 1
            )));
        }
        entries.push(ManifestEntry {
            image_id: id.to_owned(),
            filename: file.to_owned(),
        });
    }
    Ok(entries)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.image_id, e.filename))
        .collect()
}

/// Loads every grid listed in `manifest` from `directory`, in manifest order.
pub fn load_set(directory: &Path, manifest: &Path) -> Result<DescriptorSet> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries = parse_manifest(&text)?;
    if entries.is_empty() {
        return Err(Error::EmptySet);
    }
    let grids: Vec<DescriptorGrid> = entries
        .par_iter()
        .map(|entry| {
            let path = directory.join(&entry.filename);
            let grid = read_descriptor_file(&path)?;
            if grid.image_id() != entry.image_id {
                return Err(Error::Validation(format!(
                    "{}: file holds image id {:?} but manifest says {:?}",
                    path.display(),
                    grid.image_id(),
                    entry.image_id
                )));
            }
            Ok(grid)
        })
        .collect::<Result<_>>()?;

    // name files, not ids, on dimension mismatch
    if let Some(bad) = grids.iter().position(|g| g.d() != grids[0].d()) {
        return Err(Error::DimensionMismatch {
            first: entries[0].filename.clone(),
            first_d: grids[0].d(),
            second: entries[bad].filename.clone(),
            second_d: grids[bad].d(),
        });
    }
    DescriptorSet::new(grids)
}

/// Writes every grid of `set` as `<image_id>.ddtd` plus a manifest.
pub fn save_set(set: &DescriptorSet, directory: &Path, manifest: &Path) -> Result<()> {
    std::fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for grid in set.grids() {
        let filename = format!("{}.ddtd", grid.image_id());
        write_descriptor_file(grid, &directory.join(&filename))?;
        entries.push(ManifestEntry {
            image_id: grid.image_id().to_owned(),
            filename,
        });
    }
    std::fs::write(manifest, format_manifest(&entries)).map_err(|e| Error::io(manifest, e))
}

/// Ground-truth boxes for one image; no boxes marks a noisy image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotation {
    pub image_id: String,
    pub boxes: Vec<BoundingBox>,
}

impl Annotation {
    pub fn is_noisy(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub type Annotations = BTreeMap<String, Annotation>;

pub fn parse_annotations(text: &str) -> Result<Annotations> {
    let raw: BTreeMap<String, Vec<[i64; 4]>> =
        serde_json::from_str(text).map_err(|e| Error::json("annotations", e))?;
    let mut out = Annotations::new();
    for (id, boxes) in raw {
        let mut parsed = Vec::with_capacity(boxes.len());
        for [xmin, ymin, xmax, ymax] in boxes {
            let in_range = |v: i64| (0..=i64::from(u32::MAX)).contains(&v);
            if ![xmin, ymin, xmax, ymax].into_iter().all(in_range) {
                return Err(Error::Validation(format!(
                    "{id}: box [{xmin},{ymin},{xmax},{ymax}] has out-of-range coordinates"
                )));
            }
            if xmin > xmax || ymin > ymax {
                return Err(Error::Validation(format!(
                    "{id}: box [{xmin},{ymin},{xmax},{ymax}] has min > max"
                )));
            }
            parsed.push(BoundingBox::new(
                xmin as u32,
                ymin as u32,
                xmax as u32,
                ymax as u32,
            ));
        }
        out.insert(
            id.clone(),
            Annotation {
                image_id: id,
                boxes: parsed,
            },
        );
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Annotations> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text).map_err(|e| match e {
        Error::Json { source, .. } => Error::json(path.display().to_string(), source),
        other => other,
    })
}

pub fn annotations_to_json(annotations: &Annotations) -> String {
    let raw: BTreeMap<&str, &[BoundingBox]> = annotations
        .iter()
        .map(|(id, a)| (id.as_str(), a.boxes.as_slice()))
        .collect();
    serde_json::to_string_pretty(&raw).expect("annotation map serializes")
}

/// Checks every annotated box against the size of the image it refers to.
/// Annotations for ids the set does not contain are ignored.
pub fn check_annotation_bounds(annotations: &Annotations, set: &DescriptorSet) -> Result<()> {
    for grid in set.grids() {
        let Some(ann) = annotations.get(grid.image_id()) else {
            continue;
        };
        for b in &ann.boxes {
            if !b.fits(grid.img_w() as u32, grid.img_h() as u32) {
                return Err(Error::Validation(format!(
                    "{}: box {:?} outside {}x{} image",
                    grid.image_id(),
                    <[u32; 4]>::from(*b),
                    grid.img_w(),
                    grid.img_h()
                )));
            }
        }
    }
    Ok(())
}

pub fn default_manifest_path(directory: &Path) -> PathBuf {
    directory.join("manifest.tsv")
}
