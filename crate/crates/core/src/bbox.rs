use serde::{Deserialize, Serialize};

/// Axis-aligned box in inclusive, 0-indexed pixel coordinates.
///
/// Serializes as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BoundingBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.xmin <= self.xmax && self.ymin <= self.ymax
    }

    /// True when the box lies inside an `img_w` x `img_h` image.
    pub fn fits(&self, img_w: u32, img_h: u32) -> bool {
        self.is_ordered() && self.xmax < img_w && self.ymax < img_h
    }

    pub fn width(&self) -> u64 {
        u64::from(self.xmax - self.xmin) + 1
    }

    pub fn height(&self) -> u64 {
        u64::from(self.ymax - self.ymin) + 1
    }

    /// Pixel count; inclusive coordinates so a single pixel has area 1.
    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let xmin = self.xmin.max(other.xmin);
        let ymin = self.ymin.max(other.ymin);
        let xmax = self.xmax.min(other.xmax);
        let ymax = self.ymax.min(other.ymax);
        (xmin <= xmax && ymin <= ymax).then(|| BoundingBox::new(xmin, ymin, xmax, ymax))
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }
}

impl From<[u32; 4]> for BoundingBox {
    fn from(v: [u32; 4]) -> Self {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.xmin, b.ymin, b.xmax, b.ymax]
    }
}
