//! Box geometry. Boxes are stored center-format and normalized to the
//! image extent; geometric operations convert to corners internally.

use crate::error::{Error, Result};

/// Normalized `(cx, cy, w, h)` box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner-format box `(x1, y1, x2, y2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Pixel box in MOTChallenge convention: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_corners(c: Corners) -> Self {
        Self {
            cx: 0.5 * (c.x1 + c.x2),
            cy: 0.5 * (c.y1 + c.y2),
            w: c.x2 - c.x1,
            h: c.y2 - c.y1,
        }
    }

    pub fn corners(&self) -> Corners {
        Corners {
            x1: self.cx - 0.5 * self.w,
            y1: self.cy - 0.5 * self.h,
            x2: self.cx + 0.5 * self.w,
            y2: self.cy + 0.5 * self.h,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Contract(alloc::format!("degenerate box {:?}", self)))
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let c = self.corners();
        x >= c.x1 && x <= c.x2 && y >= c.y1 && y <= c.y2
    }

    /// Sum of absolute center-format coordinate differences.
    pub fn l1(&self, other: &BoundingBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let dx = self.cx - other.cx;
        let dy = self.cy - other.cy;
        crate::math::sqrt(dx * dx + dy * dy)
    }
}

fn intersection(a: &Corners, b: &Corners) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    w * h
}

/// Intersection over union. Zero-area boxes yield 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ca, cb) = (a.corners(), b.corners());
    let inter = intersection(&ca, &cb);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - (hull - union) / hull`, in `(-1, 1]`.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (ca, cb) = (a.corners(), b.corners());
    let inter = intersection(&ca, &cb);
    let union = a.area() + b.area() - inter;
    let hull = (ca.x2.max(cb.x2) - ca.x1.min(cb.x1)) * (ca.y2.max(cb.y2) - ca.y1.min(cb.y1));
    Ok(inter / union - (hull - union) / hull)
}

/// Pixel corner-format box to normalized center-format.
pub fn normalize(b: &PixelBox, width: f64, height: f64) -> BoundingBox {
    BoundingBox {
        cx: (b.left + 0.5 * b.width) / width,
        cy: (b.top + 0.5 * b.height) / height,
        w: b.width / width,
        h: b.height / height,
    }
}

pub fn denormalize(b: &BoundingBox, width: f64, height: f64) -> PixelBox {
    PixelBox {
        left: (b.cx - 0.5 * b.w) * width,
        top: (b.cy - 0.5 * b.h) * height,
        width: b.w * width,
        height: b.h * height,
    }
}
