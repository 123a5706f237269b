//! Grayscale frames with intensities in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Input(alloc::format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    /// Rounds every pixel to the nearest multiple of 1/255, matching an
    /// 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| math::round(p.clamp(0.0, 1.0) * 255.0) / 255.0)
                .collect(),
        }
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `i + 0.5`), clamped at the border.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = math::floor(fx) as usize;
        let y0 = math::floor(fy) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Non-overlapping `p × p` patches in row-major grid order, each
    /// flattened row-major: a `[(H/p)(W/p) × p²]` tensor.
    pub fn patches(&self, p: usize) -> Result<Tensor> {
        if p == 0 || self.width % p != 0 || self.height % p != 0 {
            return Err(Error::Config(alloc::format!(
                "image {}x{} is not divisible by patch size {}",
                self.width, self.height, p
            )));
        }
        let (gw, gh) = (self.width / p, self.height / p);
        let mut out = Vec::with_capacity(self.pixels.len());
        for py in 0..gh {
            for px in 0..gw {
                for y in 0..p {
                    let row = (py * p + y) * self.width + px * p;
                    out.extend_from_slice(&self.pixels[row..row + p]);
                }
            }
        }
        Tensor::matrix(gw * gh, p * p, out)
    }
}
