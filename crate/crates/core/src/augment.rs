//! Training-time augmentations: temporal pair sampling, track query
//! dropout and false-positive injection, adjacent-frame simulation from a
//! single image, and ground-truth jitter.
//!
//! Every routine draws from a caller-supplied RNG in a fixed order. The
//! trainer uses `ChaCha8Rng::seed_from_u64(seed)`, whose output stream is
//! specified independently of platform, so seeded runs are reproducible.

use alloc::vec::Vec;

use rand::Rng;

use crate::bbox::{iou, BoundingBox, Corners};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sequence::LabeledObject;
use crate::Identity;

/// Ground truth whose visible area inside a crop falls below this fraction
/// of its mapped area is dropped from that view.
pub const MIN_VISIBLE_FRACTION: f64 = 0.25;

/// Smallest width or height a jittered box may take.
pub const MIN_JITTER_EXTENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub p_fn: f64,
    pub p_fp: f64,
    /// Maximum temporal offset between the two training frames.
    pub frame_range: usize,
    /// Restrict pair sampling to earlier frames.
    pub past_only: bool,
    pub sim_crop_frac: f64,
    pub jitter_frac: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_fn: 0.4,
            p_fp: 0.1,
            frame_range: 5,
            past_only: false,
            sim_crop_frac: 0.2,
            jitter_frac: 0.01,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No augmentation at all: adjacent frames, every track query kept.
    pub fn none() -> Self {
        Self {
            p_fn: 0.0,
            p_fp: 0.0,
            frame_range: 1,
            past_only: true,
            sim_crop_frac: 0.0,
            jitter_frac: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let frac = |f: f64| (0.0..1.0).contains(&f);
        if !prob(self.p_fn) || !prob(self.p_fp) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        if !frac(self.sim_crop_frac) || !frac(self.jitter_frac) {
            return Err(Error::Config("augmentation fractions must lie in [0, 1)".into()));
        }
        if self.frame_range == 0 {
            return Err(Error::Config("frame_range must be at least 1".into()));
        }
        Ok(())
    }
}

/// Picks the partner frame for `t`, uniformly over `[t−r, t+r]` clipped
/// to the sequence, excluding `t` (earlier frames only with `past_only`,
/// unless `t` has none).
pub fn sample_prev_frame(t: usize, seq_len: usize, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<usize> {
    if seq_len < 2 || t >= seq_len {
        return Err(Error::Input(alloc::format!("frame {} of a {}-frame sequence has no partner", t, seq_len)));
    }
    let r = cfg.frame_range;
    let lo = t.saturating_sub(r);
    let hi = (t + r).min(seq_len - 1);
    let mut candidates: Vec<usize> = (lo..=hi).filter(|&f| f != t).collect();
    if cfg.past_only && t > 0 {
        candidates.retain(|&f| f < t);
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// A training-time track query candidate: an opaque handle (a prediction
/// row, an embedding, ...), its predicted box and its identity. Injected
/// false positives have no identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateQuery<T> {
    pub item: T,
    pub bbox: BoundingBox,
    pub identity: Option<Identity>,
}

/// Removes each query independently with probability `p_fn`.
pub fn drop_false_negatives<T>(queries: Vec<T>, p_fn: f64, rng: &mut impl Rng) -> Vec<T> {
    queries.into_iter().filter(|_| !rng.random_bool(p_fn.clamp(0.0, 1.0))).collect()
}

/// Each original query spawns, with probability `p_fp`, the still-unused
/// background candidate whose box overlaps it most. Spawned queries carry
/// no identity and are appended after the originals.
pub fn spawn_false_positives<T: Clone>(
    queries: Vec<CandidateQuery<T>>,
    background: &[(T, BoundingBox)],
    p_fp: f64,
    rng: &mut impl Rng,
) -> Vec<CandidateQuery<T>> {
    if background.is_empty() {
        return queries;
    }
    let mut used = alloc::vec![false; background.len()];
    let mut spawned = Vec::new();
    for q in &queries {
        if !rng.random_bool(p_fp.clamp(0.0, 1.0)) {
            continue;
        }
        let best = background
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, (_, b))| (i, iou(&q.bbox, b)))
            .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((i, v)),
            });
        if let Some((i, _)) = best {
            used[i] = true;
            spawned.push(CandidateQuery {
                item: background[i].0.clone(),
                bbox: background[i].1,
                identity: None,
            });
        }
    }
    let mut out = queries;
    out.extend(spawned);
    out
}

/// Perturbs every coordinate uniformly within `±jitter_frac` of the image
/// extent; widths and heights are floored at [`MIN_JITTER_EXTENT`].
pub fn jitter_gt(boxes: &[LabeledObject], jitter_frac: f64, rng: &mut impl Rng) -> Vec<LabeledObject> {
    if jitter_frac == 0.0 {
        return boxes.to_vec();
    }
    boxes
        .iter()
        .map(|o| {
            let mut d = [0.0; 4];
            for v in &mut d {
                *v = rng.random_range(-jitter_frac..=jitter_frac);
            }
            let b = o.bbox;
            LabeledObject {
                bbox: BoundingBox::new(
                    b.cx + d[0],
                    b.cy + d[1],
                    (b.w + d[2]).max(MIN_JITTER_EXTENT),
                    (b.h + d[3]).max(MIN_JITTER_EXTENT),
                ),
                ..*o
            }
        })
        .collect()
}

/// A crop window in normalized source coordinates, resized back to the
/// full frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropView {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
}

impl CropView {
    pub const IDENTITY: CropView = CropView {
        x0: 0.0,
        y0: 0.0,
        scale: 1.0,
    };

    /// Affine map of a source box into the view.
    pub fn map_box(&self, b: &BoundingBox) -> BoundingBox {
        BoundingBox::new(
            (b.cx - self.x0) / self.scale,
            (b.cy - self.y0) / self.scale,
            b.w / self.scale,
            b.h / self.scale,
        )
    }

    fn render(&self, image: &Image) -> Image {
        let (w, h) = (image.width(), image.height());
        if *self == Self::IDENTITY {
            return image.clone();
        }
        let mut out = Image::filled(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let sx = (self.x0 + (x as f64 + 0.5) / w as f64 * self.scale) * w as f64;
                let sy = (self.y0 + (y as f64 + 0.5) / h as f64 * self.scale) * h as f64;
                out.set(x, y, image.sample(sx, sy));
            }
        }
        out
    }

    fn project(&self, objects: &[LabeledObject]) -> Vec<LabeledObject> {
        objects
            .iter()
            .filter_map(|o| {
                let m = self.map_box(&o.bbox);
                let c = m.corners();
                let clipped = Corners {
                    x1: c.x1.max(0.0),
                    y1: c.y1.max(0.0),
                    x2: c.x2.min(1.0),
                    y2: c.y2.min(1.0),
                };
                let (cw, ch) = (clipped.x2 - clipped.x1, clipped.y2 - clipped.y1);
                if cw <= 0.0 || ch <= 0.0 || cw * ch < MIN_VISIBLE_FRACTION * m.area() {
                    return None;
                }
                let bbox = if clipped == c { m } else { BoundingBox::from_corners(clipped) };
                Some(LabeledObject { bbox, ..*o })
            })
            .collect()
    }
}

/// Two views of one annotated image, standing in for adjacent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPair {
    pub prev: Image,
    pub curr: Image,
    pub prev_gt: Vec<LabeledObject>,
    pub curr_gt: Vec<LabeledObject>,
    pub prev_view: CropView,
    pub curr_view: CropView,
}

fn random_view(frac: f64, rng: &mut impl Rng) -> CropView {
    if frac == 0.0 {
        return CropView::IDENTITY;
    }
    let scale = 1.0 - rng.random_range(0.0..=frac);
    let x0 = rng.random_range(0.0..=1.0 - scale);
    let y0 = rng.random_range(0.0..=1.0 - scale);
    CropView { x0, y0, scale }
}

/// Simulates an adjacent frame pair from a single image through two
/// independent random crop-and-resize views of up to `sim_crop_frac` of
/// the image extent. Identities carry over; boxes are clipped to each view
/// and dropped when less than a quarter of them remains visible.
pub fn simulate_pair(image: &Image, gts: &[LabeledObject], cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<SimulatedPair> {
    if gts.is_empty() {
        return Err(Error::Input("simulate_pair needs at least one box".into()));
    }
    let prev_view = random_view(cfg.sim_crop_frac, rng);
    let curr_view = random_view(cfg.sim_crop_frac, rng);
    Ok(SimulatedPair {
        prev: prev_view.render(image),
        curr: curr_view.render(image),
        prev_gt: prev_view.project(gts),
        curr_gt: curr_view.project(gts),
        prev_view,
        curr_view,
    })
}
