//! Synthetic sequences of textured rectangles.
//!
//! Coordinates are normalized to `[0, 1]`. Objects move with constant
//! velocity plus uniform noise and bounce off the image border. Later
//! identities are drawn on top of earlier ones; ground truth keeps the full
//! box of an occluded object and records its visible fraction.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::jitter_gt;
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math;
use crate::sequence::{LabeledObject, SequenceGT};

const BACKGROUND: f64 = 0.1;
/// Sub-samples per axis used to estimate visibility.
const VISIBILITY_GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Random,
    /// Objects 1 and 2 meet head-on at mid sequence, vertically offset by
    /// less than their per-frame step; any further objects move apart from
    /// them.
    Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_objects: usize,
    pub seq_len: usize,
    /// Width and height in pixels.
    pub image_size: (usize, usize),
    /// Per-frame displacement, normalized.
    pub speed_range: (f64, f64),
    /// Box side lengths, normalized.
    pub size_range: (f64, f64),
    /// Chance an object enters after the first frame.
    pub birth_prob: f64,
    /// Chance an object leaves before the last frame.
    pub death_prob: f64,
    /// Chance an object is aimed at object 1 (random layout only).
    pub crossing_prob: f64,
    /// Per-frame uniform velocity jitter, normalized.
    pub motion_noise: f64,
    /// Vertical gap between the two crossing paths as a fraction of the
    /// per-frame step (crossing layout only). Below 1 a nearest-center
    /// linker prefers the wrong partner at the crossing.
    pub crossing_offset: f64,
    pub layout: Layout,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_objects: 3,
            seq_len: 20,
            image_size: (64, 64),
            speed_range: (0.01, 0.04),
            size_range: (0.12, 0.2),
            birth_prob: 0.0,
            death_prob: 0.0,
            crossing_prob: 0.3,
            motion_noise: 0.002,
            crossing_offset: 0.25,
            layout: Layout::Random,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Three objects, twenty frames, one crossing occlusion.
    pub fn crossing() -> Self {
        Self {
            speed_range: (0.01, 0.06),
            size_range: (0.14, 0.14),
            layout: Layout::Crossing,
            crossing_prob: 0.0,
            motion_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 {
            return Err(Error::Config("n_objects must be at least 1".into()));
        }
        if self.seq_len < 2 {
            return Err(Error::Config("seq_len must be at least 2".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        let (s0, s1) = self.size_range;
        if !(s0 > 0.0 && s0 <= s1 && s1 < 1.0) {
            return Err(Error::Config("size_range must satisfy 0 < min <= max < 1".into()));
        }
        let (v0, v1) = self.speed_range;
        if !(v0 >= 0.0 && v0 <= v1) {
            return Err(Error::Config("speed_range must satisfy 0 <= min <= max".into()));
        }
        for p in [self.birth_prob, self.death_prob, self.crossing_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("probabilities must lie in [0, 1]".into()));
            }
        }
        if !(0.0..1.0).contains(&self.crossing_offset) {
            return Err(Error::Config("crossing_offset must lie in [0, 1)".into()));
        }
        if !(self.motion_noise >= 0.0) {
            return Err(Error::Config("motion_noise must be non-negative".into()));
        }
        if self.layout == Layout::Crossing && self.n_objects < 2 {
            return Err(Error::Config("crossing layout needs at least 2 objects".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Texture {
    base: f64,
    contrast: f64,
    freq: (f64, f64),
}

impl Texture {
    fn random(rng: &mut impl Rng, index: usize) -> Self {
        // spread base intensities so objects differ even without stripes
        let base = 0.45 + 0.45 * ((index as f64 * 0.618_034) % 1.0);
        Self {
            base,
            contrast: rng.random_range(0.1..0.25),
            freq: (math::floor(rng.random_range(0.0..3.0)) + 1.0, math::floor(rng.random_range(0.0..3.0))),
        }
    }

    /// Intensity at local coordinates `(u, v)` in `[0, 1]²`.
    fn at(&self, u: f64, v: f64) -> f64 {
        let s = math::sin(2.0 * core::f64::consts::PI * (u * self.freq.0 + v * self.freq.1));
        (self.base + if s >= 0.0 { self.contrast } else { -self.contrast }).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
struct Track {
    texture: Texture,
    start: usize,
    end: usize,
    boxes: Vec<BoundingBox>,
}

fn bounce(c: &mut f64, v: &mut f64, half: f64) {
    if *c - half < 0.0 {
        *c = 2.0 * half - *c;
        *v = v.abs();
    } else if *c + half > 1.0 {
        *c = 2.0 * (1.0 - half) - *c;
        *v = -v.abs();
    }
    *c = c.clamp(half, 1.0 - half);
}

fn simulate(start: BoundingBox, mut vel: (f64, f64), frames: usize, noise: f64, rng: &mut impl Rng) -> Vec<BoundingBox> {
    let mut b = start;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        if t > 0 {
            if noise > 0.0 {
                vel.0 += rng.random_range(-noise..=noise);
                vel.1 += rng.random_range(-noise..=noise);
            }
            b.cx += vel.0;
            b.cy += vel.1;
            bounce(&mut b.cx, &mut vel.0, b.w / 2.0);
            bounce(&mut b.cy, &mut vel.1, b.h / 2.0);
        }
        out.push(b);
    }
    out
}

fn random_tracks(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::with_capacity(cfg.n_objects);
    for i in 0..cfg.n_objects {
        let texture = Texture::random(rng, i);
        let w = rng.random_range(cfg.size_range.0..=cfg.size_range.1);
        let h = rng.random_range(cfg.size_range.0..=cfg.size_range.1);
        let start = if rng.random_bool(cfg.birth_prob) { rng.random_range(1..cfg.seq_len) } else { 0 };
        let end = if start + 1 < cfg.seq_len && rng.random_bool(cfg.death_prob) {
            rng.random_range(start + 1..cfg.seq_len)
        } else {
            cfg.seq_len
        };
        let speed = rng.random_range(cfg.speed_range.0..=cfg.speed_range.1);
        let angle = rng.random_range(0.0..2.0 * core::f64::consts::PI);
        let mut vel = (speed * math::cos(angle), speed * math::sin(angle));
        let mut c = (rng.random_range(w / 2.0..=1.0 - w / 2.0), rng.random_range(h / 2.0..=1.0 - h / 2.0));
        let aim = i > 0 && rng.random_bool(cfg.crossing_prob);
        if aim {
            let target = &tracks[0];
            if target.start <= start && target.end > start {
                // place the object so it would reach object 1's position a few frames later
                let lead = 3.0 + math::floor(rng.random_range(0.0..3.0));
                let k = ((start as f64 + lead) as usize).min(target.end - 1) - target.start;
                let goal = target.boxes[k.min(target.boxes.len() - 1)];
                let steps = (k + target.start - start).max(1) as f64;
                c = (
                    (goal.cx - vel.0 * steps).clamp(w / 2.0, 1.0 - w / 2.0),
                    (goal.cy - vel.1 * steps).clamp(h / 2.0, 1.0 - h / 2.0),
                );
                vel = ((goal.cx - c.0) / steps, (goal.cy - c.1) / steps);
            }
        }
        let boxes = simulate(BoundingBox::new(c.0, c.1, w, h), vel, end - start, cfg.motion_noise, rng);
        tracks.push(Track { texture, start, end, boxes });
    }
    tracks
}

/// Folds `x` into `[lo, hi]` as if bouncing between the two walls.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let u = (x - lo) % (2.0 * span);
    let u = if u < 0.0 { u + 2.0 * span } else { u };
    lo + if u > span { 2.0 * span - u } else { u }
}

fn crossing_tracks(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Track> {
    let n = cfg.seq_len;
    let side = 0.5 * (cfg.size_range.0 + cfg.size_range.1);
    let speed = cfg.speed_range.1;
    // meet halfway between frames so no frame shows a full overlap
    let meet = (n as f64 - 1.0) / 2.0;
    let meet = if (meet - math::floor(meet)).abs() < 1e-9 { meet + 0.5 } else { meet };
    let offset = cfg.crossing_offset * speed;
    let mut tracks = Vec::with_capacity(cfg.n_objects);
    let straight = |cx: f64, cy: f64, vx: f64, vy: f64| -> Vec<BoundingBox> {
        (0..n)
            .map(|t| {
                let dt = t as f64 - meet;
                let cx = reflect(cx + vx * dt, side / 2.0, 1.0 - side / 2.0);
                let cy = reflect(cy + vy * dt, side / 2.0, 1.0 - side / 2.0);
                BoundingBox::new(cx, cy, side, side)
            })
            .collect()
    };
    let cy = 0.6;
    tracks.push(Track {
        texture: Texture::random(rng, 0),
        start: 0,
        end: n,
        boxes: straight(0.5, cy - offset / 2.0, speed, 0.0),
    });
    tracks.push(Track {
        texture: Texture::random(rng, 1),
        start: 0,
        end: n,
        boxes: straight(0.5, cy + offset / 2.0, -speed, 0.0),
    });
    for i in 2..cfg.n_objects {
        let lane = 0.2 + 0.15 * ((i - 2) % 2) as f64;
        let dir = if i % 2 == 0 { 0.5 } else { -0.5 };
        let boxes = (0..n)
            .map(|t| {
                let cx = reflect(0.5 + dir * speed * (t as f64 - meet), side / 2.0, 1.0 - side / 2.0);
                BoundingBox::new(cx, lane, side, side)
            })
            .collect();
        tracks.push(Track {
            texture: Texture::random(rng, i),
            start: 0,
            end: n,
            boxes,
        });
    }
    tracks
}

/// Fraction of pixel `[x0, x1)` covered by the interval `[a, b)`.
fn overlap(x0: f64, x1: f64, a: f64, b: f64) -> f64 {
    ((x1.min(b) - x0.max(a)) / (x1 - x0)).clamp(0.0, 1.0)
}

fn render(width: usize, height: usize, objects: &[(BoundingBox, Texture)]) -> Image {
    let mut img = Image::filled(width, height, BACKGROUND);
    for (b, tex) in objects {
        let c = b.corners();
        let (px0, px1) = (c.x1 * width as f64, c.x2 * width as f64);
        let (py0, py1) = (c.y1 * height as f64, c.y2 * height as f64);
        let xs = (math::floor(px0).max(0.0) as usize, (math::floor(px1) as usize + 1).min(width));
        let ys = (math::floor(py0).max(0.0) as usize, (math::floor(py1) as usize + 1).min(height));
        for y in ys.0..ys.1 {
            let cov_y = overlap(y as f64, y as f64 + 1.0, py0, py1);
            if cov_y == 0.0 {
                continue;
            }
            let v = ((y as f64 + 0.5 - py0) / (py1 - py0)).clamp(0.0, 1.0);
            for x in xs.0..xs.1 {
                let cov = cov_y * overlap(x as f64, x as f64 + 1.0, px0, px1);
                if cov == 0.0 {
                    continue;
                }
                let u = ((x as f64 + 0.5 - px0) / (px1 - px0)).clamp(0.0, 1.0);
                let old = img.get(x, y);
                img.set(x, y, old + cov * (tex.at(u, v) - old));
            }
        }
    }
    img
}

fn visibility(b: &BoundingBox, above: &[BoundingBox]) -> f64 {
    let c = b.corners();
    let mut seen = 0usize;
    for i in 0..VISIBILITY_GRID {
        for j in 0..VISIBILITY_GRID {
            let x = c.x1 + (i as f64 + 0.5) / VISIBILITY_GRID as f64 * b.w;
            let y = c.y1 + (j as f64 + 0.5) / VISIBILITY_GRID as f64 * b.h;
            if !above.iter().any(|o| o.contains_point(x, y)) {
                seen += 1;
            }
        }
    }
    seen as f64 / (VISIBILITY_GRID * VISIBILITY_GRID) as f64
}

/// Renders frames and ground truth. Identities are `1..=n_objects` in
/// drawing order. Frames are quantized to 8 bits so they survive a PNG
/// round trip unchanged.
pub fn generate_sequence(cfg: &SynthConfig) -> Result<(Vec<Image>, SequenceGT)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tracks = match cfg.layout {
        Layout::Random => random_tracks(cfg, &mut rng),
        Layout::Crossing => crossing_tracks(cfg, &mut rng),
    };
    let (width, height) = cfg.image_size;
    let mut gt = SequenceGT::new((width as u32, height as u32), cfg.seq_len);
    let mut frames = Vec::with_capacity(cfg.seq_len);
    for t in 0..cfg.seq_len {
        let live: Vec<(usize, BoundingBox, Texture)> = tracks
            .iter()
            .enumerate()
            .filter(|(_, tr)| tr.start <= t && t < tr.end)
            .map(|(i, tr)| (i, tr.boxes[t - tr.start], tr.texture))
            .collect();
        let drawn: Vec<(BoundingBox, Texture)> = live.iter().map(|&(_, b, tex)| (b, tex)).collect();
        frames.push(render(width, height, &drawn).quantized());
        gt.frames[t] = live
            .iter()
            .enumerate()
            .map(|(k, &(i, b, _))| {
                let above: Vec<BoundingBox> = live[k + 1..].iter().map(|l| l.1).collect();
                let mut o = LabeledObject::new(i as u64 + 1, b);
                o.visibility = visibility(&b, &above);
                o
            })
            .collect();
    }
    Ok((frames, gt))
}

/// Public detections derived from ground truth: every box jittered by up
/// to `jitter_frac` per coordinate, identities dropped.
pub fn public_detections(gt: &SequenceGT, jitter_frac: f64, seed: u64) -> Vec<Vec<BoundingBox>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gt.frames
        .iter()
        .map(|f| jitter_gt(f, jitter_frac, &mut rng).into_iter().map(|o| o.bbox).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::iou;

    #[test]
    fn single_object_spans_all_frames() {
        let cfg = SynthConfig {
            n_objects: 1,
            ..SynthConfig::default()
        };
        let (frames, gt) = generate_sequence(&cfg).unwrap();
        assert_eq!(frames.len(), 20);
        assert!(gt.frames.iter().all(|f| f.len() == 1 && f[0].identity == 1));
    }

    #[test]
    fn crossing_has_heavy_overlap() {
        let (_, gt) = generate_sequence(&SynthConfig::crossing()).unwrap();
        let best = gt
            .frames
            .iter()
            .map(|f| iou(&f[0].bbox, &f[1].bbox))
            .fold(0.0, f64::max);
        assert!(best > 0.3, "best IoU {best}");
        assert!(gt.frames.iter().any(|f| f[0].visibility < 0.5));
    }

    #[test]
    fn crossing_fools_nearest_center() {
        // across the meeting step, each object lands closer to where the
        // other one was
        let (_, gt) = generate_sequence(&SynthConfig::crossing()).unwrap();
        let swapped = gt.frames.windows(2).any(|w| {
            let (a0, b0) = (&w[0][0].bbox, &w[0][1].bbox);
            let (a1, b1) = (&w[1][0].bbox, &w[1][1].bbox);
            a0.center_distance(b1) < a0.center_distance(a1) && b0.center_distance(a1) < b0.center_distance(b1)
        });
        assert!(swapped);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig {
            seed: 7,
            birth_prob: 0.3,
            death_prob: 0.3,
            ..SynthConfig::default()
        };
        assert_eq!(generate_sequence(&cfg).unwrap(), generate_sequence(&cfg).unwrap());
    }

    #[test]
    fn rejects_empty_scene() {
        let cfg = SynthConfig {
            n_objects: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_sequence(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn frames_have_requested_size() {
        let cfg = SynthConfig {
            image_size: (48, 32),
            ..SynthConfig::default()
        };
        let (frames, gt) = generate_sequence(&cfg).unwrap();
        assert_eq!((frames[0].width(), frames[0].height()), (48, 32));
        assert_eq!(gt.image_size, (48, 32));
        gt.validate().unwrap();
    }
}
