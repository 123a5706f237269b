//! Per-frame ground truth and hypotheses.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::Identity;

/// A box with identity, class and visible fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledObject {
    pub identity: Identity,
    pub bbox: BoundingBox,
    pub class: usize,
    /// Visible fraction in `[0, 1]`; hypotheses use 1.
    pub visibility: f64,
}

impl LabeledObject {
    pub fn new(identity: Identity, bbox: BoundingBox) -> Self {
        Self {
            identity,
            bbox,
            class: 0,
            visibility: 1.0,
        }
    }
}

/// Ordered frames of labeled boxes. Used for ground truth as well as for
/// tracker output (hypotheses).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceGT {
    pub image_size: (u32, u32),
    pub frames: Vec<Vec<LabeledObject>>,
}

impl SequenceGT {
    pub fn new(image_size: (u32, u32), n_frames: usize) -> Self {
        Self {
            image_size,
            frames: (0..n_frames).map(|_| Vec::new()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn identities(&self) -> BTreeSet<Identity> {
        self.frames.iter().flatten().map(|o| o.identity).collect()
    }

    /// Frame indices at which each identity is present.
    pub fn presence(&self) -> BTreeMap<Identity, Vec<usize>> {
        let mut map: BTreeMap<Identity, Vec<usize>> = BTreeMap::new();
        for (t, frame) in self.frames.iter().enumerate() {
            for o in frame {
                map.entry(o.identity).or_default().push(t);
            }
        }
        map
    }

    /// Identities are unique within a frame and every box is valid.
    pub fn validate(&self) -> Result<()> {
        for (t, frame) in self.frames.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for o in frame {
                if !seen.insert(o.identity) {
                    return Err(Error::Input(alloc::format!(
                        "identity {} appears twice in frame {}",
                        o.identity, t
                    )));
                }
                if !o.bbox.is_valid() {
                    return Err(Error::Input(alloc::format!(
                        "degenerate box for identity {} in frame {}",
                        o.identity, t
                    )));
                }
            }
        }
        Ok(())
    }
}
