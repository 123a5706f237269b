//! MOTChallenge CSV: `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`.
//!
//! Frames and ids are integers, boxes are pixel floats. Records are sorted
//! by `(frame, id)` on read and on write. Writing uses two decimals for
//! box and confidence fields and `-1` for the world coordinates.

use std::fmt::Write as _;
use std::path::Path;

use attntrack_core::bbox::{denormalize, normalize, PixelBox};
use attntrack_core::sequence::{LabeledObject, SequenceGT};
use attntrack_core::BoundingBox;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    /// 1-based.
    pub frame: u32,
    /// Object id; public detections use −1.
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub conf: f64,
}

impl MotRecord {
    pub fn pixel_box(&self) -> PixelBox {
        PixelBox {
            left: self.left,
            top: self.top,
            width: self.width,
            height: self.height,
        }
    }
}

fn sort(records: &mut [MotRecord]) {
    records.sort_by(|a, b| (a.frame, a.id).cmp(&(b.frame, b.id)));
}

/// Parses MOT text. `source` names the input in error messages. Blank
/// lines are skipped; the world coordinates, when present, are ignored.
pub fn parse_mot(text: &str, source: &Path) -> Result<Vec<MotRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| CliError::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(6..=10).contains(&fields.len()) {
            return Err(err(format!("expected 6 to 10 fields, found {}", fields.len())));
        }
        let float = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[k].parse().map_err(|_| err(format!("{name} is not a number: {:?}", fields[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("{name} is not finite")))
            }
        };
        let frame: u32 = fields[0].parse().map_err(|_| err(format!("frame is not an integer: {:?}", fields[0])))?;
        if frame == 0 {
            return Err(err("frames are 1-based".into()));
        }
        let id: i64 = fields[1].parse().map_err(|_| err(format!("id is not an integer: {:?}", fields[1])))?;
        let rec = MotRecord {
            frame,
            id,
            left: float(2, "bb_left")?,
            top: float(3, "bb_top")?,
            width: float(4, "bb_width")?,
            height: float(5, "bb_height")?,
            conf: if fields.len() > 6 { float(6, "conf")? } else { 1.0 },
        };
        if rec.width <= 0.0 || rec.height <= 0.0 {
            return Err(err("box width and height must be positive".into()));
        }
        for k in 7..fields.len() {
            float(k, "world coordinate")?;
        }
        out.push(rec);
    }
    sort(&mut out);
    Ok(out)
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_mot(&text, path)
}

/// Formats records in canonical form, sorted.
pub fn format_mot(records: &[MotRecord]) -> String {
    let mut sorted = records.to_vec();
    sort(&mut sorted);
    let mut s = String::new();
    for r in &sorted {
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
            r.frame, r.id, r.left, r.top, r.width, r.height, r.conf
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_mot(path: &Path, records: &[MotRecord]) -> Result<()> {
    std::fs::write(path, format_mot(records)).map_err(|e| CliError::io(path, e))
}

/// Pixel records of a normalized sequence. Confidence is 1.
pub fn records_from_sequence(seq: &SequenceGT) -> Vec<MotRecord> {
    let (w, h) = (seq.image_size.0 as f64, seq.image_size.1 as f64);
    let mut out = Vec::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        for o in frame {
            let p = denormalize(&o.bbox, w, h);
            out.push(MotRecord {
                frame: t as u32 + 1,
                id: o.identity as i64,
                left: p.left,
                top: p.top,
                width: p.width,
                height: p.height,
                conf: 1.0,
            });
        }
    }
    out
}

/// Normalized sequence of `n_frames` frames from pixel records. Records
/// beyond `n_frames` are an error, as are non-positive ids or an id seen
/// twice in one frame.
pub fn sequence_from_records(records: &[MotRecord], image_size: (u32, u32), n_frames: usize, source: &Path) -> Result<SequenceGT> {
    let mut seq = SequenceGT::new(image_size, n_frames);
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    for r in records {
        let t = r.frame as usize - 1;
        if t >= n_frames {
            return Err(CliError::Config(format!(
                "{}: frame {} beyond sequence length {}",
                source.display(),
                r.frame,
                n_frames
            )));
        }
        if r.id <= 0 {
            return Err(CliError::Config(format!("{}: id {} is not positive", source.display(), r.id)));
        }
        let id = r.id as u64;
        if seq.frames[t].iter().any(|o| o.identity == id) {
            return Err(CliError::Config(format!(
                "{}: id {} appears twice in frame {}",
                source.display(),
                id,
                r.frame
            )));
        }
        let mut o = LabeledObject::new(id, normalize(&r.pixel_box(), w, h));
        o.visibility = 1.0;
        seq.frames[t].push(o);
    }
    Ok(seq)
}

/// Normalized detection boxes per frame, ignoring ids.
pub fn detections_from_records(records: &[MotRecord], image_size: (u32, u32), n_frames: usize) -> Vec<Vec<BoundingBox>> {
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    let mut out = vec![Vec::new(); n_frames];
    for r in records {
        if let Some(f) = out.get_mut(r.frame as usize - 1) {
            f.push(normalize(&r.pixel_box(), w, h));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> &'static Path {
        Path::new("gt.txt")
    }

    #[test]
    fn parses_reference_line() {
        let r = parse_mot("1,1,10,20,30,40,1,-1,-1,-1\n", src()).unwrap();
        assert_eq!(
            r,
            vec![MotRecord {
                frame: 1,
                id: 1,
                left: 10.0,
                top: 20.0,
                width: 30.0,
                height: 40.0,
                conf: 1.0
            }]
        );
    }

    #[test]
    fn sorts_on_read() {
        let r = parse_mot("2,1,0,0,1,1,1,-1,-1,-1\n1,3,0,0,1,1,1,-1,-1,-1\n1,2,0,0,1,1,1,-1,-1,-1\n", src()).unwrap();
        let keys: Vec<(u32, i64)> = r.iter().map(|r| (r.frame, r.id)).collect();
        assert_eq!(keys, vec![(1, 2), (1, 3), (2, 1)]);
    }

    #[test]
    fn negative_width_is_rejected_with_line_number() {
        let e = parse_mot("1,1,0,0,1,1,1,-1,-1,-1\n\n1,2,10,20,-30,40,1,-1,-1,-1\n", src()).unwrap_err();
        match e {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_fields() {
        assert!(parse_mot("1,1,10,20\n", src()).is_err());
        assert!(parse_mot("a,1,10,20,30,40,1,-1,-1,-1\n", src()).is_err());
        assert!(parse_mot("0,1,10,20,30,40,1,-1,-1,-1\n", src()).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "2,1,10.004,20,30,40,0.5,-1,-1,-1\n1,1,1,2,3,4,1,5,6,7\n";
        let once = format_mot(&parse_mot(text, src()).unwrap());
        let twice = format_mot(&parse_mot(&once, src()).unwrap());
        assert_eq!(once, twice);
        assert_eq!(once, "1,1,1.00,2.00,3.00,4.00,1.00,-1,-1,-1\n2,1,10.00,20.00,30.00,40.00,0.50,-1,-1,-1\n");
    }

    #[test]
    fn sequence_conversion_round_trip() {
        let recs = parse_mot("1,1,10,20,30,40,1,-1,-1,-1\n2,1,12,20,30,40,1,-1,-1,-1\n", src()).unwrap();
        let seq = sequence_from_records(&recs, (100, 200), 2, src()).unwrap();
        let b = seq.frames[0][0].bbox;
        assert!((b.cx - 0.25).abs() < 1e-12 && (b.cy - 0.2).abs() < 1e-12);
        assert_eq!(format_mot(&records_from_sequence(&seq)), format_mot(&recs));
    }

    #[test]
    fn duplicate_id_in_frame_rejected() {
        let recs = parse_mot("1,1,10,20,30,40\n1,1,12,20,30,40\n", src()).unwrap();
        assert!(sequence_from_records(&recs, (100, 100), 1, src()).is_err());
    }
}
