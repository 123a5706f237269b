//! MOTChallenge-style sequence directories:
//!
//! ```text
//! <seq>/seqinfo.ini
//! <seq>/img1/000001.png ...
//! <seq>/gt/gt.txt
//! <seq>/det/det.txt
//! ```
//!
//! Frames are 8-bit grayscale PNGs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use attntrack_core::image::Image;
use attntrack_core::sequence::SequenceGT;
use attntrack_core::BoundingBox;

use crate::error::{CliError, Result};
use crate::mot::{self, MotRecord};

/// Contents of `seqinfo.ini`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqInfo {
    pub name: String,
    pub seq_length: usize,
    pub width: u32,
    pub height: u32,
    /// Seed the sequence was generated with, if any.
    pub seed: Option<u64>,
}

impl SeqInfo {
    pub fn to_text(&self) -> String {
        let mut s = String::from("[Sequence]\n");
        writeln!(s, "name={}", self.name).unwrap();
        writeln!(s, "imDir=img1").unwrap();
        writeln!(s, "seqLength={}", self.seq_length).unwrap();
        writeln!(s, "imWidth={}", self.width).unwrap();
        writeln!(s, "imHeight={}", self.height).unwrap();
        writeln!(s, "imExt=.png").unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed={seed}").unwrap();
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut name = None;
        let mut seq_length = None;
        let mut width = None;
        let mut height = None;
        let mut seed = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CliError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|_| err(format!("{k} is not an integer: {v:?}")));
            match k {
                "name" => name = Some(v.to_string()),
                "seqLength" => seq_length = Some(num(v)? as usize),
                "imWidth" => width = Some(num(v)? as u32),
                "imHeight" => height = Some(num(v)? as u32),
                "seed" => seed = Some(num(v)?),
                _ => {}
            }
        }
        let missing = |key: &str| CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("missing {key}"),
        };
        Ok(Self {
            name: name.unwrap_or_default(),
            seq_length: seq_length.ok_or_else(|| missing("seqLength"))?,
            width: width.ok_or_else(|| missing("imWidth"))?,
            height: height.ok_or_else(|| missing("imHeight"))?,
            seed,
        })
    }
}

/// A sequence directory on disk.
#[derive(Debug, Clone)]
pub struct SeqDir {
    root: PathBuf,
}

impl SeqDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory name, used as the sequence name in reports.
    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }

    pub fn info_path(&self) -> PathBuf {
        self.root.join("seqinfo.ini")
    }

    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.root.join("img1").join(format!("{:06}.png", t + 1))
    }

    pub fn gt_path(&self) -> PathBuf {
        self.root.join("gt").join("gt.txt")
    }

    pub fn det_path(&self) -> PathBuf {
        self.root.join("det").join("det.txt")
    }

    pub fn exists(&self) -> bool {
        self.info_path().is_file()
    }

    pub fn info(&self) -> Result<SeqInfo> {
        let p = self.info_path();
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        SeqInfo::parse(&text, &p)
    }

    /// Writes frames, ground truth and detections. Existing files are
    /// overwritten.
    pub fn write(&self, info: &SeqInfo, frames: &[Image], gt: &SequenceGT, dets: &[Vec<BoundingBox>]) -> Result<()> {
        for sub in ["img1", "gt", "det"] {
            let d = self.root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        }
        std::fs::write(self.info_path(), info.to_text()).map_err(|e| CliError::io(self.info_path(), e))?;
        for (t, f) in frames.iter().enumerate() {
            write_png(&self.frame_path(t), f)?;
        }
        mot::write_mot(&self.gt_path(), &mot::records_from_sequence(gt))?;
        let (w, h) = (gt.image_size.0 as f64, gt.image_size.1 as f64);
        let mut recs = Vec::new();
        for (t, frame) in dets.iter().enumerate() {
            for b in frame {
                let p = attntrack_core::bbox::denormalize(b, w, h);
                recs.push(MotRecord {
                    frame: t as u32 + 1,
                    id: -1,
                    left: p.left,
                    top: p.top,
                    width: p.width,
                    height: p.height,
                    conf: 1.0,
                });
            }
        }
        mot::write_mot(&self.det_path(), &recs)
    }

    pub fn read_frames(&self, info: &SeqInfo) -> Result<Vec<Image>> {
        (0..info.seq_length)
            .map(|t| {
                let img = read_png(&self.frame_path(t))?;
                if (img.width() as u32, img.height() as u32) != (info.width, info.height) {
                    return Err(CliError::Image(format!(
                        "{}: expected {}x{}, found {}x{}",
                        self.frame_path(t).display(),
                        info.width,
                        info.height,
                        img.width(),
                        img.height()
                    )));
                }
                Ok(img)
            })
            .collect()
    }

    pub fn read_gt(&self, info: &SeqInfo) -> Result<SequenceGT> {
        let p = self.gt_path();
        let recs = mot::read_mot(&p)?;
        mot::sequence_from_records(&recs, (info.width, info.height), info.seq_length, &p)
    }

    pub fn read_dets(&self, info: &SeqInfo) -> Result<Vec<Vec<BoundingBox>>> {
        let recs = mot::read_mot(&self.det_path())?;
        Ok(mot::detections_from_records(&recs, (info.width, info.height), info.seq_length))
    }
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.pixels().iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .ok_or_else(|| CliError::Image(format!("{}: bad image buffer", path.display())))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Image(format!("{}: {e}", path.display())))
}

pub fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::Image(format!("{}: {other}", path.display())),
    })?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let pixels = gray.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
    Ok(Image::new(w as usize, h as usize, pixels)?)
}
