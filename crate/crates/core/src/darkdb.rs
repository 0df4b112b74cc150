//! On-disk dark-frame database and the signal-independent noise samplers.
//!
//! Layout under the database root:
//!
//! ```text
//! manifest.txt                  one record per line (tab separated):
//!                               id, relative path, sensor, iso, exposure, captured_at
//! <sensor>/iso<iso>/<seq>.rnf   the frames, stored exactly as captured
//! ```
//!
//! Black levels are subtracted when sampling, never on disk.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::raw::{cfa_phase, BayerFrame, CfaPattern, SignalFrame};
use crate::rnf;
use crate::rng::{stream, Domain};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug)]
pub struct DarkRecord {
    pub id: String,
    /// Relative to the database root.
    pub path: PathBuf,
    pub sensor_id: String,
    pub iso: u32,
    pub exposure_seconds: f64,
    /// Capture time, seconds since the Unix epoch (0 when unknown).
    pub captured_at: u64,
    frame: OnceLock<BayerFrame>,
}

/// Selects the dark frames a sampler draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkKey {
    pub sensor_id: String,
    pub iso: u32,
    /// When set, only frames with this exposure time match.
    pub exposure_seconds: Option<f64>,
}

impl DarkKey {
    pub fn new(sensor_id: impl Into<String>, iso: u32) -> Self {
        DarkKey {
            sensor_id: sensor_id.into(),
            iso,
            exposure_seconds: None,
        }
    }

    pub fn with_exposure(mut self, seconds: f64) -> Self {
        self.exposure_seconds = Some(seconds);
        self
    }

    fn matches(&self, r: &DarkRecord) -> bool {
        r.sensor_id == self.sensor_id
            && r.iso == self.iso
            && self
                .exposure_seconds
                .is_none_or(|e| e == r.exposure_seconds)
    }
}

/// One patch draw and where it came from.
#[derive(Debug, Clone)]
pub struct PatchDraw {
    pub patch: SignalFrame,
    pub record_index: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug)]
pub struct DarkFrameDb {
    root: PathBuf,
    records: Vec<DarkRecord>,
    iso_set: Option<BTreeSet<u32>>,
}

fn valid_sensor_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl DarkFrameDb {
    /// Opens the database at `root`, creating an empty one if none exists.
    pub fn open_or_create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if root.join(MANIFEST).exists() {
            return Self::open(root);
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let db = DarkFrameDb {
            root: root.to_path_buf(),
            records: Vec::new(),
            iso_set: None,
        };
        db.write_manifest()?;
        Ok(db)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let manifest = root.join(MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let bad = |line: usize, reason: String| Error::Format {
            path: manifest.clone(),
            what: "manifest",
            reason: format!("line {line}: {reason}"),
        };
        let mut records = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(no + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |i: usize| -> Result<f64> {
                f[i].parse()
                    .map_err(|_| bad(no + 1, format!("bad number `{}`", f[i])))
            };
            let rel = PathBuf::from(f[1]);
            if !root.join(&rel).is_file() {
                return Err(bad(
                    no + 1,
                    format!("frame file {} is missing", root.join(&rel).display()),
                ));
            }
            records.push(DarkRecord {
                id: f[0].to_string(),
                path: rel,
                sensor_id: f[2].to_string(),
                iso: num(3)? as u32,
                exposure_seconds: num(4)?,
                captured_at: f[5]
                    .parse()
                    .map_err(|_| bad(no + 1, format!("bad timestamp `{}`", f[5])))?,
                frame: OnceLock::new(),
            });
        }
        Ok(DarkFrameDb {
            root: root.to_path_buf(),
            records,
            iso_set: None,
        })
    }

    /// Restricts ingestion to the given ISO settings.
    pub fn with_iso_set(mut self, isos: impl IntoIterator<Item = u32>) -> Self {
        self.iso_set = Some(isos.into_iter().collect());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[DarkRecord] {
        &self.records
    }

    /// Distinct `(sensor, iso)` pairs present, sorted.
    pub fn keys(&self) -> BTreeSet<(String, u32)> {
        self.records
            .iter()
            .map(|r| (r.sensor_id.clone(), r.iso))
            .collect()
    }

    fn write_manifest(&self) -> Result<()> {
        let mut text = String::from("# id\tpath\tsensor\tiso\texposure_seconds\tcaptured_at\n");
        for r in &self.records {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.path.to_string_lossy().replace('\\', "/"),
                r.sensor_id,
                r.iso,
                r.exposure_seconds,
                r.captured_at
            ));
        }
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    /// Stores `frame` and indexes it. Requires exclusive access.
    pub fn ingest(
        &mut self,
        frame: BayerFrame,
        sensor_id: &str,
        iso: u32,
        exposure_seconds: f64,
        captured_at: u64,
    ) -> Result<String> {
        if iso == 0 {
            return Err(Error::arg("iso", "must be positive"));
        }
        if let Some(set) = &self.iso_set {
            if !set.contains(&iso) {
                return Err(Error::arg(
                    "iso",
                    format!("{iso} is not a configured ISO setting"),
                ));
            }
        }
        if !valid_sensor_id(sensor_id) {
            return Err(Error::arg(
                "sensor",
                format!("`{sensor_id}` must be non-empty ASCII letters, digits, '-', '_' or '.'"),
            ));
        }
        if !(exposure_seconds >= 0.0 && exposure_seconds.is_finite()) {
            return Err(Error::arg(
                "exposure",
                format!("{exposure_seconds} must be >= 0"),
            ));
        }
        let seq = self
            .records
            .iter()
            .filter(|r| r.sensor_id == sensor_id && r.iso == iso)
            .count();
        let id = format!("{sensor_id}/iso{iso}/{seq:04}");
        let rel = PathBuf::from(sensor_id)
            .join(format!("iso{iso}"))
            .join(format!("{seq:04}.rnf"));
        let abs = self.root.join(&rel);
        if self.records.iter().any(|r| r.id == id) || abs.exists() {
            return Err(Error::DuplicateRecord(id));
        }
        let dir = abs.parent().expect("record path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        rnf::write(&abs, &frame)?;
        let record = DarkRecord {
            id: id.clone(),
            path: rel,
            sensor_id: sensor_id.to_string(),
            iso,
            exposure_seconds,
            captured_at,
            frame: OnceLock::new(),
        };
        let _ = record.frame.set(frame);
        self.records.push(record);
        self.write_manifest()?;
        Ok(id)
    }

    pub fn frame(&self, index: usize) -> Result<&BayerFrame> {
        let r = &self.records[index];
        if let Some(f) = r.frame.get() {
            return Ok(f);
        }
        let f = rnf::read(self.root.join(&r.path))?;
        Ok(r.frame.get_or_init(|| f))
    }

    /// Indices of matching records, in manifest order.
    pub fn select(&self, key: &DarkKey) -> Result<Vec<usize>> {
        let idx: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| key.matches(r))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::MissingDarkFrames {
                sensor_id: key.sensor_id.clone(),
                iso: key.iso,
            });
        }
        Ok(idx)
    }

    pub fn frames(&self, key: &DarkKey) -> Result<Vec<&BayerFrame>> {
        self.select(key)?
            .into_iter()
            .map(|i| self.frame(i))
            .collect()
    }

    /// Black-subtracted pixels of every matching frame, concatenated.
    pub fn pooled_noise(&self, key: &DarkKey) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for f in self.frames(key)? {
            let b = f.black_level();
            out.extend(f.samples().iter().map(|s| s - b));
        }
        Ok(out)
    }

    fn pixel_picker(&self, key: &DarkKey) -> Result<PixelPicker<'_>> {
        let frames = self.frames(key)?;
        let mut offsets = Vec::with_capacity(frames.len());
        let mut total = 0usize;
        for f in &frames {
            offsets.push(total);
            total += f.samples().len();
        }
        Ok(PixelPicker {
            frames,
            offsets,
            total,
        })
    }

    /// `count` values drawn uniformly with replacement from the pooled,
    /// black-subtracted pixels of all matching frames.
    pub fn sample_pixelwise(&self, key: &DarkKey, count: usize, seed: u64) -> Result<Vec<f64>> {
        let picker = self.pixel_picker(key)?;
        let mut rng = stream(seed, Domain::DarkSampling, &[0]);
        Ok((0..count).map(|_| picker.draw(&mut rng)).collect())
    }

    /// A `width×height` frame of independent pixel-wise draws. Each row has
    /// its own stream, so the result does not depend on evaluation order.
    pub fn sample_pixelwise_frame(
        &self,
        key: &DarkKey,
        width: usize,
        height: usize,
        cfa: CfaPattern,
        seed: u64,
    ) -> Result<SignalFrame> {
        let picker = self.pixel_picker(key)?;
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            let mut rng = stream(seed, Domain::DarkSampling, &[1, r as u64]);
            values.extend((0..width).map(|_| picker.draw(&mut rng)));
        }
        Ok(SignalFrame::from_parts(width, height, values, cfa))
    }

    fn crop(
        &self,
        index: usize,
        row: usize,
        col: usize,
        h: usize,
        w: usize,
    ) -> Result<SignalFrame> {
        let f = self.frame(index)?;
        let b = f.black_level();
        let mut values = Vec::with_capacity(h * w);
        for r in row..row + h {
            values.extend(
                f.samples()[r * f.width() + col..r * f.width() + col + w]
                    .iter()
                    .map(|s| s - b),
            );
        }
        Ok(SignalFrame::from_parts(
            w,
            h,
            values,
            cfa_phase(f.cfa(), row as i64, col as i64),
        ))
    }

    fn check_fits(f: &BayerFrame, h: usize, w: usize) -> Result<()> {
        if h == 0 || w == 0 || h > f.height() || w > f.width() {
            return Err(Error::PatchTooLarge {
                h,
                w,
                height: f.height(),
                width: f.width(),
            });
        }
        Ok(())
    }

    /// Uniform frame, uniform origin, no constraint on CFA phase.
    pub fn draw_patch(&self, key: &DarkKey, h: usize, w: usize, seed: u64) -> Result<PatchDraw> {
        let idx = self.select(key)?;
        let mut rng = stream(seed, Domain::DarkSampling, &[2]);
        let record_index = idx[rng.random_range(0..idx.len())];
        let f = self.frame(record_index)?;
        Self::check_fits(f, h, w)?;
        let row = rng.random_range(0..=f.height() - h);
        let col = rng.random_range(0..=f.width() - w);
        Ok(PatchDraw {
            patch: self.crop(record_index, row, col, h, w)?,
            record_index,
            row,
            col,
        })
    }

    pub fn sample_patch(
        &self,
        key: &DarkKey,
        h: usize,
        w: usize,
        seed: u64,
    ) -> Result<SignalFrame> {
        self.draw_patch(key, h, w, seed).map(|d| d.patch)
    }

    /// Like [`draw_patch`](Self::draw_patch), with the origin restricted so
    /// the patch's CFA phase equals `target`.
    pub fn draw_patch_aligned(
        &self,
        key: &DarkKey,
        h: usize,
        w: usize,
        target: CfaPattern,
        seed: u64,
    ) -> Result<PatchDraw> {
        let idx = self.select(key)?;
        let mut rng = stream(seed, Domain::DarkSampling, &[3]);
        let record_index = idx[rng.random_range(0..idx.len())];
        let f = self.frame(record_index)?;
        Self::check_fits(f, h, w)?;
        let (pr, pc) = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .into_iter()
            .find(|&(r, c)| cfa_phase(f.cfa(), r, c) == target)
            .expect("every pattern is a phase shift of every other");
        let (pr, pc) = (pr as usize, pc as usize);
        let (slack_r, slack_c) = (f.height() - h, f.width() - w);
        if slack_r < pr || slack_c < pc {
            return Err(Error::PatchTooLarge {
                h: h + pr,
                w: w + pc,
                height: f.height(),
                width: f.width(),
            });
        }
        let row = pr + 2 * rng.random_range(0..=(slack_r - pr) / 2);
        let col = pc + 2 * rng.random_range(0..=(slack_c - pc) / 2);
        let patch = self.crop(record_index, row, col, h, w)?;
        debug_assert_eq!(patch.cfa(), target);
        Ok(PatchDraw {
            patch,
            record_index,
            row,
            col,
        })
    }

    pub fn sample_patch_pattern_aligned(
        &self,
        key: &DarkKey,
        h: usize,
        w: usize,
        target: CfaPattern,
        seed: u64,
    ) -> Result<SignalFrame> {
        self.draw_patch_aligned(key, h, w, target, seed)
            .map(|d| d.patch)
    }
}

struct PixelPicker<'a> {
    frames: Vec<&'a BayerFrame>,
    offsets: Vec<usize>,
    total: usize,
}

impl PixelPicker<'_> {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.total);
        let fi = self.offsets.partition_point(|&o| o <= k) - 1;
        let f = self.frames[fi];
        f.samples()[k - self.offsets[fi]] - f.black_level()
    }
}
