//! Sensor profiles: calibrated per-ISO parameters as a `key=value` document.
//!
//! ```text
//! sensor_id=cam0
//!
//! [iso.1600]
//! beta1=3.2
//! beta2=41.5
//! family=student_t
//! location=0.1
//! scale=5.9
//! shape=4.2
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dist::{Family, FittedDistribution};
use crate::error::{Error, Result};
use crate::kv::{Document, Section};
use crate::raw::Quantizer;

/// Everything known about one ISO setting. Fields are optional because
/// different calibration steps fill different parts of the profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsoProfile {
    /// Total system gain `K`, DN per photo-electron.
    pub beta1: Option<f64>,
    /// Signal-independent variance, DN².
    pub beta2: Option<f64>,
    pub row_sigma: Option<f64>,
    pub tl_lambda: Option<f64>,
    pub tl_scale: Option<f64>,
    /// High-bit reconstruction distribution for the dark-frame noise.
    pub dist: Option<FittedDistribution>,
    pub quantizer: Option<Quantizer>,
}

impl IsoProfile {
    /// Fields set in `other` overwrite ours.
    pub fn merge(&mut self, other: &IsoProfile) {
        macro_rules! take {
            ($($f:ident),*) => {$( if other.$f.is_some() { self.$f = other.$f; } )*};
        }
        take!(beta1, beta2, row_sigma, tl_lambda, tl_scale, dist, quantizer);
    }

    fn to_section(&self, iso: u32) -> Section {
        let mut s = Section::new(format!("iso.{iso}"));
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                s.set(k, v);
            }
        };
        put("beta1", self.beta1);
        put("beta2", self.beta2);
        put("row_sigma", self.row_sigma);
        put("tl_lambda", self.tl_lambda);
        put("tl_scale", self.tl_scale);
        if let Some(d) = &self.dist {
            s.set("family", d.family);
            s.set("location", d.location);
            s.set("scale", d.scale);
            if let Some(k) = d.shape {
                s.set("shape", k);
            }
            if d.gof_statistic.is_finite() {
                s.set("gof", d.gof_statistic);
            }
        }
        if let Some(q) = &self.quantizer {
            s.set("bit_depth", q.bit_depth);
            s.set("quant_step", q.quant_step);
            s.set("black_level", q.black_level);
            s.set("white_level", q.white_level);
        }
        s
    }

    fn from_section(s: &Section, origin: &Path) -> Result<Self> {
        let dist = match s.parse_opt::<Family>("family", origin)? {
            Some(family) => {
                let mut d = FittedDistribution::new(
                    family,
                    s.parse("location", origin)?,
                    s.parse("scale", origin)?,
                    s.parse_opt("shape", origin)?,
                )?;
                d.gof_statistic = s.parse_opt("gof", origin)?.unwrap_or(f64::NAN);
                Some(d)
            }
            None => None,
        };
        let quantizer = match s.parse_opt::<u32>("bit_depth", origin)? {
            Some(b) => {
                let mut q = Quantizer::new(
                    b,
                    s.parse("quant_step", origin)?,
                    s.parse("black_level", origin)?,
                )?;
                if let Some(w) = s.parse_opt("white_level", origin)? {
                    q = q.with_white_level(w)?;
                }
                Some(q)
            }
            None => None,
        };
        Ok(IsoProfile {
            beta1: s.parse_opt("beta1", origin)?,
            beta2: s.parse_opt("beta2", origin)?,
            row_sigma: s.parse_opt("row_sigma", origin)?,
            tl_lambda: s.parse_opt("tl_lambda", origin)?,
            tl_scale: s.parse_opt("tl_scale", origin)?,
            dist,
            quantizer,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorProfile {
    pub sensor_id: String,
    pub isos: BTreeMap<u32, IsoProfile>,
}

impl SensorProfile {
    pub fn new(sensor_id: impl Into<String>) -> Self {
        SensorProfile {
            sensor_id: sensor_id.into(),
            isos: BTreeMap::new(),
        }
    }

    pub fn iso(&self, iso: u32) -> Result<&IsoProfile> {
        self.isos.get(&iso).ok_or_else(|| {
            Error::MissingProfileEntry(format!("profile for `{}` has no ISO {iso}", self.sensor_id))
        })
    }

    pub fn iso_mut(&mut self, iso: u32) -> &mut IsoProfile {
        self.isos.entry(iso).or_default()
    }

    /// Looks up a required field, naming it in the error when absent.
    pub fn require<T: Copy>(
        &self,
        iso: u32,
        field: &str,
        get: impl Fn(&IsoProfile) -> Option<T>,
    ) -> Result<T> {
        get(self.iso(iso)?).ok_or_else(|| {
            Error::MissingProfileEntry(format!(
                "profile for `{}` has no `{field}` at ISO {iso}",
                self.sensor_id
            ))
        })
    }

    pub fn merge(&mut self, other: &SensorProfile) {
        if self.sensor_id.is_empty() {
            self.sensor_id = other.sensor_id.clone();
        }
        for (iso, p) in &other.isos {
            self.iso_mut(*iso).merge(p);
        }
    }

    pub fn to_document(&self) -> Document {
        let mut root = Section::default();
        root.set("sensor_id", &self.sensor_id);
        let mut sections = vec![root];
        sections.extend(self.isos.iter().map(|(iso, p)| p.to_section(*iso)));
        Document { sections }
    }

    pub fn from_document(doc: &Document, origin: &Path) -> Result<Self> {
        let mut p = SensorProfile::new(doc.root().get("sensor_id").unwrap_or_default());
        for s in doc.sections.iter().skip(1) {
            let iso = s
                .name
                .strip_prefix("iso.")
                .and_then(|n| n.parse::<u32>().ok())
                .ok_or_else(|| Error::Format {
                    path: origin.to_path_buf(),
                    what: "sensor profile",
                    reason: format!("unexpected section [{}]; expected [iso.<n>]", s.name),
                })?;
            p.isos.insert(iso, IsoProfile::from_section(s, origin)?);
        }
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&Document::parse(&text, path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_document().render()).map_err(|e| Error::io(path, e))
    }

    /// Merges `self` into the profile at `path` if one exists, then writes.
    pub fn merge_into_file(&self, path: &Path) -> Result<SensorProfile> {
        let mut merged = if path.exists() {
            Self::read(path)?
        } else {
            SensorProfile::new(&self.sensor_id)
        };
        merged.merge(self);
        merged.write(path)?;
        Ok(merged)
    }
}
