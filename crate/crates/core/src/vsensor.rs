//! A virtual sensor with known parameters.
//!
//! Each pixel follows `D = (K_a·(P(I) + N₁) + N₂)·K_d + black`, quantized
//! and clipped. `N₁` is the sum of a per-pixel read draw, a draw shared by
//! the whole row and a temporally fixed per-pixel offset; `N₂` is Gaussian
//! with optional per-CFA-channel scaling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::dist::tukey;
use crate::error::{Error, Result};
use crate::kv::{Document, Section};
use crate::raw::{quantize_clipped, BayerFrame, CfaPattern, Quantizer, SignalFrame};
use crate::rng::{derive_seed, stream, Domain};

/// Shape of the pre-gain read noise `N₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReadDistribution {
    Gaussian,
    TukeyLambda(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSensorParams {
    pub width: usize,
    pub height: usize,
    pub cfa: CfaPattern,
    pub analog_gain: f64,
    pub digital_gain: f64,
    /// Standard deviation of `N₁`'s per-pixel read draw, photo-electrons.
    pub read1_sigma: f64,
    pub read1_dist: ReadDistribution,
    /// Standard deviation of `N₂`, in post-analog-gain units.
    pub read2_sigma: f64,
    /// Multiplier on `read2_sigma` per CFA channel.
    pub read2_channel_scale: [f64; 4],
    /// Row draw shared across a row, part of `N₁`.
    pub row_sigma: f64,
    pub fpn_amplitude: f64,
    pub fpn_seed: u64,
    /// Draw photon counts from `P(I)`; when off, `I` passes through as is.
    pub shot_noise: bool,
    pub quantizer: Quantizer,
    /// Analog gain for each ISO setting.
    pub iso_gains: BTreeMap<u32, f64>,
}

impl Default for VirtualSensorParams {
    fn default() -> Self {
        VirtualSensorParams {
            width: 256,
            height: 256,
            cfa: CfaPattern::Rggb,
            analog_gain: 1.0,
            digital_gain: 1.0,
            read1_sigma: 0.0,
            read1_dist: ReadDistribution::Gaussian,
            read2_sigma: 0.0,
            read2_channel_scale: [1.0; 4],
            row_sigma: 0.0,
            fpn_amplitude: 0.0,
            fpn_seed: 0,
            shot_noise: true,
            quantizer: Quantizer::new(14, 1.0, 512.0).expect("static quantizer"),
            iso_gains: BTreeMap::new(),
        }
    }
}

impl VirtualSensorParams {
    pub fn total_gain(&self) -> f64 {
        self.analog_gain * self.digital_gain
    }

    /// Copy with the analog gain taken from the ISO table.
    pub fn for_iso(&self, iso: u32) -> Result<Self> {
        let gain = self.iso_gains.get(&iso).ok_or_else(|| {
            Error::MissingProfileEntry(format!("ISO {iso} in the sensor gain table"))
        })?;
        Ok(VirtualSensorParams {
            analog_gain: *gain,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.analog_gain > 0.0 && self.digital_gain > 0.0) {
            return Err(Error::arg(
                "gain",
                "analog and digital gains must be positive",
            ));
        }
        let sigmas = [
            ("read1_sigma", self.read1_sigma),
            ("read2_sigma", self.read2_sigma),
            ("row_sigma", self.row_sigma),
            ("fpn_amplitude", self.fpn_amplitude),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::arg(name, format!("{s} must be >= 0")));
            }
        }
        if self.read2_channel_scale.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::arg("read2_channel_scale", "scales must be >= 0"));
        }
        if let ReadDistribution::TukeyLambda(l) = self.read1_dist {
            if l <= -0.5 {
                return Err(Error::arg(
                    "read1_lambda",
                    "needs finite variance (λ > -0.5)",
                ));
            }
        }
        if !self.width.is_multiple_of(2)
            || !self.height.is_multiple_of(2)
            || self.width == 0
            || self.height == 0
        {
            return Err(Error::arg("width/height", "must be positive and even"));
        }
        self.quantizer.validate()
    }

    /// Variance of the continuous dark signal in DN², before quantization.
    /// Channel scales enter as their mean square.
    pub fn analog_dark_variance(&self) -> f64 {
        let k = self.total_gain();
        let ch = self.read2_channel_scale.iter().map(|s| s * s).sum::<f64>() / 4.0;
        k * k * (self.read1_sigma.powi(2) + self.row_sigma.powi(2) + self.fpn_amplitude.powi(2))
            + (self.digital_gain * self.read2_sigma).powi(2) * ch
    }

    pub fn to_document(&self) -> Document {
        let mut s = Section::default();
        s.set("width", self.width);
        s.set("height", self.height);
        s.set("cfa", self.cfa);
        s.set("analog_gain", self.analog_gain);
        s.set("digital_gain", self.digital_gain);
        s.set("read1_sigma", self.read1_sigma);
        if let ReadDistribution::TukeyLambda(l) = self.read1_dist {
            s.set("read1_lambda", l);
        }
        s.set("read2_sigma", self.read2_sigma);
        s.set(
            "read2_channel_scale",
            self.read2_channel_scale.map(|v| v.to_string()).join(","),
        );
        s.set("row_sigma", self.row_sigma);
        s.set("fpn_amplitude", self.fpn_amplitude);
        s.set("fpn_seed", self.fpn_seed);
        s.set("shot_noise", self.shot_noise);
        s.set("bit_depth", self.quantizer.bit_depth);
        s.set("quant_step", self.quantizer.quant_step);
        s.set("black_level", self.quantizer.black_level);
        s.set("white_level", self.quantizer.white_level);
        for (iso, g) in &self.iso_gains {
            s.set(&format!("iso.{iso}"), g);
        }
        Document { sections: vec![s] }
    }

    pub fn from_document(doc: &Document, origin: &Path) -> Result<Self> {
        let s = doc.root();
        let d = VirtualSensorParams::default();
        let bit_depth = s
            .parse_opt("bit_depth", origin)?
            .unwrap_or(d.quantizer.bit_depth);
        let quant_step = s
            .parse_opt("quant_step", origin)?
            .unwrap_or(d.quantizer.quant_step);
        let black = s
            .parse_opt("black_level", origin)?
            .unwrap_or(d.quantizer.black_level);
        let mut quantizer = Quantizer::new(bit_depth, quant_step, black)?;
        if let Some(w) = s.parse_opt("white_level", origin)? {
            quantizer = quantizer.with_white_level(w)?;
        }
        let read2_channel_scale = match s.get("read2_channel_scale") {
            None => d.read2_channel_scale,
            Some(raw) => {
                let v: Vec<f64> = raw
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Format {
                        path: origin.to_path_buf(),
                        what: "sensor parameters",
                        reason: format!("bad read2_channel_scale `{raw}`"),
                    })?;
                v.try_into().map_err(|_| Error::Format {
                    path: origin.to_path_buf(),
                    what: "sensor parameters",
                    reason: "read2_channel_scale needs 4 values".into(),
                })?
            }
        };
        let mut iso_gains = BTreeMap::new();
        for (k, _) in &s.entries {
            if let Some(iso) = k.strip_prefix("iso.") {
                let iso: u32 = iso.parse().map_err(|_| Error::Format {
                    path: origin.to_path_buf(),
                    what: "sensor parameters",
                    reason: format!("bad ISO key `{k}`"),
                })?;
                iso_gains.insert(iso, s.parse(k, origin)?);
            }
        }
        let p = VirtualSensorParams {
            width: s.parse_opt("width", origin)?.unwrap_or(d.width),
            height: s.parse_opt("height", origin)?.unwrap_or(d.height),
            cfa: match s.get("cfa") {
                Some(c) => c.parse()?,
                None => d.cfa,
            },
            analog_gain: s.parse_opt("analog_gain", origin)?.unwrap_or(d.analog_gain),
            digital_gain: s
                .parse_opt("digital_gain", origin)?
                .unwrap_or(d.digital_gain),
            read1_sigma: s.parse_opt("read1_sigma", origin)?.unwrap_or(0.0),
            read1_dist: match s.parse_opt::<f64>("read1_lambda", origin)? {
                Some(l) => ReadDistribution::TukeyLambda(l),
                None => ReadDistribution::Gaussian,
            },
            read2_sigma: s.parse_opt("read2_sigma", origin)?.unwrap_or(0.0),
            read2_channel_scale,
            row_sigma: s.parse_opt("row_sigma", origin)?.unwrap_or(0.0),
            fpn_amplitude: s.parse_opt("fpn_amplitude", origin)?.unwrap_or(0.0),
            fpn_seed: s.parse_opt("fpn_seed", origin)?.unwrap_or(0),
            shot_noise: s.parse_opt("shot_noise", origin)?.unwrap_or(true),
            quantizer,
            iso_gains,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&Document::parse(&text, path)?, path)
    }
}

/// Temporally constant per-pixel offsets, in the units of `N₁`.
fn fixed_pattern(params: &VirtualSensorParams) -> Option<Vec<f64>> {
    if params.fpn_amplitude == 0.0 {
        return None;
    }
    let w = params.width;
    let mut map = vec![0.0; w * params.height];
    map.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let mut rng = stream(params.fpn_seed, Domain::FixedPattern, &[r as u64]);
        for v in row {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = params.fpn_amplitude * z;
        }
    });
    Some(map)
}

fn read1_draw<R: Rng>(params: &VirtualSensorParams, rng: &mut R) -> f64 {
    if params.read1_sigma == 0.0 {
        return 0.0;
    }
    match params.read1_dist {
        ReadDistribution::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            params.read1_sigma * z
        }
        ReadDistribution::TukeyLambda(l) => {
            let u: f64 = rng.random();
            params.read1_sigma / tukey::variance(l).sqrt() * tukey::quantile(l, u)
        }
    }
}

fn simulate_analog_with(
    photons: &[f64],
    params: &VirtualSensorParams,
    fpn: Option<&[f64]>,
    seed: u64,
) -> Result<SignalFrame> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    if photons.len() != w * h {
        return Err(Error::arg(
            "photon_map",
            format!("{} values for a {w}x{h} sensor", photons.len()),
        ));
    }
    if let Some(bad) = photons.iter().find(|&&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::arg(
            "photon_map",
            format!("photon count {bad} must be >= 0"),
        ));
    }
    let (ka, kd) = (params.analog_gain, params.digital_gain);
    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
        let mut rng = stream(seed, Domain::Frame, &[r as u64]);
        let row_offset = if params.row_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut stream(seed, Domain::Row, &[r as u64]));
            params.row_sigma * z
        } else {
            0.0
        };
        let mut poisson: Option<(f64, Poisson<f64>)> = None;
        for (c, v) in out.iter_mut().enumerate() {
            let i = r * w + c;
            let lambda = photons[i];
            let electrons = if !params.shot_noise {
                lambda
            } else if lambda > 0.0 {
                let dist = match poisson {
                    Some((l, d)) if l == lambda => d,
                    _ => {
                        let d = Poisson::new(lambda).expect("finite positive mean");
                        poisson = Some((lambda, d));
                        d
                    }
                };
                dist.sample(&mut rng)
            } else {
                0.0
            };
            let n1 = read1_draw(params, &mut rng) + row_offset + fpn.map_or(0.0, |m| m[i]);
            let n2 = if params.read2_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.read2_sigma
                    * params.read2_channel_scale[params.cfa.color_at(r, c).index()]
                    * z
            } else {
                0.0
            };
            *v = (ka * (electrons + n1) + n2) * kd;
        }
    });
    SignalFrame::new(w, h, values, params.cfa)
}

/// Continuous, black-subtracted sensor output before quantization.
pub fn simulate_analog(
    photons: &[f64],
    params: &VirtualSensorParams,
    seed: u64,
) -> Result<SignalFrame> {
    let fpn = fixed_pattern(params);
    simulate_analog_with(photons, params, fpn.as_deref(), seed)
}

/// One raw frame for the given per-pixel photon expectations.
pub fn simulate_frame(
    photons: &[f64],
    params: &VirtualSensorParams,
    seed: u64,
) -> Result<BayerFrame> {
    let analog = simulate_analog(photons, params, seed)?;
    quantize_clipped(&analog, &params.quantizer)
}

/// `n_frames` independent flat-field frames at a constant photon level.
pub fn simulate_flat_stack(
    level: f64,
    params: &VirtualSensorParams,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<BayerFrame>> {
    if n_frames < 2 {
        return Err(Error::arg(
            "n_frames",
            format!("need at least 2 frames, got {n_frames}"),
        ));
    }
    let photons = vec![level; params.width * params.height];
    let fpn = fixed_pattern(params);
    (0..n_frames)
        .map(|k| {
            let s = derive_seed(seed, Domain::Frame, &[k as u64]);
            let analog = simulate_analog_with(&photons, params, fpn.as_deref(), s)?;
            quantize_clipped(&analog, &params.quantizer)
        })
        .collect()
}

/// A frame with all incident light blocked.
pub fn simulate_dark_frame(params: &VirtualSensorParams, seed: u64) -> Result<BayerFrame> {
    simulate_frame(&vec![0.0; params.width * params.height], params, seed)
}

/// `n` dark frames sharing the sensor's fixed pattern, with per-frame seeds.
pub fn simulate_dark_stack(
    params: &VirtualSensorParams,
    n: usize,
    seed: u64,
) -> Result<Vec<BayerFrame>> {
    let photons = vec![0.0; params.width * params.height];
    let fpn = fixed_pattern(params);
    (0..n)
        .map(|k| {
            let s = derive_seed(seed, Domain::Frame, &[k as u64]);
            let analog = simulate_analog_with(&photons, params, fpn.as_deref(), s)?;
            quantize_clipped(&analog, &params.quantizer)
        })
        .collect()
}
