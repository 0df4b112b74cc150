//! Frame representation, CFA geometry, black-level handling and the
//! quantization model shared by every other module.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One colour site of a 2×2 Bayer tile.
///
/// `G1` is the green that shares a row with red, `G2` the green that shares a
/// row with blue. The distinction survives phase shifts, so per-channel
/// statistics stay attached to the same physical sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CfaColor {
    R,
    G1,
    G2,
    B,
}

impl CfaColor {
    pub const ALL: [CfaColor; 4] = [CfaColor::R, CfaColor::G1, CfaColor::G2, CfaColor::B];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The four canonical Bayer layouts, named by their top-left 2×2 tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Bggr,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
    ];

    pub fn tile(self) -> [[CfaColor; 2]; 2] {
        use CfaColor::*;
        match self {
            CfaPattern::Rggb => [[R, G1], [G2, B]],
            CfaPattern::Bggr => [[B, G2], [G1, R]],
            CfaPattern::Grbg => [[G1, R], [B, G2]],
            CfaPattern::Gbrg => [[G2, B], [R, G1]],
        }
    }

    /// Colour at `(row, col)` of a frame whose origin has this pattern.
    pub fn color_at(self, row: usize, col: usize) -> CfaColor {
        self.tile()[row & 1][col & 1]
    }

    fn from_origin(color: CfaColor) -> Self {
        match color {
            CfaColor::R => CfaPattern::Rggb,
            CfaColor::B => CfaPattern::Bggr,
            CfaColor::G1 => CfaPattern::Grbg,
            CfaColor::G2 => CfaPattern::Gbrg,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        }
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CfaPattern::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg("cfa", format!("unknown CFA pattern `{s}`")))
    }
}

/// Pattern seen when the frame origin moves by `(dr, dc)`. Periodic with
/// period 2 in each axis; negative offsets are allowed.
pub fn cfa_phase(pattern: CfaPattern, dr: i64, dc: i64) -> CfaPattern {
    let r = dr.rem_euclid(2) as usize;
    let c = dc.rem_euclid(2) as usize;
    CfaPattern::from_origin(pattern.color_at(r, c))
}

/// Storage type of frame samples in RNF1 files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    U16,
    F32,
    F64,
}

impl SampleFormat {
    pub fn name(self) -> &'static str {
        match self {
            SampleFormat::U16 => "u16",
            SampleFormat::F32 => "f32",
            SampleFormat::F64 => "f64",
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            SampleFormat::U16 => 2,
            SampleFormat::F32 => 4,
            SampleFormat::F64 => 8,
        }
    }
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "u16" => Ok(SampleFormat::U16),
            "f32" => Ok(SampleFormat::F32),
            "f64" => Ok(SampleFormat::F64),
            other => Err(Error::arg(
                "dtype",
                format!("unknown sample type `{other}`"),
            )),
        }
    }
}

/// ADC description: bit depth, quantization step and the black/white levels,
/// all in digital numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub bit_depth: u32,
    pub quant_step: f64,
    pub black_level: f64,
    pub white_level: f64,
}

impl Quantizer {
    /// Quantizer whose white level is the top code.
    pub fn new(bit_depth: u32, quant_step: f64, black_level: f64) -> Result<Self> {
        let mut q = Quantizer {
            bit_depth,
            quant_step,
            black_level,
            white_level: 0.0,
        };
        q.white_level = q.max_value();
        q.validate()?;
        Ok(q)
    }

    pub fn with_white_level(mut self, white_level: f64) -> Result<Self> {
        self.white_level = white_level;
        self.validate()?;
        Ok(self)
    }

    pub fn max_code(&self) -> f64 {
        (2f64).powi(self.bit_depth as i32) - 1.0
    }

    /// Largest representable sample, `(2^b − 1)·q`.
    pub fn max_value(&self) -> f64 {
        self.max_code() * self.quant_step
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.bit_depth) {
            return Err(Error::arg(
                "bit_depth",
                format!("{} not in 1..=32", self.bit_depth),
            ));
        }
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(Error::arg(
                "quant_step",
                format!("{} must be positive", self.quant_step),
            ));
        }
        if !self.black_level.is_finite() || self.black_level < 0.0 {
            return Err(Error::arg(
                "black_level",
                format!("{} must be >= 0", self.black_level),
            ));
        }
        if !(self.black_level < self.white_level && self.white_level <= self.max_value()) {
            return Err(Error::arg(
                "white_level",
                format!(
                    "need black_level ({}) < white_level ({}) <= {}",
                    self.black_level,
                    self.white_level,
                    self.max_value()
                ),
            ));
        }
        Ok(())
    }

    /// Nearest multiple of q to `value + black_level`, ties to even, clamped
    /// to `[0, (2^b − 1)·q]`.
    #[inline]
    pub fn quantize_value(&self, value: f64) -> f64 {
        self.quantize_digital(value + self.black_level)
    }

    /// Same as [`quantize_value`](Self::quantize_value) for a value that
    /// already carries the black level.
    #[inline]
    pub fn quantize_digital(&self, digital: f64) -> f64 {
        let n = (digital / self.quant_step).round_ties_even();
        n.clamp(0.0, self.max_code()) * self.quant_step
    }

    /// Storage type that represents every quantized sample exactly.
    pub fn natural_format(&self) -> SampleFormat {
        let q = self.quant_step;
        if q.fract() == 0.0
            && self.max_value() <= u16::MAX as f64
            && self.black_level.fract() == 0.0
        {
            SampleFormat::U16
        } else {
            SampleFormat::F64
        }
    }
}

/// A raw frame as written by the sensor: digital numbers on a CFA grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerFrame {
    width: usize,
    height: usize,
    samples: Vec<f64>,
    cfa: CfaPattern,
    quantizer: Quantizer,
    format: SampleFormat,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
    }
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::InvalidFrame(format!(
            "{width}x{height} is not a whole number of CFA tiles"
        )));
    }
    if len != width * height {
        return Err(Error::InvalidFrame(format!(
            "{len} samples for a {width}x{height} frame"
        )));
    }
    Ok(())
}

impl BayerFrame {
    pub fn new(
        width: usize,
        height: usize,
        samples: Vec<f64>,
        cfa: CfaPattern,
        quantizer: Quantizer,
        format: SampleFormat,
    ) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        quantizer.validate()?;
        if format == SampleFormat::U16 {
            if let Some(bad) = samples
                .iter()
                .find(|&&s| !(s.fract() == 0.0 && (0.0..=u16::MAX as f64).contains(&s)))
            {
                return Err(Error::InvalidFrame(format!(
                    "sample {bad} is not representable as u16"
                )));
            }
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidFrame(format!("non-finite sample {bad}")));
        }
        Ok(BayerFrame {
            width,
            height,
            samples,
            cfa,
            quantizer,
            format,
        })
    }

    /// A frame with every sample equal to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        value: f64,
        cfa: CfaPattern,
        quantizer: Quantizer,
    ) -> Result<Self> {
        let format = quantizer.natural_format();
        Self::new(
            width,
            height,
            vec![value; width * height],
            cfa,
            quantizer,
            format,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn cfa(&self) -> CfaPattern {
        self.cfa
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn format(&self) -> SampleFormat {
        self.format
    }

    pub fn black_level(&self) -> f64 {
        self.quantizer.black_level
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    /// True when every sample is `n·q` with `0 ≤ n ≤ 2^b − 1`.
    pub fn is_quantized(&self) -> bool {
        let q = &self.quantizer;
        self.samples.iter().all(|&s| {
            let n = s / q.quant_step;
            n.fract() == 0.0 && n >= 0.0 && n <= q.max_code()
        })
    }

    /// Same frame stored with a different sample type.
    pub fn with_format(self, format: SampleFormat) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.samples,
            self.cfa,
            self.quantizer,
            format,
        )
    }
}

/// Black-level-subtracted samples as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
    cfa: CfaPattern,
}

impl SignalFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>, cfa: CfaPattern) -> Result<Self> {
        check_dims(width, height, values.len())?;
        Ok(SignalFrame {
            width,
            height,
            values,
            cfa,
        })
    }

    /// Patches may have odd sizes, so crops skip the whole-tile check.
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        cfa: CfaPattern,
    ) -> Self {
        debug_assert_eq!(values.len(), width * height);
        SignalFrame {
            width,
            height,
            values,
            cfa,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64, cfa: CfaPattern) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], cfa)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cfa(&self) -> CfaPattern {
        self.cfa
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.width)
    }

    /// `h×w` window at `(row, col)`. The crop's CFA is the source pattern
    /// shifted by the origin.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<SignalFrame> {
        if row + h > self.height || col + w > self.width || h == 0 || w == 0 {
            return Err(Error::PatchTooLarge {
                h,
                w,
                height: self.height.saturating_sub(row),
                width: self.width.saturating_sub(col),
            });
        }
        let mut values = Vec::with_capacity(h * w);
        for r in row..row + h {
            values.extend_from_slice(&self.values[r * self.width + col..r * self.width + col + w]);
        }
        Ok(SignalFrame::from_parts(
            w,
            h,
            values,
            cfa_phase(self.cfa, row as i64, col as i64),
        ))
    }

    /// Writes `patch` into this frame at `(row, col)`, clipping at the edges.
    pub(crate) fn paste(&mut self, patch: &SignalFrame, row: usize, col: usize) {
        let h = patch.height.min(self.height - row);
        let w = patch.width.min(self.width - col);
        for r in 0..h {
            let dst = (row + r) * self.width + col;
            self.values[dst..dst + w].copy_from_slice(&patch.row(r)[..w]);
        }
    }
}

/// Removes the black level: `values = samples − black_level`.
pub fn subtract_black(frame: &BayerFrame) -> SignalFrame {
    let black = frame.black_level();
    SignalFrame::from_parts(
        frame.width,
        frame.height,
        frame.samples.iter().map(|&s| s - black).collect(),
        frame.cfa,
    )
}

/// Quantizes a black-subtracted frame back onto the ADC grid.
pub fn quantize(values: &SignalFrame, quantizer: &Quantizer) -> Result<BayerFrame> {
    quantizer.validate()?;
    let samples = values
        .values
        .iter()
        .map(|&v| quantizer.quantize_value(v))
        .collect();
    BayerFrame::new(
        values.width,
        values.height,
        samples,
        values.cfa,
        *quantizer,
        quantizer.natural_format(),
    )
}

/// [`quantize`], then clips every sample at the quantizer's white level.
pub fn quantize_clipped(values: &SignalFrame, quantizer: &Quantizer) -> Result<BayerFrame> {
    let mut frame = quantize(values, quantizer)?;
    if quantizer.white_level < quantizer.max_value() {
        let white = quantizer.quantize_digital(quantizer.white_level);
        for s in frame.samples.iter_mut() {
            *s = s.min(white);
        }
    }
    Ok(frame)
}
