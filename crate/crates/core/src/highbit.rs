//! High-bit reconstruction: replace each quantized noise value `x` with a
//! draw from the fitted noise distribution restricted to `[x − q/2, x + q/2]`.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::dist::FittedDistribution;
use crate::error::{Error, Result};
use crate::raw::{subtract_black, BayerFrame, Quantizer, SignalFrame};
use crate::rng::{stream, Domain};

/// Bins with less fitted mass than this are sampled uniformly instead.
pub const MIN_BIN_MASS: f64 = 1e-12;

/// Probability mass of the quantization bin centred on `x`.
pub fn bin_mass(dist: &FittedDistribution, x: f64, q: f64) -> f64 {
    dist.interval_mass(x - 0.5 * q, x + 0.5 * q)
}

#[derive(Debug, Clone, Copy)]
struct Bin {
    lo: f64,
    hi: f64,
    /// Probability coordinates of `lo` and `hi`: CDF values, or survival
    /// values when `upper` is set (more precise above the median).
    p_lo: f64,
    p_hi: f64,
    upper: bool,
    reachable: bool,
}

/// Conditional sampler for one fitted distribution and quantization step.
#[derive(Debug, Clone)]
pub struct BinSampler {
    dist: FittedDistribution,
    q: f64,
    /// Signal values of the bottom and top ADC codes, when known.
    clip: Option<(f64, f64)>,
    /// Black level, used to check that inputs sit on the ADC grid.
    offset: Option<f64>,
}

impl BinSampler {
    pub fn new(dist: FittedDistribution, q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::arg("quant_step", format!("{q} must be positive")));
        }
        dist.validate()?;
        Ok(BinSampler {
            dist,
            q,
            clip: None,
            offset: None,
        })
    }

    /// Sampler for black-subtracted values produced by `quantizer`. The
    /// bottom and top codes are treated as clipped and resampled one-sidedly.
    pub fn for_quantizer(dist: FittedDistribution, quantizer: &Quantizer) -> Result<Self> {
        quantizer.validate()?;
        let mut s = Self::new(dist, quantizer.quant_step)?;
        let b = quantizer.black_level;
        s.clip = Some((-b, quantizer.max_value() - b));
        s.offset = Some(b);
        Ok(s)
    }

    pub fn distribution(&self) -> &FittedDistribution {
        &self.dist
    }

    pub fn quant_step(&self) -> f64 {
        self.q
    }

    fn bin(&self, x: f64) -> Bin {
        let h = 0.5 * self.q;
        let (mut lo, mut hi) = (x - h, x + h);
        if let Some((bottom, top)) = self.clip {
            if x <= bottom {
                lo = x;
            }
            if x >= top {
                hi = x;
            }
        }
        // keep draws strictly inside so ties never round to a neighbour
        let eps = self.q * 1e-9;
        let (lo, hi) = (lo + eps, hi - eps);
        let upper = self.dist.cdf(0.5 * (lo + hi)) > 0.5;
        let (p_lo, p_hi) = if upper {
            (self.dist.sf(lo), self.dist.sf(hi))
        } else {
            (self.dist.cdf(lo), self.dist.cdf(hi))
        };
        let mass = (p_hi - p_lo).abs();
        Bin {
            lo,
            hi,
            p_lo,
            p_hi,
            upper,
            reachable: mass >= MIN_BIN_MASS && mass.is_finite(),
        }
    }

    fn draw<R: Rng>(&self, bin: &Bin, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if !bin.reachable {
            return bin.lo + u * (bin.hi - bin.lo);
        }
        let p = bin.p_lo + u * (bin.p_hi - bin.p_lo);
        let p = if bin.upper { 1.0 - p } else { p };
        let mut v = self.dist.quantile(p);
        if !(v >= bin.lo && v <= bin.hi) {
            v = self.dist.solve_cdf(p, bin.lo, bin.hi);
        }
        v.clamp(bin.lo, bin.hi)
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub frame: SignalFrame,
    /// Pixels whose bin had negligible fitted mass and were drawn uniformly.
    pub fallback_pixels: usize,
}

/// Reconstructs a black-subtracted, quantized noise frame. Each row draws
/// from its own stream keyed by `(seed, row)`.
pub fn reconstruct(frame: &SignalFrame, sampler: &BinSampler, seed: u64) -> Result<Reconstruction> {
    if let Some(b) = sampler.offset {
        let q = sampler.q;
        if let Some(bad) = frame
            .values()
            .iter()
            .find(|&&v| ((v + b) / q - ((v + b) / q).round()).abs() > 1e-6)
        {
            return Err(Error::InvalidFrame(format!(
                "value {bad} is not on the quantization grid (step {q}, black level {b})"
            )));
        }
    }
    let mut cache: HashMap<u64, Bin> = HashMap::new();
    for &v in frame.values() {
        cache.entry(v.to_bits()).or_insert_with(|| sampler.bin(v));
    }
    let width = frame.width();
    let mut values = vec![0.0; frame.values().len()];
    let fallback: usize = values
        .par_chunks_mut(width.max(1))
        .zip(frame.values().par_chunks(width.max(1)))
        .enumerate()
        .map(|(r, (out, row))| {
            let mut rng = stream(seed, Domain::HighBit, &[r as u64]);
            let mut misses = 0;
            for (o, &x) in out.iter_mut().zip(row) {
                let bin = &cache[&x.to_bits()];
                misses += usize::from(!bin.reachable);
                *o = sampler.draw(bin, &mut rng);
            }
            misses
        })
        .sum();
    Ok(Reconstruction {
        frame: SignalFrame::from_parts(width, frame.height(), values, frame.cfa()),
        fallback_pixels: fallback,
    })
}

/// Convenience wrapper for a raw frame: subtracts the black level and uses
/// the frame's own quantizer for the clip codes.
pub fn reconstruct_bayer(
    frame: &BayerFrame,
    dist: &FittedDistribution,
    seed: u64,
) -> Result<Reconstruction> {
    let sampler = BinSampler::for_quantizer(*dist, frame.quantizer())?;
    reconstruct(&subtract_black(frame), &sampler, seed)
}

/// Stores a reconstruction of `original` as 32-bit floats with the black
/// level restored. A value that `f32` rounding puts on or past a bin edge is
/// stepped back toward its code one ulp at a time, so the stored frame still
/// quantizes to `original`.
pub fn store_f32(rec: &SignalFrame, original: &BayerFrame) -> Result<BayerFrame> {
    if rec.width() != original.width() || rec.height() != original.height() {
        return Err(Error::InvalidFrame(format!(
            "reconstruction is {}x{}, original is {}x{}",
            rec.width(),
            rec.height(),
            original.width(),
            original.height()
        )));
    }
    let qz = original.quantizer();
    let b = qz.black_level;
    let samples = rec
        .values()
        .iter()
        .zip(original.samples())
        .map(|(&v, &code)| {
            let mut x = (v + b) as f32;
            for _ in 0..64 {
                if qz.quantize_digital(x as f64) == code {
                    break;
                }
                x = if (x as f64) < code {
                    x.next_up()
                } else {
                    x.next_down()
                };
            }
            x as f64
        })
        .collect();
    BayerFrame::new(
        rec.width(),
        rec.height(),
        samples,
        original.cfa(),
        *qz,
        crate::raw::SampleFormat::F32,
    )
}
