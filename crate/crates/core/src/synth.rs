//! Noise synthesis: Poisson shot noise, the Poisson-Gaussian and ELD-like
//! physics baselines, and real-noise composition from dark frames.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::darkdb::{DarkFrameDb, DarkKey};
use crate::dist::tukey;
use crate::error::{Error, Result};
use crate::highbit::{reconstruct, BinSampler};
use crate::profile::SensorProfile;
use crate::raw::{cfa_phase, quantize_clipped, BayerFrame, CfaPattern, SignalFrame};
use crate::rng::{derive_seed, stream, Domain};

/// Signal plus Poisson shot noise: each pixel becomes `K·P(Y/K)`.
///
/// Negative inputs (possible after black subtraction) use a Poisson mean of
/// zero and keep their negative part additively, which preserves the mean.
pub fn shot_noise(clean: &SignalFrame, gain: f64, seed: u64) -> Result<SignalFrame> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::arg("gain", format!("{gain} must be positive")));
    }
    Ok(map_rows(clean, |r, row, out| {
        let mut rng = stream(seed, Domain::Shot, &[r as u64]);
        let mut cached: Option<(f64, Poisson<f64>)> = None;
        for (o, &y) in out.iter_mut().zip(row) {
            let lambda = y.max(0.0) / gain;
            let count = if lambda > 0.0 {
                let d = match cached {
                    Some((l, d)) if l == lambda => d,
                    _ => {
                        let d = Poisson::new(lambda).expect("finite positive mean");
                        cached = Some((lambda, d));
                        d
                    }
                };
                d.sample(&mut rng)
            } else {
                0.0
            };
            *o = gain * count + y.min(0.0);
        }
    }))
}

fn map_rows(frame: &SignalFrame, f: impl Fn(usize, &[f64], &mut [f64]) + Sync) -> SignalFrame {
    let w = frame.width();
    let mut out = vec![0.0; frame.values().len()];
    out.par_chunks_mut(w)
        .zip(frame.values().par_chunks(w))
        .enumerate()
        .for_each(|(r, (o, row))| f(r, row, o));
    SignalFrame::from_parts(w, frame.height(), out, frame.cfa())
}

/// Exact Poisson-Gaussian noise: shot noise with gain `β₁` plus Gaussian
/// noise of variance `β₂`.
pub fn synth_pg(clean: &SignalFrame, beta1: f64, beta2: f64, seed: u64) -> Result<SignalFrame> {
    if !(beta2 >= 0.0 && beta2.is_finite()) {
        return Err(Error::arg("beta2", format!("{beta2} must be >= 0")));
    }
    let mut out = shot_noise(clean, beta1, seed)?;
    if beta2 > 0.0 {
        let sigma = beta2.sqrt();
        let w = out.width();
        out.values_mut()
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(r, row)| {
                let mut rng = stream(seed, Domain::Read, &[r as u64]);
                for v in row {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * z;
                }
            });
    }
    Ok(out)
}

/// Which lines share a row-noise offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineAxis {
    #[default]
    Rows,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EldParams {
    pub gain: f64,
    pub tl_lambda: f64,
    /// Multiplies the standard Tukey-lambda quantile function.
    pub tl_scale: f64,
    pub row_sigma: f64,
    /// Width of the uniform quantization noise term; 0 disables it.
    pub quant_step: f64,
    pub line_axis: LineAxis,
}

impl EldParams {
    /// Tukey-lambda scale giving read-noise variance `variance`.
    pub fn tl_scale_for_variance(lambda: f64, variance: f64) -> f64 {
        (variance / tukey::variance(lambda)).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.tl_scale >= 0.0 && self.tl_scale.is_finite()) {
            return Err(Error::arg(
                "tl_scale",
                format!("{} must be >= 0", self.tl_scale),
            ));
        }
        if !(self.row_sigma >= 0.0 && self.row_sigma.is_finite()) {
            return Err(Error::arg(
                "row_sigma",
                format!("{} must be >= 0", self.row_sigma),
            ));
        }
        if !(self.quant_step >= 0.0 && self.quant_step.is_finite()) {
            return Err(Error::arg(
                "quant_step",
                format!("{} must be >= 0", self.quant_step),
            ));
        }
        if !self.tl_lambda.is_finite() {
            return Err(Error::arg("tl_lambda", "must be finite"));
        }
        Ok(())
    }
}

/// Shot noise plus Tukey-lambda read noise, a Gaussian offset shared along
/// each line, and uniform quantization noise.
pub fn synth_eld_like(clean: &SignalFrame, params: &EldParams, seed: u64) -> Result<SignalFrame> {
    params.validate()?;
    let mut out = shot_noise(clean, params.gain, seed)?;
    let (w, h) = (out.width(), out.height());
    let lines = match params.line_axis {
        LineAxis::Rows => h,
        LineAxis::Columns => w,
    };
    let offsets: Vec<f64> = (0..lines)
        .map(|i| {
            if params.row_sigma == 0.0 {
                return 0.0;
            }
            let z: f64 = StandardNormal.sample(&mut stream(seed, Domain::Row, &[i as u64]));
            params.row_sigma * z
        })
        .collect();
    let p = *params;
    out.values_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, row)| {
            let mut rng = stream(seed, Domain::Read, &[r as u64]);
            for (c, v) in row.iter_mut().enumerate() {
                if p.tl_scale > 0.0 {
                    let u: f64 = rng.random();
                    *v += p.tl_scale * tukey::quantile(p.tl_lambda, u);
                }
                *v += match p.line_axis {
                    LineAxis::Rows => offsets[r],
                    LineAxis::Columns => offsets[c],
                };
                if p.quant_step > 0.0 {
                    *v += p.quant_step * (rng.random::<f64>() - 0.5);
                }
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    Pg,
    Eld,
    RealPixelwise,
    RealPatch,
    RealPap,
}

impl SynthMode {
    pub const ALL: [SynthMode; 5] = [
        SynthMode::Pg,
        SynthMode::Eld,
        SynthMode::RealPixelwise,
        SynthMode::RealPatch,
        SynthMode::RealPap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthMode::Pg => "pg",
            SynthMode::Eld => "eld",
            SynthMode::RealPixelwise => "pixel",
            SynthMode::RealPatch => "patch",
            SynthMode::RealPap => "pap",
        }
    }

    pub fn is_real(self) -> bool {
        !matches!(self, SynthMode::Pg | SynthMode::Eld)
    }
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SynthMode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::arg(
                    "mode",
                    format!("`{s}` is not one of pg, eld, pixel, patch, pap"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub mode: SynthMode,
    pub highbit: bool,
    pub iso: u32,
    pub seed: u64,
    /// Overrides the profile's sensor id when choosing dark frames.
    pub sensor_id: Option<String>,
    /// Edge length of the dark patches tiled over the output.
    pub patch_size: usize,
    /// When false, only the signal-independent layer is added.
    pub shot_noise: bool,
    pub line_axis: LineAxis,
}

impl SynthConfig {
    pub fn new(mode: SynthMode, iso: u32, seed: u64) -> Self {
        SynthConfig {
            mode,
            highbit: false,
            iso,
            seed,
            sensor_id: None,
            patch_size: 512,
            shot_noise: true,
            line_axis: LineAxis::Rows,
        }
    }

    pub fn with_highbit(mut self, on: bool) -> Self {
        self.highbit = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.highbit && !self.mode.is_real() {
            return Err(Error::arg(
                "highbit",
                format!(
                    "high-bit reconstruction needs a dark-frame mode, not `{}`",
                    self.mode
                ),
            ));
        }
        if self.patch_size == 0 {
            return Err(Error::arg("patch_size", "must be positive"));
        }
        Ok(())
    }

    fn key(&self, profile: &SensorProfile) -> DarkKey {
        DarkKey::new(
            self.sensor_id
                .clone()
                .unwrap_or_else(|| profile.sensor_id.clone()),
            self.iso,
        )
    }
}

/// Signal-independent noise drawn from the database, black-subtracted.
#[derive(Debug, Clone)]
pub struct IndependentLayer {
    pub noise: SignalFrame,
    /// Pixels that high-bit reconstruction had to sample uniformly.
    pub fallback_pixels: usize,
}

/// Builds a `width×height` noise layer from dark frames. Patch modes tile
/// the output with non-overlapping patches, each drawn independently with a
/// seed derived from its position. `sampler` enables high-bit reconstruction.
#[allow(clippy::too_many_arguments)]
pub fn independent_layer(
    db: &DarkFrameDb,
    key: &DarkKey,
    mode: SynthMode,
    width: usize,
    height: usize,
    cfa: CfaPattern,
    patch_size: usize,
    sampler: Option<&BinSampler>,
    seed: u64,
) -> Result<IndependentLayer> {
    let hb = |frame: SignalFrame, s: u64| -> Result<(SignalFrame, usize)> {
        match sampler {
            Some(sm) => reconstruct(&frame, sm, derive_seed(s, Domain::HighBit, &[]))
                .map(|r| (r.frame, r.fallback_pixels)),
            None => Ok((frame, 0)),
        }
    };
    match mode {
        SynthMode::RealPixelwise => {
            let f = db.sample_pixelwise_frame(key, width, height, cfa, seed)?;
            let (noise, fallback_pixels) = hb(f, seed)?;
            Ok(IndependentLayer {
                noise,
                fallback_pixels,
            })
        }
        SynthMode::RealPatch | SynthMode::RealPap => {
            let frames = db.frames(key)?;
            let (dh, dw) = frames.iter().fold((usize::MAX, usize::MAX), |(h, w), f| {
                (h.min(f.height()), w.min(f.width()))
            });
            // aligned draws may need one row or column of slack for parity
            let slack = usize::from(mode == SynthMode::RealPap);
            let ph = patch_size.min(dh.saturating_sub(slack)).max(1);
            let pw = patch_size.min(dw.saturating_sub(slack)).max(1);
            let origins: Vec<(usize, usize)> = (0..height)
                .step_by(ph)
                .flat_map(|r| (0..width).step_by(pw).map(move |c| (r, c)))
                .collect();
            let patches: Vec<(usize, usize, SignalFrame, usize)> = origins
                .par_iter()
                .map(|&(r, c)| {
                    let (th, tw) = (ph.min(height - r), pw.min(width - c));
                    let s = derive_seed(seed, Domain::Tile, &[r as u64, c as u64]);
                    let patch = if mode == SynthMode::RealPap {
                        let target = cfa_phase(cfa, r as i64, c as i64);
                        db.sample_patch_pattern_aligned(key, th, tw, target, s)?
                    } else {
                        db.sample_patch(key, th, tw, s)?
                    };
                    let (patch, miss) = hb(patch, s)?;
                    Ok((r, c, patch, miss))
                })
                .collect::<Result<_>>()?;
            let mut noise = SignalFrame::from_parts(width, height, vec![0.0; width * height], cfa);
            let mut fallback_pixels = 0;
            for (r, c, p, miss) in &patches {
                noise.paste(p, *r, *c);
                fallback_pixels += miss;
            }
            Ok(IndependentLayer {
                noise,
                fallback_pixels,
            })
        }
        SynthMode::Pg | SynthMode::Eld => Err(Error::arg(
            "mode",
            format!("`{mode}` does not draw from dark frames"),
        )),
    }
}

/// Composed raw frame and diagnostics.
#[derive(Debug, Clone)]
pub struct Composition {
    pub frame: BayerFrame,
    pub fallback_pixels: usize,
}

/// Real-noise synthesis: shot noise at the profile's gain plus a
/// signal-independent layer drawn from dark frames, re-offset by the black
/// level, clipped, and quantized with the dark frames' quantizer.
pub fn compose_real(
    clean: &SignalFrame,
    db: &DarkFrameDb,
    profile: &SensorProfile,
    config: &SynthConfig,
) -> Result<Composition> {
    config.validate()?;
    if !config.mode.is_real() {
        return Err(Error::arg(
            "mode",
            format!("`{}` is not a dark-frame mode", config.mode),
        ));
    }
    let gain = profile.require(config.iso, "beta1", |p| p.beta1)?;
    let key = config.key(profile);
    let quantizer = *db.frames(&key)?[0].quantizer();
    let sampler = if config.highbit {
        let dist = profile.require(config.iso, "family", |p| p.dist)?;
        Some(BinSampler::for_quantizer(dist, &quantizer)?)
    } else {
        None
    };
    let layer = independent_layer(
        db,
        &key,
        config.mode,
        clean.width(),
        clean.height(),
        clean.cfa(),
        config.patch_size,
        sampler.as_ref(),
        derive_seed(config.seed, Domain::DarkSampling, &[]),
    )?;
    let mut out = if config.shot_noise {
        shot_noise(clean, gain, config.seed)?
    } else {
        clean.clone()
    };
    for (o, n) in out.values_mut().iter_mut().zip(layer.noise.values()) {
        *o += n;
    }
    Ok(Composition {
        frame: quantize_clipped(&out, &quantizer)?,
        fallback_pixels: layer.fallback_pixels,
    })
}

/// Runs any mode on a raw clean frame. The physics modes quantize with the
/// clean frame's own quantizer; the real modes with the dark frames'.
pub fn synthesize(
    clean: &BayerFrame,
    db: Option<&DarkFrameDb>,
    profile: &SensorProfile,
    config: &SynthConfig,
) -> Result<Composition> {
    config.validate()?;
    let signal = crate::raw::subtract_black(clean);
    let iso = config.iso;
    let noisy = match config.mode {
        SynthMode::Pg => synth_pg(
            &signal,
            profile.require(iso, "beta1", |p| p.beta1)?,
            profile.require(iso, "beta2", |p| p.beta2)?,
            config.seed,
        )?,
        SynthMode::Eld => {
            let p = profile.iso(iso)?;
            let lambda = profile.require(iso, "tl_lambda", |p| p.tl_lambda)?;
            let tl_scale = match p.tl_scale {
                Some(s) => s,
                None => EldParams::tl_scale_for_variance(
                    lambda,
                    profile.require(iso, "beta2", |p| p.beta2)?,
                ),
            };
            let params = EldParams {
                gain: profile.require(iso, "beta1", |p| p.beta1)?,
                tl_lambda: lambda,
                tl_scale,
                row_sigma: p.row_sigma.unwrap_or(0.0),
                quant_step: clean.quantizer().quant_step,
                line_axis: config.line_axis,
            };
            synth_eld_like(&signal, &params, config.seed)?
        }
        _ => {
            let db = db.ok_or_else(|| Error::arg("db", "dark-frame modes need a database"))?;
            return compose_real(&signal, db, profile, config);
        }
    };
    Ok(Composition {
        frame: quantize_clipped(&noisy, clean.quantizer())?,
        fallback_pixels: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::fit_mean_variance_line;
    use crate::raw::{subtract_black, Quantizer};
    use crate::report::{
        ks_p_value, ks_statistic_with, ks_two_sample, mean, row_autocorrelation, variance,
    };
    use crate::vsensor::{simulate_dark_stack, VirtualSensorParams};

    fn flat(w: usize, h: usize, v: f64) -> SignalFrame {
        SignalFrame::filled(w, h, v, CfaPattern::Rggb).unwrap()
    }

    #[test]
    fn zero_signal_has_zero_shot_noise() {
        let out = shot_noise(&flat(32, 32, 0.0), 2.0, 1).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shot_noise_moments() {
        let out = shot_noise(&flat(1000, 1000, 100.0), 2.0, 2).unwrap();
        assert!((mean(out.values()) - 100.0).abs() < 1.0);
        assert!((variance(out.values()) / 200.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn negative_signal_keeps_its_mean() {
        let out = shot_noise(&flat(10, 10, -3.0), 2.0, 2).unwrap();
        assert!(out.values().iter().all(|&v| v == -3.0));
    }

    #[test]
    fn photon_counts_scale_invariant() {
        let a = shot_noise(&flat(100, 100, 50.0), 1.0, 3).unwrap();
        let b = shot_noise(&flat(100, 100, 150.0), 3.0, 3).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(*x * 3.0, *y);
        }
    }

    #[test]
    fn pg_without_read_noise_is_shot_noise() {
        let c = flat(64, 64, 40.0);
        assert_eq!(
            synth_pg(&c, 2.0, 0.0, 4).unwrap(),
            shot_noise(&c, 2.0, 4).unwrap()
        );
    }

    #[test]
    fn pg_pure_gaussian_at_zero_signal() {
        let out = synth_pg(&flat(1000, 1000, 0.0), 1.0, 16.0, 5).unwrap();
        assert!((variance(out.values()) / 16.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn pg_photon_transfer_closure() {
        let points: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let out = synth_pg(&flat(300, 300, 50.0 * k as f64), 1.5, 4.0, k).unwrap();
                (mean(out.values()), variance(out.values()))
            })
            .collect();
        let fit = fit_mean_variance_line(&points).unwrap();
        assert!(fit.r_squared > 0.999, "{}", fit.r_squared);
        assert!((fit.gain / 1.5 - 1.0).abs() < 0.05);
    }

    #[test]
    fn eld_reduces_to_pg_near_gaussian_lambda() {
        let c = flat(1000, 1000, 0.0);
        let p = EldParams {
            gain: 1.0,
            tl_lambda: 0.14,
            tl_scale: EldParams::tl_scale_for_variance(0.14, 9.0),
            row_sigma: 0.0,
            quant_step: 0.0,
            line_axis: LineAxis::Rows,
        };
        let eld = synth_eld_like(&c, &p, 6).unwrap();
        let pg = synth_pg(&c, 1.0, 9.0, 7).unwrap();
        let (_, pval) = ks_two_sample(eld.values(), pg.values()).unwrap();
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn eld_row_noise_variance() {
        let c = flat(512, 1000, 0.0);
        let p = EldParams {
            gain: 1.0,
            tl_lambda: 0.14,
            tl_scale: EldParams::tl_scale_for_variance(0.14, 4.0),
            row_sigma: 5.0,
            quant_step: 0.0,
            line_axis: LineAxis::Rows,
        };
        let out = synth_eld_like(&c, &p, 8).unwrap();
        let means: Vec<f64> = out.rows().map(mean).collect();
        let expect = 25.0 + 4.0 / 512.0;
        assert!(
            (variance(&means) / expect - 1.0).abs() < 0.1,
            "{}",
            variance(&means)
        );
    }

    #[test]
    fn eld_quantization_only_is_uniform() {
        let p = EldParams {
            gain: 1.0,
            tl_lambda: 0.14,
            tl_scale: 0.0,
            row_sigma: 0.0,
            quant_step: 2.0,
            line_axis: LineAxis::Rows,
        };
        let out = synth_eld_like(&flat(200, 200, 0.0), &p, 9).unwrap();
        let d = ks_statistic_with(out.values(), |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0)).unwrap();
        assert!(ks_p_value(d, 40_000) > 0.01);
    }

    #[test]
    fn highbit_only_with_real_modes() {
        assert!(SynthConfig::new(SynthMode::Pg, 100, 0)
            .with_highbit(true)
            .validate()
            .is_err());
        assert!(SynthConfig::new(SynthMode::RealPap, 100, 0)
            .with_highbit(true)
            .validate()
            .is_ok());
    }

    fn dark_db(params: &VirtualSensorParams, n: usize) -> (tempfile::TempDir, DarkFrameDb) {
        let dir = tempfile::tempdir().unwrap();
        let mut db = DarkFrameDb::open_or_create(dir.path()).unwrap();
        for f in simulate_dark_stack(params, n, 11).unwrap() {
            db.ingest(f, "cam", 100, 0.0, 0).unwrap();
        }
        (dir, db)
    }

    fn profile(beta1: f64) -> SensorProfile {
        let mut p = SensorProfile::new("cam");
        p.iso_mut(100).beta1 = Some(beta1);
        p
    }

    fn sensor(w: usize, h: usize) -> VirtualSensorParams {
        VirtualSensorParams {
            width: w,
            height: h,
            read2_sigma: 3.0,
            row_sigma: 2.0,
            quantizer: Quantizer::new(12, 1.0, 64.0).unwrap(),
            ..VirtualSensorParams::default()
        }
    }

    #[test]
    fn zero_signal_pap_reproduces_dark_patch() {
        let params = sensor(32, 24);
        let (_d, db) = dark_db(&params, 1);
        let mut cfg = SynthConfig::new(SynthMode::RealPap, 100, 3);
        cfg.patch_size = 16;
        let out = compose_real(&flat(16, 16, 0.0), &db, &profile(2.0), &cfg)
            .unwrap()
            .frame;
        let dark = db.frame(0).unwrap();
        // the output is one dark patch; find it in the source frame
        let found = (0..=dark.height() - 16).any(|r| {
            (0..=dark.width() - 16)
                .any(|c| (0..16).all(|i| (0..16).all(|j| out.get(i, j) == dark.get(r + i, c + j))))
        });
        assert!(found);
    }

    #[test]
    fn pap_tiles_match_target_phase() {
        let params = sensor(20, 20);
        let (_d, db) = dark_db(&params, 2);
        let key = DarkKey::new("cam", 100);
        for cfa in CfaPattern::ALL {
            let layer =
                independent_layer(&db, &key, SynthMode::RealPap, 50, 50, cfa, 8, None, 1).unwrap();
            assert_eq!(layer.noise.cfa(), cfa);
        }
        for s in 0..1000 {
            let target = CfaPattern::ALL[s % 4];
            let p = db
                .sample_patch_pattern_aligned(&key, 8, 8, target, s as u64)
                .unwrap();
            assert_eq!(p.cfa(), target);
        }
    }

    #[test]
    fn shot_noise_off_gives_independent_layer() {
        let params = sensor(32, 32);
        let (_d, db) = dark_db(&params, 2);
        let mut cfg = SynthConfig::new(SynthMode::RealPatch, 100, 5);
        cfg.shot_noise = false;
        cfg.patch_size = 16;
        let clean = flat(32, 32, 0.0);
        let out = compose_real(&clean, &db, &profile(1.0), &cfg)
            .unwrap()
            .frame;
        let layer = independent_layer(
            &db,
            &DarkKey::new("cam", 100),
            SynthMode::RealPatch,
            32,
            32,
            CfaPattern::Rggb,
            16,
            None,
            derive_seed(5, Domain::DarkSampling, &[]),
        )
        .unwrap();
        let back = subtract_black(&out);
        assert_eq!(back.values(), layer.noise.values());
    }

    #[test]
    fn zero_dark_frames_leave_only_shot_noise() {
        let params = VirtualSensorParams {
            width: 32,
            height: 32,
            quantizer: Quantizer::new(16, 1.0, 64.0).unwrap(),
            ..VirtualSensorParams::default()
        };
        let (_d, db) = dark_db(&params, 1);
        let clean = flat(32, 32, 300.0);
        let cfg = SynthConfig::new(SynthMode::RealPap, 100, 6);
        let out = compose_real(&clean, &db, &profile(2.0), &cfg)
            .unwrap()
            .frame;
        let expect = shot_noise(&clean, 2.0, 6).unwrap();
        assert_eq!(subtract_black(&out).values(), expect.values());
    }

    #[test]
    fn pixelwise_destroys_row_correlation_pap_keeps_it() {
        let params = VirtualSensorParams {
            width: 128,
            height: 128,
            read2_sigma: 1.0,
            row_sigma: 3.0,
            quantizer: Quantizer::new(12, 1.0, 64.0).unwrap(),
            ..VirtualSensorParams::default()
        };
        let (_d, db) = dark_db(&params, 4);
        let source = row_autocorrelation(&subtract_black(db.frame(0).unwrap()), 1)
            .unwrap()
            .at(1)
            .unwrap();
        let key = DarkKey::new("cam", 100);
        let px = independent_layer(
            &db,
            &key,
            SynthMode::RealPixelwise,
            128,
            128,
            CfaPattern::Rggb,
            512,
            None,
            2,
        )
        .unwrap();
        let pap = independent_layer(
            &db,
            &key,
            SynthMode::RealPap,
            127,
            127,
            CfaPattern::Rggb,
            512,
            None,
            2,
        )
        .unwrap();
        let a_px = row_autocorrelation(&px.noise, 1).unwrap().at(1).unwrap();
        let a_pap = row_autocorrelation(&pap.noise, 1).unwrap().at(1).unwrap();
        assert!(a_px < 0.05, "{a_px}");
        assert!(a_pap >= 0.8 * source, "{a_pap} vs {source}");
    }

    #[test]
    fn missing_profile_iso_is_named() {
        let params = sensor(16, 16);
        let (_d, db) = dark_db(&params, 1);
        let cfg = SynthConfig::new(SynthMode::RealPap, 800, 0);
        let e = compose_real(&flat(8, 8, 0.0), &db, &profile(1.0), &cfg)
            .unwrap_err()
            .to_string();
        assert!(e.contains("800"), "{e}");
    }

    #[test]
    fn mode_names_round_trip() {
        for m in SynthMode::ALL {
            assert_eq!(m.name().parse::<SynthMode>().unwrap(), m);
        }
    }
}
