//! Maximum-likelihood fitting of quantized samples.
//!
//! A quantized value `x` only says the analog value fell somewhere in
//! `[x − q/2, x + q/2]`, so each observation contributes the probability
//! mass of its bin rather than a density. Samples are grouped into
//! `(bin centre, count)` pairs first; the likelihood then costs one CDF pair
//! per occupied bin instead of one density per sample.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::dist::{tukey, Family, FittedDistribution};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::raw::{CfaColor, SignalFrame};

/// Occupied bins of a quantized sample, sorted by centre.
#[derive(Debug, Clone)]
pub struct BinnedSample {
    pub quant_step: f64,
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl BinnedSample {
    /// Groups `samples` by value. Every sample must sit on a common
    /// `offset + n·q` grid.
    pub fn new(samples: &[f64], quant_step: f64) -> Result<Self> {
        if !(quant_step > 0.0) {
            return Err(Error::arg("q", format!("{quant_step} must be positive")));
        }
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let Some(&first) = xs.first() else {
            return Err(Error::arg("samples", "no samples"));
        };
        let offset = first - (first / quant_step).round() * quant_step;
        let tol = 1e-6 * quant_step;
        let mut centers: Vec<f64> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for &x in &xs {
            let r = x - offset;
            if (r - (r / quant_step).round() * quant_step).abs() > tol {
                return Err(Error::arg(
                    "samples",
                    format!("value {x} is not on the q = {quant_step} grid"),
                ));
            }
            match centers.last() {
                Some(&c) if (x - c).abs() <= tol => *counts.last_mut().unwrap() += 1,
                _ => {
                    centers.push(x);
                    counts.push(1);
                }
            }
        }
        Ok(BinnedSample {
            quant_step,
            centers,
            counts,
            total: xs.len() as u64,
        })
    }

    /// Negative censored log-likelihood of `dist`.
    pub fn neg_log_likelihood(&self, dist: &FittedDistribution) -> f64 {
        let h = 0.5 * self.quant_step;
        let mut nll = 0.0;
        for (&c, &n) in self.centers.iter().zip(&self.counts) {
            let mass = dist.interval_mass(c - h, c + h).max(1e-300);
            nll -= n as f64 * mass.ln();
        }
        nll
    }

    /// KS distance evaluated at the bin edges, the only points where the
    /// empirical CDF of quantized data is identified.
    pub fn ks_distance(&self, dist: &FittedDistribution) -> f64 {
        let h = 0.5 * self.quant_step;
        let n = self.total as f64;
        let mut d = dist.cdf(self.centers[0] - h).abs();
        let mut cum = 0u64;
        for (&c, &k) in self.centers.iter().zip(&self.counts) {
            cum += k;
            let upper = c + h;
            let f = if dist.cdf(upper) > 0.5 {
                1.0 - dist.sf(upper)
            } else {
                dist.cdf(upper)
            };
            d = d.max((f - cum as f64 / n).abs());
        }
        d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Initial guesses per family; the best is polished once more.
    pub restarts: usize,
    pub tolerance: f64,
    pub max_evaluations: usize,
    /// Families whose KS distance is within `tie_margin / √n` of the best
    /// count as tied; the one with fewer parameters wins.
    pub tie_margin: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 3,
            tolerance: 1e-8,
            max_evaluations: 3000,
            tie_margin: 0.5,
        }
    }
}

/// Outcome of fitting one family.
#[derive(Debug, Clone)]
pub struct FamilyFit {
    pub family: Family,
    pub result: std::result::Result<FittedDistribution, String>,
    pub neg_log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct DistributionSetFit {
    pub selected: FittedDistribution,
    /// One entry per family in [`Family::ALL`] order.
    pub candidates: Vec<FamilyFit>,
}

const MAX_SHAPE: f64 = 1e4;

/// Maps unconstrained optimiser coordinates to a distribution.
fn decode(family: Family, theta: &[f64]) -> Option<FittedDistribution> {
    let loc = theta[0];
    let scale = theta[1].exp();
    let shape = match family {
        Family::Gaussian => None,
        Family::TukeyLambda => Some(theta[2].clamp(-0.95, 5.0)),
        _ => Some(theta[2].exp().clamp(1e-3, MAX_SHAPE)),
    };
    FittedDistribution::new(family, loc, scale, shape).ok()
}

fn encode(d: &FittedDistribution) -> Vec<f64> {
    let mut v = vec![d.location, d.scale.ln()];
    match (d.family, d.shape) {
        (Family::TukeyLambda, Some(l)) => v.push(l),
        (_, Some(s)) => v.push(s.ln()),
        _ => {}
    }
    v
}

/// Moment-matched starting points, `restarts` per family.
fn initial_guesses(
    family: Family,
    mean: f64,
    sd: f64,
    skew: f64,
    kurt: f64,
    restarts: usize,
) -> Vec<FittedDistribution> {
    let mut out = Vec::new();
    let sd = sd.max(1e-12);
    match family {
        Family::Gaussian => {
            for i in 0..restarts {
                let f = 1.0 + 0.1 * i as f64;
                out.extend(FittedDistribution::gaussian(mean, sd * f));
            }
        }
        Family::StudentT => {
            let nu0 = if kurt > 0.05 { 4.0 + 6.0 / kurt } else { 30.0 };
            for nu in [nu0, 5.0, 100.0].into_iter().take(restarts.max(1)) {
                let nu: f64 = nu.min(MAX_SHAPE);
                let s = sd * ((nu - 2.0) / nu).max(0.1).sqrt();
                out.extend(FittedDistribution::student_t(mean, s, nu));
            }
        }
        Family::Weibull => {
            for k in [3.6, 2.0, 6.0].into_iter().take(restarts.max(1)) {
                let g1 = ln_gamma(1.0 + 1.0 / k).exp();
                let g2 = ln_gamma(1.0 + 2.0 / k).exp();
                let scale = sd / (g2 - g1 * g1).sqrt();
                out.extend(FittedDistribution::weibull(mean - scale * g1, scale, k));
            }
        }
        Family::Gamma => {
            let a0 = if skew > 0.05 {
                (4.0 / (skew * skew)).min(MAX_SHAPE)
            } else {
                200.0
            };
            for a in [a0, 20.0, 1000.0].into_iter().take(restarts.max(1)) {
                let scale = sd / a.sqrt();
                out.extend(FittedDistribution::gamma(mean - a * scale, scale, a));
            }
        }
        Family::TukeyLambda => {
            for lam in [0.14, -0.05, 0.5].into_iter().take(restarts.max(1)) {
                let scale = sd / tukey::variance(lam).sqrt();
                out.extend(FittedDistribution::tukey_lambda(mean, scale, lam));
            }
        }
    }
    out
}

/// Censored maximum-likelihood fit of one family.
pub fn fit_family_censored(
    bins: &BinnedSample,
    family: Family,
    opts: &FitOptions,
) -> std::result::Result<(FittedDistribution, f64), String> {
    // moments of the bin centres
    let n = bins.total as f64;
    let mean = bins
        .centers
        .iter()
        .zip(&bins.counts)
        .map(|(c, k)| c * *k as f64)
        .sum::<f64>()
        / n;
    let central = |p: i32| {
        bins.centers
            .iter()
            .zip(&bins.counts)
            .map(|(c, k)| (c - mean).powi(p) * *k as f64)
            .sum::<f64>()
            / n
    };
    let (m2, m3, m4) = (central(2), central(3), central(4));
    // Sheppard's correction for the quantized second moment
    let var = (m2 - bins.quant_step.powi(2) / 12.0)
        .max(m2 * 0.25)
        .max(1e-24);
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let kurt = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };

    let nm = NelderMead {
        tolerance: opts.tolerance,
        max_evaluations: opts.max_evaluations,
        ..Default::default()
    };
    let objective = |theta: &[f64]| match decode(family, theta) {
        Some(d) => bins.neg_log_likelihood(&d),
        None => f64::INFINITY,
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in initial_guesses(family, mean, var.sqrt(), skew, kurt, opts.restarts) {
        let m = nm.minimize(objective, &encode(&start));
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.point, m.value));
        }
    }
    let (point, _) =
        best.ok_or_else(|| format!("{family}: no start reached a finite likelihood"))?;
    let polished = nm.minimize(objective, &point);
    let dist = decode(family, &polished.point)
        .ok_or_else(|| format!("{family}: optimiser left the parameter domain"))?;
    if !polished.value.is_finite() {
        return Err(format!("{family}: likelihood is not finite at the optimum"));
    }
    Ok((dist, polished.value))
}

/// Fits every family and returns them all alongside the selected one.
pub fn fit_distribution_set_detailed(
    samples: &[f64],
    q: f64,
    opts: &FitOptions,
) -> Result<DistributionSetFit> {
    if samples.len() < 1000 {
        return Err(Error::arg(
            "samples",
            format!("need at least 1000 samples, got {}", samples.len()),
        ));
    }
    let bins = BinnedSample::new(samples, q)?;
    if bins.centers.len() < 2 {
        return Err(Error::Degenerate(
            "all samples fall in one quantization bin".into(),
        ));
    }
    let candidates: Vec<FamilyFit> = Family::ALL
        .par_iter()
        .map(|&family| match fit_family_censored(&bins, family, opts) {
            Ok((mut d, nll)) => {
                d.gof_statistic = bins.ks_distance(&d);
                FamilyFit {
                    family,
                    result: Ok(d),
                    neg_log_likelihood: nll,
                }
            }
            Err(e) => FamilyFit {
                family,
                result: Err(e),
                neg_log_likelihood: f64::INFINITY,
            },
        })
        .collect();

    let ok: Vec<&FittedDistribution> = candidates
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .collect();
    let Some(min_ks) = ok.iter().map(|d| d.gof_statistic).min_by(f64::total_cmp) else {
        let diag: Vec<String> = candidates
            .iter()
            .filter_map(|c| c.result.as_ref().err().cloned())
            .collect();
        return Err(Error::FitFailed(diag.join("; ")));
    };
    let margin = opts.tie_margin / (bins.total as f64).sqrt();
    let selected = ok
        .iter()
        .filter(|d| d.gof_statistic <= min_ks + margin)
        .min_by(|a, b| {
            a.family
                .parameter_count()
                .cmp(&b.family.parameter_count())
                .then(a.gof_statistic.total_cmp(&b.gof_statistic))
        })
        .copied()
        .copied()
        .expect("the minimum is always within the margin");
    Ok(DistributionSetFit {
        selected,
        candidates,
    })
}

/// Fits the five families to quantized noise values and keeps the one whose
/// CDF is closest to the empirical CDF.
pub fn fit_distribution_set(samples: &[f64], q: f64) -> Result<FittedDistribution> {
    fit_distribution_set_detailed(samples, q, &FitOptions::default()).map(|f| f.selected)
}

/// Separate fits for each CFA channel, indexed by [`CfaColor::index`].
pub fn fit_per_channel(frames: &[SignalFrame], q: f64) -> Result<[FittedDistribution; 4]> {
    let mut channels: [Vec<f64>; 4] = Default::default();
    for f in frames {
        for r in 0..f.height() {
            for (c, &v) in f.row(r).iter().enumerate() {
                channels[f.cfa().color_at(r, c).index()].push(v);
            }
        }
    }
    let fits = CfaColor::ALL
        .iter()
        .map(|c| fit_distribution_set(&channels[c.index()], q))
        .collect::<Result<Vec<_>>>()?;
    Ok([fits[0], fits[1], fits[2], fits[3]])
}
