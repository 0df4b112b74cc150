//! Statistical checks and serializable noise reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::calibrate::PpccResult;
use crate::dist::FittedDistribution;
use crate::error::{Error, Result};
use crate::raw::SignalFrame;

/// Sample moments. Skewness and kurtosis are `None` when undefined
/// (constant input, or too few values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    /// Excess kurtosis.
    pub kurtosis: Option<f64>,
}

/// Mean, unbiased variance, adjusted skewness (G1) and adjusted excess
/// kurtosis (G2).
pub fn noise_stats(values: &[f64]) -> Result<Moments> {
    let n = values.len();
    if n < 2 {
        return Err(Error::arg(
            "values",
            format!("need at least 2 values, got {n}"),
        ));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let defined = m2 > 0.0;
    let skewness = (defined && n >= 3).then(|| {
        let g1 = m3 / m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    });
    let kurtosis = (defined && n >= 4).then(|| {
        let g2 = m4 / (m2 * m2) - 3.0;
        ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0))
    });
    Ok(Moments {
        mean,
        variance,
        skewness,
        kurtosis,
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    xs
}

/// Sup-norm distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic_with(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.len() < 10 {
        return Err(Error::arg(
            "samples",
            format!("KS needs at least 10 samples, got {}", samples.len()),
        ));
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties form one step of the empirical CDF
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    Ok(d)
}

pub fn ks_statistic(samples: &[f64], dist: &FittedDistribution) -> Result<f64> {
    ks_statistic_with(samples, |x| dist.cdf(x))
}

/// Two-sample KS statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 10 || b.len() < 10 {
        return Err(Error::arg(
            "samples",
            "two-sample KS needs at least 10 values per side",
        ));
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok((d, kolmogorov_sf((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d)))
}

/// Asymptotic one-sample p-value for a KS distance `d` over `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowAutocorrelation {
    /// `(lag, value)` for lags `1..=max_lag`.
    pub lags: Vec<(usize, f64)>,
    /// Rows skipped because they carry no variance about the global mean.
    pub excluded_rows: usize,
}

impl RowAutocorrelation {
    pub fn at(&self, lag: usize) -> Option<f64> {
        self.lags.iter().find(|(l, _)| *l == lag).map(|(_, v)| *v)
    }
}

/// Within-row autocorrelation after removing the global mean.
///
/// Lag-`k` autocovariance and lag-0 variance are averaged over rows before
/// taking the ratio, so a row offset shared by every pixel of the row
/// contributes `σ_row² / (σ_row² + σ_pixel²)` in expectation.
pub fn row_autocorrelation(frame: &SignalFrame, max_lag: usize) -> Result<RowAutocorrelation> {
    let w = frame.width();
    if max_lag == 0 || w <= max_lag {
        return Err(Error::arg(
            "max_lag",
            format!("need 1 <= max_lag < width ({w}), got {max_lag}"),
        ));
    }
    let mu = mean(frame.values());
    let mut cov = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    let mut excluded = 0usize;
    for row in frame.rows() {
        let c0: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / w as f64;
        if c0 == 0.0 {
            excluded += 1;
            continue;
        }
        used += 1;
        cov[0] += c0;
        for (lag, c) in cov.iter_mut().enumerate().skip(1) {
            let s: f64 = row
                .iter()
                .zip(&row[lag..])
                .map(|(a, b)| (a - mu) * (b - mu))
                .sum();
            *c += s / (w - lag) as f64;
        }
    }
    let lags = (1..=max_lag)
        .map(|lag| {
            let v = if used == 0 {
                f64::NAN
            } else {
                (cov[lag] / cov[0]).clamp(-1.0, 1.0)
            };
            (lag, v)
        })
        .collect();
    Ok(RowAutocorrelation {
        lags,
        excluded_rows: excluded,
    })
}

/// Bundle of statistics for one set of noise values.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub sample_count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    /// KS statistic and the name of the reference distribution.
    pub ks: Option<(f64, String)>,
    pub row_autocorr: Vec<(usize, f64)>,
    pub ppcc: Option<PpccResult>,
}

impl NoiseReport {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let m = noise_stats(values)?;
        Ok(NoiseReport {
            sample_count: values.len(),
            mean: m.mean,
            variance: m.variance,
            skewness: m.skewness,
            kurtosis: m.kurtosis,
            ks: None,
            row_autocorr: Vec::new(),
            ppcc: None,
        })
    }

    pub fn with_ks(mut self, values: &[f64], dist: &FittedDistribution) -> Result<Self> {
        self.ks = Some((ks_statistic(values, dist)?, dist.to_string()));
        Ok(self)
    }

    /// Scalars as `key=value` lines.
    pub fn scalars_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "sample_count={}", self.sample_count);
        let _ = writeln!(s, "mean={}", self.mean);
        let _ = writeln!(s, "variance={}", self.variance);
        let _ = writeln!(s, "skewness={}", opt(self.skewness));
        let _ = writeln!(s, "kurtosis={}", opt(self.kurtosis));
        if let Some((d, name)) = &self.ks {
            let _ = writeln!(s, "ks_statistic={d}");
            let _ = writeln!(s, "ks_reference={name}");
        }
        if let Some(p) = &self.ppcc {
            let _ = writeln!(s, "ppcc_best_lambda={}", p.best_lambda);
        }
        s
    }

    pub fn autocorr_csv(&self) -> String {
        let mut s = String::from("lag,value\n");
        for (lag, v) in &self.row_autocorr {
            let _ = writeln!(s, "{lag},{v}");
        }
        s
    }

    pub fn ppcc_csv(&self) -> Option<String> {
        self.ppcc.as_ref().map(|p| {
            let mut s = String::from("lambda,ppcc\n");
            for (l, v) in p.lambda_grid.iter().zip(&p.ppcc_values) {
                let _ = writeln!(s, "{l},{v}");
            }
            s
        })
    }

    pub fn parse(scalars: &str, autocorr_csv: &str, ppcc_csv: Option<&str>) -> Result<Self> {
        let origin = Path::new("<report>");
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            what: "noise report",
            reason,
        };
        let kv: BTreeMap<&str, &str> = scalars
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .ok_or_else(|| bad(format!("bad line `{l}`")))
            })
            .collect::<Result<_>>()?;
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing `{k}`")))?
                .parse()
                .map_err(|_| bad(format!("bad number for `{k}`")))
        };
        let opt = |k: &str| -> Result<Option<f64>> {
            match kv.get(k) {
                Some(&"undefined") => Ok(None),
                _ => num(k).map(Some),
            }
        };
        let ks = match (kv.get("ks_statistic"), kv.get("ks_reference")) {
            (Some(_), Some(name)) => Some((num("ks_statistic")?, name.to_string())),
            _ => None,
        };
        let pairs = |csv: &str| -> Result<Vec<(f64, f64)>> {
            csv.lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let (a, b) = l
                        .split_once(',')
                        .ok_or_else(|| bad(format!("bad row `{l}`")))?;
                    Ok((
                        a.parse().map_err(|_| bad(format!("bad row `{l}`")))?,
                        b.parse().map_err(|_| bad(format!("bad row `{l}`")))?,
                    ))
                })
                .collect()
        };
        let row_autocorr = pairs(autocorr_csv)?
            .into_iter()
            .map(|(l, v)| (l as usize, v))
            .collect();
        let ppcc = match ppcc_csv {
            Some(csv) => {
                let rows = pairs(csv)?;
                Some(PpccResult::from_curve(
                    rows.iter().map(|r| r.0).collect(),
                    rows.iter().map(|r| r.1).collect(),
                ))
            }
            None => None,
        };
        Ok(NoiseReport {
            sample_count: num("sample_count")? as usize,
            mean: num("mean")?,
            variance: num("variance")?,
            skewness: opt("skewness")?,
            kurtosis: opt("kurtosis")?,
            ks,
            row_autocorr,
            ppcc,
        })
    }

    /// Writes `report.txt`, `autocorr.csv` and (when present) `ppcc.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: &str| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        put("report.txt", &self.scalars_text())?;
        put("autocorr.csv", &self.autocorr_csv())?;
        if let Some(csv) = self.ppcc_csv() {
            put("ppcc.csv", &csv)?;
        }
        Ok(())
    }
}
