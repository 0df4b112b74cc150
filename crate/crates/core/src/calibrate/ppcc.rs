use rayon::prelude::*;

use crate::dist::tukey;
use crate::error::{Error, Result};

/// Probability-plot correlation over a grid of Tukey-lambda shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct PpccResult {
    pub lambda_grid: Vec<f64>,
    pub ppcc_values: Vec<f64>,
    pub best_lambda: f64,
}

impl PpccResult {
    /// `[-1, 1]` in steps of 0.01.
    pub fn default_grid() -> Vec<f64> {
        Self::grid(-1.0, 1.0, 0.01)
    }

    pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
        let n = ((end - start) / step).round() as i64;
        (0..=n).map(|i| start + i as f64 * step).collect()
    }

    /// Builds a result from a precomputed curve; `best_lambda` is the first
    /// maximiser.
    pub fn from_curve(lambda_grid: Vec<f64>, ppcc_values: Vec<f64>) -> Self {
        let best = ppcc_values
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
                Some((_, b)) if b >= v || v.is_nan() => acc,
                _ => Some((i, v)),
            })
            .map_or(0, |(i, _)| i);
        let best_lambda = lambda_grid.get(best).copied().unwrap_or(f64::NAN);
        PpccResult {
            lambda_grid,
            ppcc_values,
            best_lambda,
        }
    }

    pub fn best_value(&self) -> f64 {
        self.ppcc_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Filliben's estimates of the medians of uniform order statistics.
pub fn filliben_medians(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let nf = n as f64;
    let last = 0.5f64.powf(1.0 / nf);
    (1..=n)
        .map(|i| match i {
            1 => 1.0 - last,
            _ if i == n => last,
            _ => (i as f64 - 0.3175) / (nf + 0.365),
        })
        .collect()
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

fn sorted_checked(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 100 {
        return Err(Error::arg(
            "samples",
            format!("PPCC needs at least 100 samples, got {}", samples.len()),
        ));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    if xs[0] == xs[xs.len() - 1] {
        return Err(Error::Degenerate(
            "constant samples; correlation is undefined".into(),
        ));
    }
    Ok(xs)
}

/// Correlation between ordered samples and Tukey-lambda quantiles at
/// Filliben's plotting positions, for each `λ` in `lambda_grid`.
pub fn ppcc_tukey_lambda(samples: &[f64], lambda_grid: &[f64]) -> Result<PpccResult> {
    if lambda_grid.is_empty() {
        return Err(Error::arg("lambda_grid", "grid is empty"));
    }
    let xs = sorted_checked(samples)?;
    let positions = filliben_medians(xs.len());
    let values: Vec<f64> = lambda_grid
        .par_iter()
        .map(|&lam| {
            let qs: Vec<f64> = positions.iter().map(|&p| tukey::quantile(lam, p)).collect();
            correlation(&qs, &xs).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(PpccResult::from_curve(lambda_grid.to_vec(), values))
}

/// Location and scale of a Tukey-lambda fit with fixed `λ`, read off the
/// probability plot's regression line.
pub fn tukey_lambda_line_fit(samples: &[f64], lambda: f64) -> Result<(f64, f64)> {
    let xs = sorted_checked(samples)?;
    let qs: Vec<f64> = filliben_medians(xs.len())
        .iter()
        .map(|&p| tukey::quantile(lambda, p))
        .collect();
    let n = xs.len() as f64;
    let mq = qs.iter().sum::<f64>() / n;
    let mx = xs.iter().sum::<f64>() / n;
    let sqq: f64 = qs.iter().map(|q| (q - mq).powi(2)).sum();
    let sqx: f64 = qs.iter().zip(&xs).map(|(q, x)| (q - mq) * (x - mx)).sum();
    let scale = sqx / sqq;
    Ok((mx - scale * mq, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn medians_are_symmetric_and_ordered() {
        let m = filliben_medians(7);
        for i in 0..7 {
            assert!((m[i] + m[6 - i] - 1.0).abs() < 1e-3);
        }
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(filliben_medians(2)[0], 1.0 - 0.5f64.sqrt());
    }

    #[test]
    fn grid_has_expected_points() {
        let g = PpccResult::default_grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g[100], 0.0);
        assert!((g[114] - 0.14).abs() < 1e-12);
    }

    #[test]
    fn rejects_constant_and_short_input() {
        assert!(ppcc_tukey_lambda(&[1.0; 200], &[0.1]).is_err());
        assert!(ppcc_tukey_lambda(&[1.0, 2.0], &[0.1]).is_err());
        let xs: Vec<f64> = (0..200).map(f64::from).collect();
        assert!(ppcc_tukey_lambda(&xs, &[]).is_err());
    }

    #[test]
    fn best_lambda_attains_maximum() {
        let mut rng = stream(4, Domain::Read, &[]);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let r = ppcc_tukey_lambda(&xs, &PpccResult::grid(-0.5, 1.5, 0.05)).unwrap();
        let i = r
            .lambda_grid
            .iter()
            .position(|&l| l == r.best_lambda)
            .unwrap();
        assert_eq!(r.ppcc_values[i], r.best_value());
        assert!(r.ppcc_values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn invariant_to_affine_maps(a in 0.01f64..100.0, b in -1e3f64..1e3, seed in 0u64..100) {
            let mut rng = stream(seed, Domain::Read, &[]);
            let xs: Vec<f64> = (0..300).map(|_| rng.random::<f64>().powi(3)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let grid = PpccResult::grid(-0.5, 1.0, 0.25);
            let p = ppcc_tukey_lambda(&xs, &grid).unwrap();
            let q = ppcc_tukey_lambda(&ys, &grid).unwrap();
            for (u, v) in p.ppcc_values.iter().zip(&q.ppcc_values) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
