use crate::error::{Error, Result};
use crate::raw::{subtract_black, BayerFrame};

/// Straight-line fit of temporal variance against mean signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonTransferFit {
    /// Total gain `K_d·K_a` in DN per photon (β₁).
    pub gain: f64,
    /// Variance at zero signal, DN².
    pub intercept: f64,
    pub r_squared: f64,
    /// `(mean DN, variance DN²)` per illumination level.
    pub points: Vec<(f64, f64)>,
}

/// Per-level statistics: spatial average of the per-pixel temporal mean
/// (black subtracted) and of the per-pixel unbiased temporal variance.
pub fn stack_mean_variance(stack: &[BayerFrame]) -> Result<(f64, f64)> {
    if stack.len() < 2 {
        return Err(Error::arg(
            "stacks",
            format!("each level needs at least 2 frames, got {}", stack.len()),
        ));
    }
    let first = &stack[0];
    for f in &stack[1..] {
        if f.width() != first.width()
            || f.height() != first.height()
            || f.quantizer() != first.quantizer()
        {
            return Err(Error::arg(
                "stacks",
                "frames in a stack differ in geometry or ADC settings",
            ));
        }
    }
    let signals: Vec<_> = stack.iter().map(subtract_black).collect();
    let n = signals.len() as f64;
    let pixels = first.width() * first.height();
    let (mut mean_sum, mut var_sum) = (0.0, 0.0);
    for i in 0..pixels {
        let m = signals.iter().map(|s| s.values()[i]).sum::<f64>() / n;
        let v = signals
            .iter()
            .map(|s| (s.values()[i] - m).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        mean_sum += m;
        var_sum += v;
    }
    Ok((mean_sum / pixels as f64, var_sum / pixels as f64))
}

/// Least-squares `variance = gain·mean + intercept` over the given points.
pub fn fit_mean_variance_line(points: &[(f64, f64)]) -> Result<PhotonTransferFit> {
    if points.len() < 3 {
        return Err(Error::arg(
            "stacks",
            format!("need at least 3 illumination levels, got {}", points.len()),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::Degenerate(
            "all illumination levels have the same mean".into(),
        ));
    }
    if syy == 0.0 {
        return Err(Error::Degenerate(
            "variance is identical at every level; r² is undefined".into(),
        ));
    }
    let gain = sxy / sxx;
    let intercept = my - gain * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - gain * p.0 - intercept).powi(2))
        .sum();
    let r_squared = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    if gain <= 0.0 {
        return Err(Error::Degenerate(format!("non-positive gain {gain}")));
    }
    Ok(PhotonTransferFit {
        gain,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// Photon transfer calibration over flat-field stacks, one stack per
/// illumination level.
pub fn photon_transfer_fit(stacks: &[Vec<BayerFrame>]) -> Result<PhotonTransferFit> {
    if stacks.len() < 3 {
        return Err(Error::arg(
            "stacks",
            format!("need at least 3 illumination levels, got {}", stacks.len()),
        ));
    }
    let reference = stacks[0]
        .first()
        .map(|f| (f.width(), f.height(), *f.quantizer()));
    for s in stacks {
        if s.first().map(|f| (f.width(), f.height(), *f.quantizer())) != reference {
            return Err(Error::arg(
                "stacks",
                "stacks differ in geometry or ADC settings",
            ));
        }
    }
    let points = stacks
        .iter()
        .map(|s| stack_mean_variance(s))
        .collect::<Result<Vec<_>>>()?;
    fit_mean_variance_line(&points)
}

/// Pooled within-frame variance of black-subtracted dark pixels (β₂).
pub fn estimate_read_variance(dark_frames: &[BayerFrame]) -> Result<f64> {
    if dark_frames.is_empty() {
        return Err(Error::arg("dark_frames", "no dark frames given"));
    }
    let (mut ss, mut dof) = (0.0, 0.0);
    for f in dark_frames {
        let s = subtract_black(f);
        let v = s.values();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        ss += v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
        dof += v.len() as f64 - 1.0;
    }
    Ok(ss / dof)
}

/// Standard deviation of a per-row offset shared by all pixels of a row.
///
/// Row means carry `σ_row² + σ_pix²/W`; subtracting the pixel share leaves
/// the row component. Clamped at zero.
pub fn estimate_row_sigma(dark_frames: &[BayerFrame]) -> Result<f64> {
    if dark_frames.is_empty() {
        return Err(Error::arg("dark_frames", "no dark frames given"));
    }
    let mut acc = 0.0;
    for f in dark_frames {
        let s = subtract_black(f);
        let w = s.width() as f64;
        let total = crate::report::variance(s.values());
        let row_means: Vec<f64> = s.rows().map(|r| r.iter().sum::<f64>() / w).collect();
        let between = crate::report::variance(&row_means);
        acc += ((between - total / w) / (1.0 - 1.0 / w)).max(0.0);
    }
    Ok((acc / dark_frames.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::{CfaPattern, Quantizer, SampleFormat};

    fn q() -> Quantizer {
        Quantizer::new(12, 1.0, 64.0).unwrap()
    }

    fn frame(values: Vec<f64>) -> BayerFrame {
        BayerFrame::new(2, 2, values, CfaPattern::Rggb, q(), SampleFormat::U16).unwrap()
    }

    #[test]
    fn too_few_levels() {
        let s = vec![frame(vec![64.0; 4]), frame(vec![65.0; 4])];
        assert!(photon_transfer_fit(&[s.clone(), s]).is_err());
    }

    #[test]
    fn noiseless_stacks_are_degenerate() {
        let level = |v: f64| vec![frame(vec![v; 4]), frame(vec![v; 4])];
        let err = photon_transfer_fit(&[level(70.0), level(80.0), level(90.0)]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn identical_means_are_singular() {
        let pts = [(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)];
        assert!(matches!(
            fit_mean_variance_line(&pts),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<_> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&m| (m, 2.0 * m + 9.0))
            .collect();
        let fit = fit_mean_variance_line(&pts).unwrap();
        assert!((fit.gain - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 9.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn read_variance_edge_cases() {
        assert!(estimate_read_variance(&[]).is_err());
        assert_eq!(
            estimate_read_variance(&[frame(vec![64.0; 4])]).unwrap(),
            0.0
        );
        let a = frame(vec![63.0, 65.0, 63.0, 65.0]);
        let b = frame(vec![60.0, 68.0, 60.0, 68.0]);
        let va = estimate_read_variance(std::slice::from_ref(&a)).unwrap();
        let vb = estimate_read_variance(std::slice::from_ref(&b)).unwrap();
        let pooled = estimate_read_variance(&[a, b]).unwrap();
        assert!(va < pooled && pooled < vb);
    }
}
