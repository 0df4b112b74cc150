//! Built-in oracle checks behind `rawnoise selftest`. The quick tier covers
//! exact structural identities; the full tier adds small statistical closure
//! runs against the virtual sensor.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use crate::calibrate::{
    fit_mean_variance_line, photon_transfer_fit, ppcc_tukey_lambda, stack_mean_variance, PpccResult,
};
use crate::darkdb::{DarkFrameDb, DarkKey};
use crate::dist::FittedDistribution;
use crate::highbit::{bin_mass, reconstruct_bayer};
use crate::profile::SensorProfile;
use crate::raw::{cfa_phase, quantize, subtract_black, CfaPattern, Quantizer, SignalFrame};
use crate::report::{ks_two_sample, mean, variance};
use crate::rng::{stream, Domain};
use crate::synth::{
    compose_real, shot_noise, synth_eld_like, synth_pg, EldParams, LineAxis, SynthConfig, SynthMode,
};
use crate::vsensor::{simulate_dark_stack, simulate_flat_stack, VirtualSensorParams};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let mut rng = stream(seed, Domain::Read, &[]);
    let d = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

fn quantize_roundtrip() -> Result<String, String> {
    let qz = Quantizer::new(12, 1.0, 64.0).map_err(|e| e.to_string())?;
    let noise = SignalFrame::new(64, 64, gaussian(4096, 5.0, 1), CfaPattern::Rggb)
        .map_err(|e| e.to_string())?;
    let f = quantize(&noise, &qz).map_err(|e| e.to_string())?;
    let again = quantize(&subtract_black(&f), &qz).map_err(|e| e.to_string())?;
    ensure(again == f, "quantize is idempotent".into())
}

fn zero_shot_noise() -> Result<String, String> {
    let z = SignalFrame::filled(32, 32, 0.0, CfaPattern::Rggb).map_err(|e| e.to_string())?;
    let out = shot_noise(&z, 2.0, 3).map_err(|e| e.to_string())?;
    ensure(
        out.values().iter().all(|&v| v == 0.0),
        "Poisson(0) is 0".into(),
    )
}

fn cfa_phase_cycle() -> Result<String, String> {
    let ok = CfaPattern::ALL.iter().all(|&p| {
        cfa_phase(p, 2, 0) == p
            && cfa_phase(p, 0, 2) == p
            && cfa_phase(cfa_phase(p, 1, 1), 1, 1) == p
    });
    ensure(ok, "phase shifts have period 2".into())
}

fn bin_mass_symmetry() -> Result<String, String> {
    let d = FittedDistribution::gaussian(0.0, 2.0).map_err(|e| e.to_string())?;
    let m = bin_mass(&d, 0.0, 1.0);
    let expect = 2.0 * (d.cdf(0.5) - 0.5);
    ensure((m - expect).abs() < 1e-14, format!("mass {m:.12}"))
}

fn highbit_roundtrip() -> Result<String, String> {
    let p = VirtualSensorParams {
        width: 64,
        height: 64,
        read2_sigma: 2.0,
        quantizer: Quantizer::new(12, 1.0, 64.0).map_err(|e| e.to_string())?,
        ..VirtualSensorParams::default()
    };
    let dist = FittedDistribution::gaussian(0.0, 2.0).map_err(|e| e.to_string())?;
    for (k, f) in simulate_dark_stack(&p, 5, 9)
        .map_err(|e| e.to_string())?
        .iter()
        .enumerate()
    {
        let rec = reconstruct_bayer(f, &dist, k as u64).map_err(|e| e.to_string())?;
        if &quantize(&rec.frame, f.quantizer()).map_err(|e| e.to_string())? != f {
            return Err(format!("frame {k} did not round-trip"));
        }
    }
    Ok("5 frames bit-exact".into())
}

fn pap_alignment() -> Result<String, String> {
    let dir = tempfile_dir()?;
    let p = VirtualSensorParams {
        width: 24,
        height: 24,
        read2_sigma: 1.0,
        ..VirtualSensorParams::default()
    };
    let mut db = DarkFrameDb::open_or_create(&dir).map_err(|e| e.to_string())?;
    for f in simulate_dark_stack(&p, 2, 1).map_err(|e| e.to_string())? {
        db.ingest(f, "selftest", 100, 0.0, 0)
            .map_err(|e| e.to_string())?;
    }
    let key = DarkKey::new("selftest", 100);
    let mut bad = 0;
    for s in 0..400u64 {
        let target = CfaPattern::ALL[(s % 4) as usize];
        let patch = db
            .sample_patch_pattern_aligned(&key, 8, 8, target, s)
            .map_err(|e| e.to_string())?;
        bad += usize::from(patch.cfa() != target);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(bad == 0, format!("{bad} mismatches in 400 draws"))
}

fn tempfile_dir() -> Result<std::path::PathBuf, String> {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let base = std::env::temp_dir().join(format!(
        "rawnoise-selftest-{}-{}",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
    Ok(base)
}

fn photon_transfer_closure() -> Result<String, String> {
    let p = VirtualSensorParams {
        width: 128,
        height: 128,
        analog_gain: 1.5,
        read2_sigma: 2.0,
        quantizer: Quantizer::new(16, 1.0, 256.0).map_err(|e| e.to_string())?,
        ..VirtualSensorParams::default()
    };
    let stacks = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| simulate_flat_stack(l, &p, 4, 10 + i as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let fit = photon_transfer_fit(&stacks).map_err(|e| e.to_string())?;
    ensure(
        (fit.gain / 1.5 - 1.0).abs() < 0.03,
        format!("gain {:.4} (oracle 1.5)", fit.gain),
    )
}

fn ppcc_gaussian() -> Result<String, String> {
    let r = ppcc_tukey_lambda(
        &gaussian(20_000, 1.0, 4),
        &PpccResult::grid(-0.2, 0.6, 0.01),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        (0.08..=0.2).contains(&r.best_lambda),
        format!("lambda {:.2}", r.best_lambda),
    )
}

fn eld_reduces_to_pg() -> Result<String, String> {
    let z = SignalFrame::filled(300, 300, 0.0, CfaPattern::Rggb).map_err(|e| e.to_string())?;
    let p = EldParams {
        gain: 1.0,
        tl_lambda: 0.14,
        tl_scale: EldParams::tl_scale_for_variance(0.14, 9.0),
        row_sigma: 0.0,
        quant_step: 0.0,
        line_axis: LineAxis::Rows,
    };
    let a = synth_eld_like(&z, &p, 1).map_err(|e| e.to_string())?;
    let b = synth_pg(&z, 1.0, 9.0, 2).map_err(|e| e.to_string())?;
    let (d, pv) = ks_two_sample(a.values(), b.values()).map_err(|e| e.to_string())?;
    ensure(pv > 0.01, format!("KS {d:.5}, p {pv:.3}"))
}

fn pipeline_closure() -> Result<String, String> {
    let dir = tempfile_dir()?;
    let p = VirtualSensorParams {
        width: 96,
        height: 96,
        analog_gain: 2.0,
        read2_sigma: 2.0,
        row_sigma: 0.5,
        quantizer: Quantizer::new(16, 1.0, 256.0).map_err(|e| e.to_string())?,
        ..VirtualSensorParams::default()
    };
    let mut db = DarkFrameDb::open_or_create(&dir).map_err(|e| e.to_string())?;
    for f in simulate_dark_stack(&p, 4, 1).map_err(|e| e.to_string())? {
        db.ingest(f, "selftest", 100, 0.0, 0)
            .map_err(|e| e.to_string())?;
    }
    let stacks = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| simulate_flat_stack(l, &p, 3, 20 + i as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let gain = photon_transfer_fit(&stacks)
        .map_err(|e| e.to_string())?
        .gain;
    let mut profile = SensorProfile::new("selftest");
    profile.iso_mut(100).beta1 = Some(gain);
    let mut points = Vec::new();
    for (i, level) in [100.0, 200.0, 400.0, 800.0].into_iter().enumerate() {
        let clean =
            SignalFrame::filled(96, 96, level, CfaPattern::Rggb).map_err(|e| e.to_string())?;
        let stack = (0..3u64)
            .map(|k| {
                let cfg = SynthConfig::new(SynthMode::RealPap, 100, 1000 * i as u64 + k);
                compose_real(&clean, &db, &profile, &cfg).map(|c| c.frame)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        points.push(stack_mean_variance(&stack).map_err(|e| e.to_string())?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    let fit = fit_mean_variance_line(&points).map_err(|e| e.to_string())?;
    ensure(
        (fit.gain / 2.0 - 1.0).abs() < 0.05,
        format!("gain {:.4} (oracle 2.0)", fit.gain),
    )
}

fn shot_moments() -> Result<String, String> {
    let clean =
        SignalFrame::filled(500, 500, 100.0, CfaPattern::Rggb).map_err(|e| e.to_string())?;
    let out = shot_noise(&clean, 2.0, 5).map_err(|e| e.to_string())?;
    let (m, v) = (mean(out.values()), variance(out.values()));
    ensure(
        (m / 100.0 - 1.0).abs() < 0.01 && (v / 200.0 - 1.0).abs() < 0.03,
        format!("mean {m:.3}, variance {v:.2}"),
    )
}

const QUICK: &[(&str, Check)] = &[
    ("quantize idempotent", quantize_roundtrip),
    ("zero signal has zero shot noise", zero_shot_noise),
    ("CFA phase period", cfa_phase_cycle),
    ("bin mass symmetry", bin_mass_symmetry),
    ("high-bit round trip", highbit_roundtrip),
    ("pattern-aligned draws", pap_alignment),
];

const FULL: &[(&str, Check)] = &[
    ("shot-noise moments", shot_moments),
    ("photon transfer closure", photon_transfer_closure),
    ("PPCC on Gaussian samples", ppcc_gaussian),
    ("ELD reduces to P-G", eld_reduces_to_pg),
    ("dark-frame pipeline closure", pipeline_closure),
];

/// Runs the checks, one line each, and returns whether all passed.
pub fn run(quick: bool, out: &mut impl Write) -> bool {
    let mut all = true;
    let tiers: &[&[(&str, Check)]] = if quick { &[QUICK] } else { &[QUICK, FULL] };
    for (name, check) in tiers.iter().flat_map(|t| t.iter()) {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                all = false;
                ("FAIL", d)
            }
        };
        let _ = writeln!(
            out,
            "{tag} {name}: {detail} [{:.2}s]",
            t.elapsed().as_secs_f64()
        );
    }
    all
}
