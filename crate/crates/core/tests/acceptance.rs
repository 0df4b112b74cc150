//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every expected value below is computed here from first principles
//! (closed-form moments, numerical integration, direct pixel lookups), not
//! read back from the library under test.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rawnoise::calibrate::{
    fit_distribution_set, fit_mean_variance_line, photon_transfer_fit, ppcc_tukey_lambda,
    stack_mean_variance, PpccResult,
};
use rawnoise::darkdb::{DarkFrameDb, DarkKey};
use rawnoise::highbit::{reconstruct, BinSampler};
use rawnoise::profile::SensorProfile;
use rawnoise::raw::{quantize, subtract_black, CfaPattern, Quantizer, SignalFrame};
use rawnoise::report::{ks_two_sample, row_autocorrelation};
use rawnoise::synth::{
    compose_real, independent_layer, shot_noise, synth_eld_like, synth_pg, EldParams, LineAxis,
    SynthConfig, SynthMode,
};
use rawnoise::vsensor::{
    simulate_analog, simulate_dark_stack, simulate_flat_stack, VirtualSensorParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn q1(bits: u32, black: f64) -> Quantizer {
    Quantizer::new(bits, 1.0, black).unwrap()
}

// 1. Photon transfer recovers the oracle gain and read intercept.
fn calibration_closure() -> Outcome {
    let p = VirtualSensorParams {
        width: 512,
        height: 512,
        analog_gain: 1.5,
        digital_gain: 1.0,
        read1_sigma: 1.0,
        read2_sigma: 2.0,
        quantizer: q1(16, 1024.0),
        ..VirtualSensorParams::default()
    };
    let gain = p.analog_gain * p.digital_gain;
    // N₁ is amplified by K_a, N₂ is not; ADC rounding adds q²/12
    let intercept = (p.analog_gain * p.read1_sigma).powi(2) + p.read2_sigma.powi(2) + 1.0 / 12.0;
    let stacks: Vec<_> = [100.0, 200.0, 400.0, 800.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| simulate_flat_stack(l, &p, 8, 100 + i as u64).unwrap())
        .collect();
    let fit = photon_transfer_fit(&stacks).unwrap();
    let eg = (fit.gain / gain - 1.0).abs();
    let ei = (fit.intercept / intercept - 1.0).abs();
    outcome(
        eg < 0.02 && ei < 0.10,
        format!(
            "gain {:.4} vs {gain} ({:.2}% < 2%), intercept {:.3} vs {intercept:.3} ({:.1}% < 10%)",
            fit.gain,
            100.0 * eg,
            fit.intercept,
            100.0 * ei
        ),
    )
}

// 2. PPCC on Gaussian samples lands near λ = 0.14.
fn ppcc_gaussian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let r = ppcc_tukey_lambda(&xs, &PpccResult::default_grid()).unwrap();
    outcome(
        (0.10..=0.18).contains(&r.best_lambda),
        format!(
            "best lambda {:.2} in [0.10, 0.18], ppcc {:.6}",
            r.best_lambda,
            r.best_value()
        ),
    )
}

// 3. Poisson moments of the shot-noise layer.
fn shot_moments() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for (i, &y) in [10.0, 100.0, 1000.0].iter().enumerate() {
        for (j, &k) in [0.5, 2.0, 8.0].iter().enumerate() {
            let clean = SignalFrame::filled(1000, 1000, y, CfaPattern::Rggb).unwrap();
            let out = shot_noise(&clean, k, (10 * i + j) as u64).unwrap();
            let em = (mean(out.values()) / y - 1.0).abs();
            let ev = (var(out.values()) / (k * y) - 1.0).abs();
            ok &= em < 0.01 && ev < 0.03;
            worst = (worst.0.max(em), worst.1.max(ev));
        }
    }
    outcome(
        ok,
        format!(
            "9 (Y, K) pairs: worst mean error {:.3}% < 1%, worst variance error {:.2}% < 3%",
            100.0 * worst.0,
            100.0 * worst.1
        ),
    )
}

// 4. High-bit reconstruction is exact on the ADC grid and recovers the
// continuous distribution.
fn highbit_round_trip() -> Outcome {
    let p = VirtualSensorParams {
        width: 256,
        height: 200,
        read2_sigma: 1.5,
        quantizer: q1(12, 64.0),
        ..VirtualSensorParams::default()
    };
    let zeros = vec![0.0; p.width * p.height];
    let mut analog = Vec::new();
    let mut frames = Vec::new();
    for s in 0..20u64 {
        let a = simulate_analog(&zeros, &p, s).unwrap();
        frames.push(quantize(&a, &p.quantizer).unwrap());
        analog.extend_from_slice(a.values());
    }
    let pooled: Vec<f64> = frames
        .iter()
        .flat_map(|f| subtract_black(f).into_values())
        .collect();
    let dist = fit_distribution_set(&pooled, 1.0).unwrap();
    let sampler = BinSampler::for_quantizer(dist, &p.quantizer).unwrap();
    let mut exact = 0;
    let mut rec = Vec::new();
    for (s, f) in frames.iter().enumerate() {
        let r = reconstruct(&subtract_black(f), &sampler, 1000 + s as u64).unwrap();
        exact += usize::from(&quantize(&r.frame, &p.quantizer).unwrap() == f);
        rec.extend_from_slice(r.frame.values());
    }
    let (d, _) = ks_two_sample(&rec, &analog).unwrap();
    let (dq, _) = ks_two_sample(&pooled, &analog).unwrap();
    outcome(
        exact == 20 && d < 0.005,
        format!(
            "{exact}/20 frames bit-exact, KS {d:.5} < 0.005 on {} samples (quantized: {dq:.4}), fitted {dist}",
            rec.len()
        ),
    )
}

fn dark_db(dir: &Path, p: &VirtualSensorParams, n: usize, seed: u64) -> DarkFrameDb {
    let mut db = DarkFrameDb::open_or_create(dir).unwrap();
    for f in simulate_dark_stack(p, n, seed).unwrap() {
        db.ingest(f, "oracle", 100, 0.0, 0).unwrap();
    }
    db
}

// 5. With small read noise, high-bit reconstruction moves the synthesized
// independent-layer variance toward the oracle's continuous dark variance.
fn quantization_ablation() -> Outcome {
    let sigma = 1.0;
    let p = VirtualSensorParams {
        width: 256,
        height: 256,
        read2_sigma: sigma,
        quantizer: q1(12, 64.0),
        ..VirtualSensorParams::default()
    };
    let oracle = sigma * sigma;
    let dir = tempfile::tempdir().unwrap();
    let db = dark_db(dir.path(), &p, 8, 5);
    let key = DarkKey::new("oracle", 100);
    let pooled = db.pooled_noise(&key).unwrap();
    let dist = fit_distribution_set(&pooled, 1.0).unwrap();
    let sampler = BinSampler::for_quantizer(dist, &p.quantizer).unwrap();
    let mut wins = 0;
    let mut errs = Vec::new();
    for seed in 0..10u64 {
        let layer = |s: Option<&BinSampler>| {
            let l = independent_layer(
                &db,
                &key,
                SynthMode::RealPap,
                256,
                256,
                CfaPattern::Rggb,
                128,
                s,
                seed,
            )
            .unwrap();
            (var(l.noise.values()) - oracle).abs()
        };
        let (plain, hb) = (layer(None), layer(Some(&sampler)));
        wins += usize::from(hb < plain);
        errs.push((plain, hb));
    }
    let mp = mean(&errs.iter().map(|e| e.0).collect::<Vec<_>>());
    let mh = mean(&errs.iter().map(|e| e.1).collect::<Vec<_>>());
    outcome(
        wins == 10,
        format!("σ = q: HB closer in {wins}/10 seeds, mean |Δvar| PAP {mp:.4} vs PAP+HB {mh:.4}"),
    )
}

// 6. Patch sampling keeps row correlation, pixel-wise sampling destroys it.
fn spatial_correlation() -> Outcome {
    let p = VirtualSensorParams {
        width: 512,
        height: 512,
        read2_sigma: 3.0,
        row_sigma: 3.0,
        quantizer: q1(12, 128.0),
        ..VirtualSensorParams::default()
    };
    // row share of the total: σ_r² / (σ_r² + σ_p² + q²/12)
    let oracle = 9.0 / (9.0 + 9.0 + 1.0 / 12.0);
    let dir = tempfile::tempdir().unwrap();
    let db = dark_db(dir.path(), &p, 4, 6);
    let key = DarkKey::new("oracle", 100);
    let source = mean(
        &(0..4)
            .map(|i| {
                row_autocorrelation(&subtract_black(db.frame(i).unwrap()), 1)
                    .unwrap()
                    .at(1)
                    .unwrap()
            })
            .collect::<Vec<_>>(),
    );
    let lag1 = |mode| {
        let l =
            independent_layer(&db, &key, mode, 512, 512, CfaPattern::Rggb, 128, None, 66).unwrap();
        row_autocorrelation(&l.noise, 1).unwrap().at(1).unwrap()
    };
    let pap = lag1(SynthMode::RealPap);
    let px = lag1(SynthMode::RealPixelwise);
    outcome(
        pap >= 0.8 * source && px.abs() < 0.05,
        format!(
            "source {source:.3} (oracle {oracle:.3}), PAP {pap:.3} = {:.0}% >= 80%, pixel-wise {px:.4} (|·| < 0.05)",
            100.0 * pap / source
        ),
    )
}

/// Colour index at `(r, c)` of a 2×2 pattern given as row-major letters.
fn colour(pattern: CfaPattern, r: usize, c: usize) -> char {
    let letters: [char; 4] = match pattern {
        CfaPattern::Rggb => ['R', 'g', 'G', 'B'],
        CfaPattern::Bggr => ['B', 'G', 'g', 'R'],
        CfaPattern::Grbg => ['g', 'R', 'B', 'G'],
        CfaPattern::Gbrg => ['G', 'B', 'R', 'g'],
    };
    letters[(r % 2) * 2 + c % 2]
}

// 7. Pattern-aligned draws always land on the requested phase.
fn cfa_alignment() -> Outcome {
    let mut mismatches = 0;
    let mut draws = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (si, src) in CfaPattern::ALL.into_iter().enumerate() {
        let p = VirtualSensorParams {
            width: 38,
            height: 30,
            cfa: src,
            read2_sigma: 1.0,
            ..VirtualSensorParams::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let db = dark_db(dir.path(), &p, 3, si as u64);
        let key = DarkKey::new("oracle", 100);
        for k in 0..2500u64 {
            let target = CfaPattern::ALL[rng.random_range(0..4)];
            let (h, w) = (rng.random_range(1..=20), rng.random_range(1..=30));
            let d = db.draw_patch_aligned(&key, h, w, target, k).unwrap();
            draws += 1;
            // compare colours pixel by pixel against the source frame
            let ok = (0..2.min(h)).all(|i| {
                (0..2.min(w)).all(|j| colour(src, d.row + i, d.col + j) == colour(target, i, j))
            }) && d.patch.cfa() == target;
            mismatches += usize::from(!ok);
        }
    }
    outcome(
        mismatches == 0,
        format!("{draws} draws over 4 source patterns, {mismatches} phase mismatches"),
    )
}

/// `Var = ∫₀¹ Q(p)² dp` for the zero-mean Tukey-lambda quantile function.
fn tukey_variance_numeric(lambda: f64) -> f64 {
    let n = 2_000_000;
    (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            let q = (p.powf(lambda) - (1.0 - p).powf(lambda)) / lambda;
            q * q
        })
        .sum::<f64>()
        / n as f64
}

// 8. ELD-like synthesis with λ = 0.14 and no row noise matches P-G.
fn eld_reduction() -> Outcome {
    let beta2 = 16.0;
    let scale = (beta2 / tukey_variance_numeric(0.14)).sqrt();
    let zero = SignalFrame::filled(1000, 1000, 0.0, CfaPattern::Rggb).unwrap();
    let eld = synth_eld_like(
        &zero,
        &EldParams {
            gain: 1.0,
            tl_lambda: 0.14,
            tl_scale: scale,
            row_sigma: 0.0,
            quant_step: 0.0,
            line_axis: LineAxis::Rows,
        },
        8,
    )
    .unwrap();
    let pg = synth_pg(&zero, 1.0, beta2, 88).unwrap();
    let (d, pv) = ks_two_sample(eld.values(), pg.values()).unwrap();
    outcome(
        pv > 0.01,
        format!(
            "two-sample KS {d:.5}, p = {pv:.3} > 0.01 on 10^6 + 10^6 samples (TL scale {scale:.4})"
        ),
    )
}

// 9. simulate → ingest → calibrate → compose → photon transfer.
fn pipeline_closure() -> Outcome {
    let p = VirtualSensorParams {
        width: 256,
        height: 256,
        analog_gain: 2.0,
        digital_gain: 1.25,
        read1_sigma: 1.0,
        read2_sigma: 2.0,
        row_sigma: 0.5,
        quantizer: q1(16, 1024.0),
        ..VirtualSensorParams::default()
    };
    let oracle = 2.5;
    let dir = tempfile::tempdir().unwrap();
    let db = dark_db(dir.path(), &p, 8, 9);
    let stacks: Vec<_> = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| simulate_flat_stack(l, &p, 6, 900 + i as u64).unwrap())
        .collect();
    let calibrated = photon_transfer_fit(&stacks).unwrap().gain;
    let key = DarkKey::new("oracle", 100);
    let dist = fit_distribution_set(&db.pooled_noise(&key).unwrap(), 1.0).unwrap();
    let mut profile = SensorProfile::new("oracle");
    profile.iso_mut(100).beta1 = Some(calibrated);
    profile.iso_mut(100).dist = Some(dist);
    let mut points = Vec::new();
    for (i, level) in [100.0, 250.0, 500.0, 1000.0].into_iter().enumerate() {
        let clean = SignalFrame::filled(256, 256, level, CfaPattern::Rggb).unwrap();
        let stack: Vec<_> = (0..6u64)
            .map(|k| {
                let cfg = SynthConfig::new(SynthMode::RealPap, 100, 100 * i as u64 + k)
                    .with_highbit(true);
                compose_real(&clean, &db, &profile, &cfg).unwrap().frame
            })
            .collect();
        points.push(stack_mean_variance(&stack).unwrap());
    }
    let fit = fit_mean_variance_line(&points).unwrap();
    let err = (fit.gain / oracle - 1.0).abs();
    outcome(
        err < 0.05,
        format!(
            "calibrated {calibrated:.4}, synthetic output gain {:.4} vs oracle {oracle} ({:.2}% < 5%)",
            fit.gain,
            100.0 * err
        ),
    )
}

// 10. Repeated CLI runs produce byte-identical files.
fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rawnoise");
    let work = tempfile::tempdir().unwrap();
    let params = work.path().join("sensor.txt");
    std::fs::write(
        &params,
        "width=64\nheight=48\nanalog_gain=1.5\nread1_sigma=1\nread2_sigma=2\nrow_sigma=0.5\nbit_depth=12\nblack_level=64\n",
    )
    .unwrap();
    let p = params.to_str().unwrap();

    // run the whole pipeline in `dir`, with `threads` workers
    let pipeline = |dir: &Path, threads: &str| -> Result<(), String> {
        let d = |s: &str| dir.join(s).to_str().unwrap().to_string();
        let mut steps: Vec<Vec<String>> = vec![vec![
            "simulate",
            "dark",
            "--params",
            p,
            "--n",
            "3",
            "--seed",
            "1",
            "--out",
            &d("dark"),
        ]
        .into_iter()
        .map(String::from)
        .collect()];
        let mut stacks = Vec::new();
        for (i, l) in ["40", "80", "160"].iter().enumerate() {
            let out = d(&format!("flat{i}"));
            steps.push(
                [
                    "simulate",
                    "flat",
                    "--level",
                    l,
                    "--params",
                    p,
                    "--n",
                    "3",
                    "--seed",
                    &i.to_string(),
                    "--out",
                    &out,
                ]
                .map(String::from)
                .to_vec(),
            );
            stacks.push(out);
        }
        steps.push(
            [
                "ingest",
                "--db",
                &d("db"),
                "--sensor",
                "cam",
                "--iso",
                "100",
                &d("dark"),
            ]
            .map(String::from)
            .to_vec(),
        );
        let mut pt: Vec<String> = [
            "calibrate",
            "photon-transfer",
            "--profile",
            &d("profile.txt"),
            "--sensor",
            "cam",
            "--iso",
            "100",
            "--stacks",
        ]
        .map(String::from)
        .to_vec();
        pt.extend(stacks.iter().cloned());
        steps.push(pt);
        steps.push(
            [
                "calibrate",
                "dist",
                "--db",
                &d("db"),
                "--sensor",
                "cam",
                "--iso",
                "100",
                "--profile",
                &d("profile.txt"),
            ]
            .map(String::from)
            .to_vec(),
        );
        let clean = format!("{}/frame_0000.rnf", d("flat2"));
        for mode in ["pg", "eld", "pixel", "patch", "pap"] {
            steps.push(
                [
                    "synthesize",
                    "--mode",
                    mode,
                    "--profile",
                    &d("profile.txt"),
                    "--db",
                    &d("db"),
                    "--iso",
                    "100",
                    "--seed",
                    "5",
                    &clean,
                    &d(&format!("noisy_{mode}.rnf")),
                ]
                .map(String::from)
                .to_vec(),
            );
        }
        steps.push(
            [
                "synthesize",
                "--mode",
                "pap",
                "--highbit",
                "--profile",
                &d("profile.txt"),
                "--db",
                &d("db"),
                "--iso",
                "100",
                "--seed",
                "5",
                &clean,
                &d("noisy_hb.rnf"),
            ]
            .map(String::from)
            .to_vec(),
        );
        steps.push(
            [
                "reconstruct",
                "--profile",
                &d("profile.txt"),
                "--iso",
                "100",
                "--seed",
                "3",
                &format!("{}/frame_0001.rnf", d("dark")),
                &d("rec.rnf"),
            ]
            .map(String::from)
            .to_vec(),
        );
        steps.push(
            [
                "report",
                "--in",
                &d("dark"),
                "--dist",
                &d("profile.txt"),
                "--iso",
                "100",
                "--out",
                &d("report"),
            ]
            .map(String::from)
            .to_vec(),
        );
        for s in steps {
            let out = Command::new(bin)
                .arg("--threads")
                .arg(threads)
                .args(&s)
                .output()
                .unwrap();
            if !out.status.success() {
                return Err(format!(
                    "`{}` failed: {}",
                    s.join(" "),
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
        Ok(())
    };
    let (a, b) = (work.path().join("a"), work.path().join("b"));
    if let Err(e) = pipeline(&a, "1").and_then(|_| pipeline(&b, "3")) {
        return outcome(false, e);
    }
    let mut files = Vec::new();
    collect(&a, &a, &mut files);
    let mut differ = Vec::new();
    for rel in &files {
        // manifest paths are relative, so files compare as is
        if std::fs::read(a.join(rel)).unwrap() != std::fs::read(b.join(rel)).unwrap() {
            differ.push(rel.display().to_string());
        }
    }
    let stdout = |args: &[&str]| Command::new(bin).args(args).output().unwrap().stdout;
    let same_stdout = stdout(&["--formats"]) == stdout(&["--formats"])
        && stdout(&["selftest", "--quick"]).len() == stdout(&["selftest", "--quick"]).len();
    outcome(
        differ.is_empty() && same_stdout && files.len() > 20,
        format!(
            "{} output files across simulate/ingest/calibrate/synthesize/reconstruct/report, threads 1 vs 3: {} differ{}",
            files.len(),
            differ.len(),
            if differ.is_empty() { String::new() } else { format!(" ({})", differ.join(", ")) }
        ),
    )
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for e in entries {
        if e.is_dir() {
            collect(root, &e, out);
        } else {
            out.push(e.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "calibration closure", 30, calibration_closure),
    (2, "PPCC Gaussian check", 5, ppcc_gaussian),
    (3, "shot-noise moments", 10, shot_moments),
    (4, "high-bit round trip", 60, highbit_round_trip),
    (
        5,
        "quantization ablation direction",
        60,
        quantization_ablation,
    ),
    (
        6,
        "spatial-correlation ablation direction",
        60,
        spatial_correlation,
    ),
    (7, "CFA alignment", 10, cfa_alignment),
    (8, "ELD reduction", 30, eld_reduction),
    (9, "full-pipeline closure", 300, pipeline_closure),
    (10, "CLI determinism", 300, cli_determinism),
];

fn main() {
    // failures are reported on the criterion's own line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for &(id, name, limit, run) in CRITERIA {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = t.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = elapsed <= Duration::from_secs(limit);
        let ok = pass && in_time;
        failed += usize::from(!ok);
        println!(
            "{} {id:>2} {name}: {detail} [{:.2}s / {limit}s{}]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", too slow" }
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all {} criteria passed", CRITERIA.len());
}
