//! Command-line front end. [`run`] parses arguments, dispatches, and maps
//! failures to exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::calibrate::{
    estimate_read_variance, estimate_row_sigma, fit_distribution_set, photon_transfer_fit,
    ppcc_tukey_lambda, tukey_lambda_line_fit, PpccResult,
};
use crate::darkdb::{DarkFrameDb, DarkKey};
use crate::error::Error;
use crate::highbit::{reconstruct_bayer, store_f32};
use crate::profile::SensorProfile;
use crate::raw::{subtract_black, BayerFrame, CfaPattern, SampleFormat};
use crate::report::{row_autocorrelation, NoiseReport};
use crate::rnf;
use crate::synth::{synthesize, SynthConfig, SynthMode};
use crate::vsensor::{simulate_dark_stack, simulate_flat_stack, VirtualSensorParams};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (RNF1 format version 1)");

/// PPCC and the TL line fit sort their input; larger samples are thinned.
const DEFAULT_PPCC_SAMPLES: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "rawnoise", version = VERSION, about = "Raw-image noise calibration and synthesis")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print every resolved setting and where it came from.
    #[arg(long, global = true)]
    explain: bool,
    /// Print the supported file formats and exit.
    #[arg(long)]
    formats: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate frames from the virtual sensor.
    Simulate {
        kind: SimKind,
        /// Photons per pixel for flat fields.
        #[arg(long)]
        level: Option<f64>,
        /// Virtual sensor parameters (key=value file).
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Apply the params file's `iso.<n>` gain.
        #[arg(long)]
        iso: Option<u32>,
    },
    /// Add dark frames to a database.
    Ingest {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        sensor: String,
        #[arg(long)]
        iso: u32,
        #[arg(long, default_value_t = 0.0)]
        exposure: f64,
        /// Capture time in seconds since the Unix epoch.
        #[arg(long, default_value_t = 0)]
        captured_at: u64,
        /// RNF1 files, or directories of them.
        #[arg(required = true)]
        frames: Vec<PathBuf>,
    },
    /// Estimate sensor parameters.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Add synthetic noise to a clean frame.
    Synthesize {
        #[arg(long)]
        mode: ModeArg,
        #[arg(long)]
        highbit: bool,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        /// Dark-frame sensor id (default: the profile's).
        #[arg(long)]
        sensor: Option<String>,
        #[arg(long)]
        iso: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        patch_size: Option<usize>,
        clean: PathBuf,
        noisy: PathBuf,
    },
    /// High-bit reconstruction of a quantized dark frame.
    Reconstruct {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        iso: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Noise statistics of black-subtracted frames.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Profile whose fitted distribution is used for the KS statistic.
        #[arg(long)]
        dist: Option<PathBuf>,
        /// ISO section of the `--dist` profile.
        #[arg(long)]
        iso: Option<u32>,
        #[arg(long, default_value_t = 8)]
        max_lag: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle checks.
    Selftest {
        /// Only the fast structural checks.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Subcommand)]
enum CalibrateCommand {
    /// Total gain from flat-field stacks, one directory per light level.
    PhotonTransfer {
        #[arg(long, required = true, num_args = 1..)]
        stacks: Vec<PathBuf>,
        /// Merge the gain into this profile.
        #[arg(long, requires = "iso")]
        profile: Option<PathBuf>,
        #[arg(long)]
        sensor: Option<String>,
        #[arg(long)]
        iso: Option<u32>,
    },
    /// Read noise, row noise, TL shape and the high-bit distribution from
    /// the dark frames of one sensor and ISO.
    Dist {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        sensor: String,
        #[arg(long)]
        iso: u32,
        /// Profile to create or merge into.
        #[arg(long)]
        profile: PathBuf,
        /// PPCC search grid as `start:end:step`.
        #[arg(long)]
        lambda_grid: Option<String>,
        #[arg(long, default_value_t = DEFAULT_PPCC_SAMPLES)]
        ppcc_samples: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimKind {
    Dark,
    Flat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Pg,
    Eld,
    Pixel,
    Patch,
    Pap,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pg => SynthMode::Pg,
            ModeArg::Eld => SynthMode::Eld,
            ModeArg::Pixel => SynthMode::RealPixelwise,
            ModeArg::Patch => SynthMode::RealPatch,
            ModeArg::Pap => SynthMode::RealPap,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Explain(bool);

impl Explain {
    fn note(&self, key: &str, value: impl std::fmt::Display, source: &str) {
        if self.0 {
            eprintln!("{key} = {value}  ({source})");
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let ex = Explain(cli.explain);
    if let Some(n) = cli.threads {
        ex.note("threads", n, "flag");
    } else {
        ex.note("threads", rayon::current_num_threads(), "default");
    }
    if cli.formats {
        print_formats();
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(usage("no command given; see `rawnoise --help`"));
    };
    match command {
        Command::Simulate {
            kind,
            level,
            params,
            n,
            seed,
            out,
            iso,
        } => simulate(&ex, kind, level, &params, n, seed, &out, iso),
        Command::Ingest {
            db,
            sensor,
            iso,
            exposure,
            captured_at,
            frames,
        } => ingest(&db, &sensor, iso, exposure, captured_at, &frames),
        Command::Calibrate(CalibrateCommand::PhotonTransfer {
            stacks,
            profile,
            sensor,
            iso,
        }) => calibrate_photon(&ex, &stacks, profile.as_deref(), sensor, iso),
        Command::Calibrate(CalibrateCommand::Dist {
            db,
            sensor,
            iso,
            profile,
            lambda_grid,
            ppcc_samples,
        }) => calibrate_dist(
            &ex,
            &db,
            &sensor,
            iso,
            &profile,
            lambda_grid.as_deref(),
            ppcc_samples,
        ),
        Command::Synthesize {
            mode,
            highbit,
            profile,
            db,
            sensor,
            iso,
            seed,
            patch_size,
            clean,
            noisy,
        } => {
            let mut cfg = SynthConfig::new(mode.into(), iso, seed).with_highbit(highbit);
            cfg.sensor_id = sensor;
            if let Some(p) = patch_size {
                cfg.patch_size = p;
            }
            synthesize_cmd(&ex, cfg, &profile, db.as_deref(), &clean, &noisy)
        }
        Command::Reconstruct {
            profile,
            iso,
            seed,
            input,
            output,
        } => reconstruct_cmd(&ex, &profile, iso, seed, &input, &output),
        Command::Report {
            inputs,
            dist,
            iso,
            max_lag,
            out,
        } => report_cmd(&ex, &inputs, dist.as_deref(), iso, max_lag, &out),
        Command::Selftest { quick } => {
            let mut stdout = std::io::stdout();
            if crate::selftest::run(quick, &mut stdout) {
                Ok(())
            } else {
                Err(Failure::Data(Error::Degenerate("selftest failed".into())))
            }
        }
    }
}

fn print_formats() {
    println!("{} (format version {})", rnf::MAGIC, rnf::FORMAT_VERSION);
    println!("  header keys: width height bit_depth quant_step black_level white_level cfa dtype");
    let dtypes: Vec<&str> = [SampleFormat::U16, SampleFormat::F32, SampleFormat::F64]
        .iter()
        .map(|f| f.name())
        .collect();
    println!("  dtype: {}", dtypes.join(" "));
    let cfas: Vec<&str> = CfaPattern::ALL.iter().map(|c| c.name()).collect();
    println!("  cfa: {}", cfas.join(" "));
    println!("  payload: little-endian, row-major");
    println!("profiles, sensor parameters: key=value text with [section] headers");
}

/// Expands directories to their `.rnf` files, sorted by name.
fn frame_paths(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "rnf"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(
                    Error::InvalidFrame(format!("no .rnf files in {}", p.display())).into(),
                );
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn read_frames(inputs: &[PathBuf]) -> CliResult<Vec<BayerFrame>> {
    frame_paths(inputs)?
        .iter()
        .map(|p| rnf::read(p).map_err(Failure::from))
        .collect()
}

fn write_frame(path: &Path, frame: &BayerFrame) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(rnf::write(path, frame)?)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ex: &Explain,
    kind: SimKind,
    level: Option<f64>,
    params_path: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    iso: Option<u32>,
) -> CliResult {
    let mut params = VirtualSensorParams::read(params_path)?;
    if let Some(iso) = iso {
        params = params.for_iso(iso)?;
        ex.note("iso", iso, "flag");
    }
    ex.note("total_gain", params.total_gain(), "params file");
    ex.note("n", n, "flag or default");
    ex.note("seed", seed, "flag");
    let frames = match kind {
        SimKind::Dark => {
            if level.is_some() {
                return Err(usage("--level applies to flat fields only"));
            }
            simulate_dark_stack(&params, n, seed)?
        }
        SimKind::Flat => {
            let level = level.ok_or_else(|| usage("flat fields need --level"))?;
            if n < 2 {
                return Err(usage("flat-field stacks need --n of at least 2"));
            }
            ex.note("level", level, "flag");
            simulate_flat_stack(level, &params, n, seed)?
        }
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (k, f) in frames.iter().enumerate() {
        write_frame(&out.join(format!("frame_{k:04}.rnf")), f)?;
    }
    println!("wrote {} frame(s) to {}", frames.len(), out.display());
    Ok(())
}

fn ingest(
    db: &Path,
    sensor: &str,
    iso: u32,
    exposure: f64,
    captured_at: u64,
    inputs: &[PathBuf],
) -> CliResult {
    let paths = frame_paths(inputs)?;
    let mut db = DarkFrameDb::open_or_create(db)?;
    for p in &paths {
        let id = db.ingest(rnf::read(p)?, sensor, iso, exposure, captured_at)?;
        println!("{id}\t{}", p.display());
    }
    Ok(())
}

fn calibrate_photon(
    ex: &Explain,
    stacks: &[PathBuf],
    profile: Option<&Path>,
    sensor: Option<String>,
    iso: Option<u32>,
) -> CliResult {
    let frames: Vec<Vec<BayerFrame>> = stacks
        .iter()
        .map(|d| read_frames(std::slice::from_ref(d)))
        .collect::<CliResult<_>>()?;
    let fit = photon_transfer_fit(&frames)?;
    println!("gain={}", fit.gain);
    println!("intercept={}", fit.intercept);
    println!("r_squared={}", fit.r_squared);
    for (m, v) in &fit.points {
        println!("point={m},{v}");
    }
    if let Some(path) = profile {
        let iso = iso.expect("clap enforces --iso with --profile");
        let mut upd = SensorProfile::new(sensor.clone().unwrap_or_default());
        upd.iso_mut(iso).beta1 = Some(fit.gain);
        let merged = upd.merge_into_file(path)?;
        ex.note(
            "sensor_id",
            &merged.sensor_id,
            if sensor.is_some() { "flag" } else { "profile" },
        );
        ex.note(&format!("iso.{iso}.beta1"), fit.gain, "photon transfer fit");
    }
    Ok(())
}

fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[a, b, s]) if s > 0.0 && b >= a => Ok(PpccResult::grid(a, b, s)),
        _ => Err(usage(format!(
            "--lambda-grid `{spec}` must be start:end:step with start <= end, step > 0"
        ))),
    }
}

/// Every k-th value so that at most `max` remain.
fn thin(values: &[f64], max: usize) -> Vec<f64> {
    let step = values.len().div_ceil(max.max(1)).max(1);
    values.iter().step_by(step).copied().collect()
}

fn calibrate_dist(
    ex: &Explain,
    db: &Path,
    sensor: &str,
    iso: u32,
    profile: &Path,
    grid: Option<&str>,
    ppcc_samples: usize,
) -> CliResult {
    let grid = match grid {
        Some(g) => {
            ex.note("lambda_grid", g, "flag");
            parse_grid(g)?
        }
        None => {
            ex.note("lambda_grid", "-1:1:0.01", "default");
            PpccResult::default_grid()
        }
    };
    ex.note("ppcc_samples", ppcc_samples, "flag or default");
    let db = DarkFrameDb::open(db)?;
    let key = DarkKey::new(sensor, iso);
    let frames: Vec<BayerFrame> = db.frames(&key)?.into_iter().cloned().collect();
    let quantizer = *frames[0].quantizer();
    let noise = db.pooled_noise(&key)?;
    let beta2 = estimate_read_variance(&frames)?;
    let row_sigma = estimate_row_sigma(&frames)?;
    let thinned = thin(&noise, ppcc_samples);
    let ppcc = ppcc_tukey_lambda(&thinned, &grid)?;
    let (_, tl_scale) = tukey_lambda_line_fit(&thinned, ppcc.best_lambda)?;
    let dist = fit_distribution_set(&noise, quantizer.quant_step)?;

    let mut upd = SensorProfile::new(sensor);
    let p = upd.iso_mut(iso);
    p.beta2 = Some(beta2);
    p.row_sigma = Some(row_sigma);
    p.tl_lambda = Some(ppcc.best_lambda);
    p.tl_scale = Some(tl_scale);
    p.dist = Some(dist);
    p.quantizer = Some(quantizer);
    upd.merge_into_file(profile)?;
    println!("frames={}", frames.len());
    println!("beta2={beta2}");
    println!("row_sigma={row_sigma}");
    println!("tl_lambda={}", ppcc.best_lambda);
    println!("tl_scale={tl_scale}");
    println!("distribution={dist}");
    println!("gof={}", dist.gof_statistic);
    Ok(())
}

fn synthesize_cmd(
    ex: &Explain,
    cfg: SynthConfig,
    profile_path: &Path,
    db: Option<&Path>,
    clean_path: &Path,
    noisy_path: &Path,
) -> CliResult {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if cfg.mode.is_real() && db.is_none() {
        return Err(usage(format!("--db is required for --mode {}", cfg.mode)));
    }
    let profile = SensorProfile::read(profile_path)?;
    let clean = rnf::read(clean_path)?;
    ex.note("mode", cfg.mode, "flag");
    ex.note("highbit", cfg.highbit, "flag");
    ex.note("iso", cfg.iso, "flag");
    ex.note("seed", cfg.seed, "flag");
    ex.note(
        "sensor_id",
        cfg.sensor_id.as_deref().unwrap_or(&profile.sensor_id),
        if cfg.sensor_id.is_some() {
            "flag"
        } else {
            "profile"
        },
    );
    if cfg.mode.is_real() {
        ex.note("patch_size", cfg.patch_size, "flag or default");
    }
    if let Ok(p) = profile.iso(cfg.iso) {
        if let Some(b) = p.beta1 {
            ex.note("beta1", b, "profile");
        }
        if let Some(b) = p.beta2 {
            ex.note("beta2", b, "profile");
        }
    }
    let db = db.map(DarkFrameDb::open).transpose()?;
    let out = synthesize(&clean, db.as_ref(), &profile, &cfg)?;
    if out.fallback_pixels > 0 {
        eprintln!(
            "warning: {} pixel(s) fell in bins with negligible fitted mass and were sampled uniformly",
            out.fallback_pixels
        );
    }
    write_frame(noisy_path, &out.frame)
}

fn reconstruct_cmd(
    ex: &Explain,
    profile: &Path,
    iso: u32,
    seed: u64,
    input: &Path,
    output: &Path,
) -> CliResult {
    let profile = SensorProfile::read(profile)?;
    let dist = profile.require(iso, "family", |p| p.dist)?;
    ex.note("distribution", dist, "profile");
    ex.note("seed", seed, "flag or default");
    let frame = rnf::read(input)?;
    if !frame.is_quantized() {
        return Err(Error::InvalidFrame(format!("{} is not quantized", input.display())).into());
    }
    let rec = reconstruct_bayer(&frame, &dist, seed)?;
    if rec.fallback_pixels > 0 {
        eprintln!(
            "warning: {} pixel(s) fell in bins with negligible fitted mass and were sampled uniformly",
            rec.fallback_pixels
        );
    }
    write_frame(output, &store_f32(&rec.frame, &frame)?)
}

fn report_cmd(
    ex: &Explain,
    inputs: &[PathBuf],
    dist: Option<&Path>,
    iso: Option<u32>,
    max_lag: usize,
    out: &Path,
) -> CliResult {
    let frames = read_frames(inputs)?;
    let signals: Vec<_> = frames.iter().map(subtract_black).collect();
    let values: Vec<f64> = signals
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .collect();
    let mut report = NoiseReport::from_values(&values)?;
    if let Some(path) = dist {
        let iso = iso.ok_or_else(|| usage("--dist needs --iso to pick the profile section"))?;
        let d = SensorProfile::read(path)?.require(iso, "family", |p| p.dist)?;
        ex.note("ks_reference", d, "profile");
        report = report.with_ks(&values, &d)?;
    }
    ex.note("max_lag", max_lag, "flag or default");
    // average the per-frame curves
    let mut sums = vec![0.0; max_lag];
    let mut used = 0usize;
    for s in &signals {
        if s.width() <= max_lag {
            continue;
        }
        let ac = row_autocorrelation(s, max_lag)?;
        for (lag, v) in &ac.lags {
            sums[lag - 1] += v;
        }
        used += 1;
    }
    if used > 0 {
        report.row_autocorr = sums
            .iter()
            .enumerate()
            .map(|(i, s)| (i + 1, s / used as f64))
            .collect();
    }
    if values.len() >= 100 {
        if let Ok(p) = ppcc_tukey_lambda(
            &thin(&values, DEFAULT_PPCC_SAMPLES),
            &PpccResult::default_grid(),
        ) {
            report.ppcc = Some(p);
        }
    }
    report.write_dir(out)?;
    print!("{}", report.scalars_text());
    Ok(())
}
