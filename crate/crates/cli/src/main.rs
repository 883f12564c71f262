//! `nirfuse` command-line front end.
//!
//! Exit codes: 0 on success, 1 on processing errors, 2 on usage errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nirfuse_core::bench::{emit_report, load_manifest, run_benchmark, BenchOptions, ReportFormat};
use nirfuse_core::dip::{compute_dip, weight_nir, GuidanceCombine, DEFAULT_LAMBDA};
use nirfuse_core::fusion::{fuse, fuse_without_dip, FusionConfig};
use nirfuse_core::imagecore::{to_luma, PlanarImage};
use nirfuse_core::io::{read_image, read_raw, write_map_png, write_png, BitDepth};
use nirfuse_core::noisesim::{synth_lowlight_pair, NoiseParams, DEFAULT_CHI, DEFAULT_TARGET_MEAN_DN, SIGMA_SWEEP};
use nirfuse_core::structure::{restore, strength_for_sigma, structures_of, StructurePyramid};

use config::{ConfigFile, SigmaList};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Processing(nirfuse_core::Error),
}

impl From<nirfuse_core::Error> for CliError {
    fn from(e: nirfuse_core::Error) -> Self {
        CliError::Processing(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "nirfuse", version, about = "RGB-NIR fusion with structure inconsistency priors")]
struct Cli {
    /// key=value file supplying defaults for flags not given on the command line
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Print progress to standard error (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads (defaults to the number of cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuse a low-light RGB image with an aligned NIR image
    Fuse(FuseArgs),
    /// Synthesize a noisy low-light image and its reference from a raw capture
    Synth(SynthArgs),
    /// Dump per-scale structure, DIP and weighted-NIR maps as 8-bit images
    Structures(StructuresArgs),
    /// Run the benchmark over a dataset manifest and write a report
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Noisy sRGB input (PNG, 3 channels)
    #[arg(long, value_name = "PATH")]
    rgb: PathBuf,
    /// Aligned NIR input (PNG; color inputs are converted to luma)
    #[arg(long, value_name = "PATH")]
    nir: PathBuf,
    /// Output PNG (16-bit)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Noise level in DN; sets the pre-restoration strength to sigma/255
    #[arg(long)]
    sigma: Option<f64>,
    /// Prior value where neither modality has structure, in (0, 1)
    #[arg(long)]
    lambda: Option<f64>,
    /// Inject NIR detail without the inconsistency prior
    #[arg(long)]
    no_dip: bool,
    /// Scale applied to injected NIR detail
    #[arg(long)]
    inject_gain: Option<f64>,
    /// How per-channel guidance maps are merged: min or mean
    #[arg(long)]
    combine: Option<GuidanceCombine>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Raw Bayer capture (PGM with a .meta sidecar)
    #[arg(long, value_name = "PATH")]
    raw: PathBuf,
    /// Noise level in DN
    #[arg(long)]
    sigma: Option<f64>,
    /// Noise seed
    #[arg(long)]
    seed: Option<u64>,
    /// Developed noisy output (PNG)
    #[arg(long, value_name = "PATH")]
    out_noisy: PathBuf,
    /// Developed noise-free reference output (PNG)
    #[arg(long, value_name = "PATH")]
    out_ref: PathBuf,
    /// Photon-scale constant of the shot-noise term
    #[arg(long)]
    chi: Option<f64>,
    /// Mean raw brightness after darkening, in DN
    #[arg(long)]
    target_mean: Option<f64>,
}

#[derive(Args, Debug)]
struct StructuresArgs {
    /// RGB or grayscale input (PNG)
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Aligned NIR image; enables DIP and weighted-NIR dumps
    #[arg(long, value_name = "PATH")]
    nir: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Guided-filter strength applied to the input before extraction
    #[arg(long)]
    restore_strength: Option<f64>,
    /// Prior value where neither modality has structure, in (0, 1)
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset manifest (id<TAB>raw<TAB>nir per line)
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Report output path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Report format: csv, json or markdown
    #[arg(long)]
    format: Option<ReportFormat>,
    /// Comma-separated noise levels
    #[arg(long)]
    sigmas: Option<SigmaList>,
    /// Overrides the manifest seed
    #[arg(long)]
    seed: Option<u64>,
    /// Prior value where neither modality has structure, in (0, 1)
    #[arg(long)]
    lambda: Option<f64>,
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn usage_if_invalid(cfg: FusionConfig) -> Result<FusionConfig, CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn read_nir(path: &Path) -> Result<PlanarImage, CliError> {
    let img = read_image(path)?;
    Ok(if img.channels() == 1 { img } else { to_luma(&img)? })
}

fn cmd_fuse(a: &FuseArgs, conf: &ConfigFile, verbose: u8) -> Result<(), CliError> {
    let sigma: Option<f64> = match a.sigma {
        Some(s) => Some(s),
        None => conf.get("sigma")?,
    };
    if let Some(s) = sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(CliError::Usage(format!("sigma must be >= 0, got {s}")));
        }
    }
    let cfg = usage_if_invalid(FusionConfig {
        lambda: conf.pick(a.lambda, "lambda", DEFAULT_LAMBDA)?,
        restore_strength: match sigma {
            Some(s) => strength_for_sigma(s),
            None => conf.get("restore_strength")?.unwrap_or(0.0),
        },
        inject_gain: conf.pick(a.inject_gain, "inject_gain", 1.0)?,
        guidance_combine: conf.pick(a.combine, "combine", GuidanceCombine::Min)?,
        ..FusionConfig::default()
    })?;
    require_file(&a.rgb, "RGB input")?;
    require_file(&a.nir, "NIR input")?;
    let rgb = read_image(&a.rgb)?;
    let nir = read_nir(&a.nir)?;
    if verbose > 0 {
        eprintln!("fusing {}x{} pair with {cfg:?}", rgb.width(), rgb.height());
    }
    let out = if a.no_dip {
        fuse_without_dip(&rgb, &nir, &cfg)?
    } else {
        fuse(&rgb, &nir, &cfg)?
    };
    write_png(&out, &a.out, BitDepth::Sixteen)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, conf: &ConfigFile, verbose: u8) -> Result<(), CliError> {
    let sigma = match a.sigma {
        Some(s) => s,
        None => conf
            .get("sigma")?
            .ok_or_else(|| CliError::Usage("--sigma is required".into()))?,
    };
    let params = NoiseParams {
        sigma,
        target_mean: conf.pick(a.target_mean, "target_mean", DEFAULT_TARGET_MEAN_DN)?,
        chi: conf.pick(a.chi, "chi", DEFAULT_CHI)?,
        seed: conf.pick(a.seed, "seed", 0)?,
    }
    .validated()
    .map_err(|e| CliError::Usage(e.to_string()))?;
    require_file(&a.raw, "raw input")?;
    let raw = read_raw(&a.raw)?;
    if verbose > 0 {
        eprintln!("synthesizing from {} ({}x{}) with {params:?}", a.raw.display(), raw.width(), raw.height());
    }
    // The pair builder wants an aligned NIR frame; a flat one is enough here.
    let nir = PlanarImage::filled(raw.width(), raw.height(), 1, 0.5);
    let pair = synth_lowlight_pair(&raw, &nir, &params)?;
    write_png(&pair.noisy_rgb, &a.out_noisy, BitDepth::Sixteen)?;
    write_png(&pair.reference_rgb, &a.out_ref, BitDepth::Sixteen)?;
    Ok(())
}

fn dump_maps(dir: &Path, prefix: &str, maps: &[Vec<nirfuse_core::Plane>]) -> Result<usize, CliError> {
    let mut n = 0;
    for (i, level) in maps.iter().enumerate() {
        for (c, m) in level.iter().enumerate() {
            write_map_png(m, &dir.join(format!("{prefix}_s{}_c{}.png", i + 1, c + 1)))?;
            n += 1;
        }
    }
    Ok(n)
}

fn cmd_structures(a: &StructuresArgs, conf: &ConfigFile, verbose: u8) -> Result<(), CliError> {
    let strength: f64 = conf.pick(a.restore_strength, "restore_strength", 0.0)?;
    if !(strength.is_finite() && strength >= 0.0) {
        return Err(CliError::Usage(format!("restore strength must be >= 0, got {strength}")));
    }
    let lambda = conf.pick(a.lambda, "lambda", DEFAULT_LAMBDA)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CliError::Usage(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    require_file(&a.input, "input")?;
    if let Some(nir) = &a.nir {
        require_file(nir, "NIR input")?;
    }
    let input = read_image(&a.input)?;
    let rgb_structures: StructurePyramid = structures_of(&restore(&input, strength)?)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| {
        CliError::Processing(nirfuse_core::Error::Io {
            path: a.out_dir.clone(),
            source: e,
        })
    })?;
    let mut written = dump_maps(&a.out_dir, "struct", rgb_structures.maps())?;
    if let Some(nir_path) = &a.nir {
        let nir = read_nir(nir_path)?;
        if nir.dims() != input.dims() {
            return Err(nirfuse_core::Error::Alignment(format!(
                "input is {}x{}, NIR is {}x{}",
                input.width(),
                input.height(),
                nir.width(),
                nir.height()
            ))
            .into());
        }
        let nir_structures = structures_of(&nir)?;
        let dip = compute_dip(&rgb_structures, &nir_structures, lambda)?;
        let weighted = weight_nir(&nir_structures, &dip)?;
        written += dump_maps(&a.out_dir, "nir_struct", nir_structures.maps())?;
        written += dump_maps(&a.out_dir, "dip", dip.maps())?;
        let weighted_maps: Vec<Vec<_>> = (0..weighted.scales()).map(|i| weighted.level(i).to_vec()).collect();
        written += dump_maps(&a.out_dir, "weighted", &weighted_maps)?;
    }
    if verbose > 0 {
        eprintln!("wrote {written} maps to {}", a.out_dir.display());
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, conf: &ConfigFile, verbose: u8) -> Result<(), CliError> {
    let format = conf.pick(a.format, "format", ReportFormat::Csv)?;
    let sigmas = conf.pick(a.sigmas.clone(), "sigmas", SigmaList(SIGMA_SWEEP.to_vec()))?;
    let cfg = usage_if_invalid(FusionConfig {
        lambda: conf.pick(a.lambda, "lambda", DEFAULT_LAMBDA)?,
        inject_gain: conf.get("inject_gain")?.unwrap_or(1.0),
        guidance_combine: conf.get("combine")?.unwrap_or_default(),
        ..FusionConfig::default()
    })?;
    let seed: Option<u64> = match a.seed {
        Some(s) => Some(s),
        None => conf.get("seed")?,
    };
    require_file(&a.manifest, "manifest")?;
    let mut manifest = load_manifest(&a.manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(s) = seed {
        manifest.seed = s;
    }
    if verbose > 0 {
        eprintln!(
            "evaluating {} entries at sigma {:?} (seed {})",
            manifest.entries.len(),
            sigmas.0,
            manifest.seed
        );
    }
    let opts = BenchOptions {
        sigmas: sigmas.0,
        ..BenchOptions::default()
    };
    let report = run_benchmark(&manifest, &opts, &cfg)?;
    emit_report(&report, format, &a.out)?;
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("entry `{}` failed: {}", f.id, f.message);
        }
        return Err(CliError::Processing(nirfuse_core::Error::InvalidParameter(format!(
            "{} of {} entries failed",
            report.failures.len(),
            manifest.entries.len()
        ))));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let conf = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads: Option<usize> = match cli.threads {
        Some(t) => Some(t),
        None => conf.get("threads")?,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Fuse(a) => cmd_fuse(a, &conf, cli.verbose),
        Command::Synth(a) => cmd_synth(a, &conf, cli.verbose),
        Command::Structures(a) => cmd_structures(a, &conf, cli.verbose),
        Command::Eval(a) => cmd_eval(a, &conf, cli.verbose),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Processing(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
