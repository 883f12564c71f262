//! Benchmark harness: manifest loading, patch cropping, noise sweep and
//! report emission.
//!
//! Every (entry, patch, sigma) job draws its noise from a seed derived from
//! the manifest seed, the entry id, the patch index and sigma, so results do
//! not depend on entry order or on how jobs are scheduled.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_detailed, fuse_without_dip, restore_only, FusionConfig};
use crate::imagecore::{to_luma, PlanarImage};
use crate::io::{read_image, read_raw};
use crate::isp::RawImage;
use crate::metrics::{
    charbonnier, composite_score, format_float, parse_float, psnr, ssim, structure_dice, CompositeTerms,
    EvalRecord, CHARBONNIER_EPS,
};
use crate::noisesim::{synth_lowlight_pair, NoiseParams, SIGMA_SWEEP};
use crate::structure::{restore, strength_for_sigma, structures_of};

pub const DEFAULT_PATCH_SIZE: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub rgb_raw_path: PathBuf,
    pub nir_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            patch_size: DEFAULT_PATCH_SIZE,
            seed: 0,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::ManifestSyntax {
        line,
        message: message.into(),
    }
}

fn entry_err(id: &str, message: impl Into<String>) -> Error {
    Error::ManifestEntry {
        id: id.to_string(),
        message: message.into(),
    }
}

fn png_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((w as usize, h as usize))
}

/// Parses manifest text. Relative paths are resolved against `base_dir`.
///
/// Lines are `id<TAB>rgb_raw_path<TAB>nir_path`; blank lines and `#`
/// comments are skipped; `seed=<u64>` and `patch_size=<n>` set options.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::default();
    for (n, raw_line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if !line.contains('\t') {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(line_no, "expected `id<TAB>rgb<TAB>nir` or `key=value`"))?;
            let value = value.trim();
            match key.trim() {
                "seed" => {
                    manifest.seed = value
                        .parse()
                        .map_err(|_| syntax(line_no, format!("bad seed `{value}`")))?
                }
                "patch_size" => {
                    manifest.patch_size = value
                        .parse()
                        .ok()
                        .filter(|&p: &usize| p > 0 && p % 2 == 0)
                        .ok_or_else(|| syntax(line_no, format!("bad patch_size `{value}`")))?
                }
                other => return Err(syntax(line_no, format!("unknown option `{other}`"))),
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(syntax(line_no, "expected exactly three tab-separated fields"));
        }
        let id = fields[0].trim();
        if id.contains(|c: char| c == ',' || c == '"' || c.is_whitespace()) {
            return Err(syntax(line_no, format!("id `{id}` may not contain commas, quotes or spaces")));
        }
        manifest.entries.push(ManifestEntry {
            id: id.to_string(),
            rgb_raw_path: base_dir.join(fields[1].trim()),
            nir_path: base_dir.join(fields[2].trim()),
        });
    }
    manifest.entries.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(pair) = manifest.entries.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(entry_err(&pair[0].id, "duplicate id"));
    }
    Ok(manifest)
}

/// Checks that every referenced file exists, that headers parse, and that
/// RGB and NIR dimensions agree.
pub fn validate_manifest(manifest: &DatasetManifest) -> Result<()> {
    for e in &manifest.entries {
        let raw = read_raw(&e.rgb_raw_path).map_err(|err| entry_err(&e.id, err.to_string()))?;
        let nir = png_dims(&e.nir_path).map_err(|err| entry_err(&e.id, err.to_string()))?;
        if raw.dims() != nir {
            return Err(entry_err(
                &e.id,
                format!(
                    "RGB raw is {}x{} but NIR is {}x{}",
                    raw.width(),
                    raw.height(),
                    nir.0,
                    nir.1
                ),
            ));
        }
    }
    Ok(())
}

/// Reads, parses and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = parse_manifest(&text, base)?;
    validate_manifest(&manifest)?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

/// Non-overlapping grid windows followed by `extra` seeded random windows.
/// All offsets are even so Bayer phase is preserved.
pub fn patch_windows(
    width: usize,
    height: usize,
    patch_size: usize,
    seed: u64,
    extra: usize,
) -> Result<Vec<CropWindow>> {
    if patch_size == 0 || !patch_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "patch size must be positive and even, got {patch_size}"
        )));
    }
    if width < patch_size || height < patch_size {
        return Err(Error::Dimension(format!(
            "{width}x{height} is smaller than a {patch_size}x{patch_size} patch"
        )));
    }
    let mut out = Vec::new();
    for gy in 0..height / patch_size {
        for gx in 0..width / patch_size {
            out.push(CropWindow {
                x: gx * patch_size,
                y: gy * patch_size,
                size: patch_size,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (max_x, max_y) = ((width - patch_size) / 2, (height - patch_size) / 2);
    for _ in 0..extra {
        out.push(CropWindow {
            x: 2 * rng.random_range(0..=max_x),
            y: 2 * rng.random_range(0..=max_y),
            size: patch_size,
        });
    }
    Ok(out)
}

/// Aligned raw/NIR crops sharing one window.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub window: CropWindow,
    pub raw: RawImage,
    pub nir: PlanarImage,
}

pub fn crop_patches(
    raw: &RawImage,
    nir: &PlanarImage,
    patch_size: usize,
    seed: u64,
    extra: usize,
) -> Result<Vec<PatchPair>> {
    if raw.dims() != nir.dims() {
        return Err(Error::Alignment(format!(
            "raw {}x{} vs NIR {}x{}",
            raw.width(),
            raw.height(),
            nir.width(),
            nir.height()
        )));
    }
    patch_windows(raw.width(), raw.height(), patch_size, seed, extra)?
        .into_iter()
        .map(|w| {
            Ok(PatchPair {
                window: w,
                raw: raw.crop(w.x, w.y, w.size, w.size)?,
                nir: nir.crop(w.x, w.y, w.size, w.size)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Noisy,
    RestoreOnly,
    FuseNoDip,
    FuseDip,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Noisy, Method::RestoreOnly, Method::FuseNoDip, Method::FuseDip];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Noisy => "noisy",
            Method::RestoreOnly => "restore_only",
            Method::FuseNoDip => "fuse_no_dip",
            Method::FuseDip => "fuse_dip",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub sigma: f64,
    pub method: Method,
    #[serde(flatten)]
    pub record: EvalRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sigma: f64,
    pub method: Method,
    pub count: usize,
    #[serde(flatten)]
    pub mean: EvalRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<EntryFailure>,
}

impl EvalReport {
    /// Sorts rows and failures and recomputes the per-(sigma, method) means.
    pub fn from_rows(mut rows: Vec<EvalRow>, mut failures: Vec<EntryFailure>) -> Self {
        rows.sort_by(|a, b| {
            a.id.cmp(&b.id)
                .then(a.sigma.total_cmp(&b.sigma))
                .then(a.method.cmp(&b.method))
        });
        failures.sort_by(|a, b| a.id.cmp(&b.id));
        let aggregates = aggregate(&rows);
        Self {
            rows,
            aggregates,
            failures,
        }
    }

    pub fn aggregate_for(&self, sigma: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.sigma == sigma && a.method == method)
    }
}

fn aggregate(rows: &[EvalRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(u64, Method), Vec<&EvalRecord>> = BTreeMap::new();
    for r in rows {
        // Non-negative sigmas order correctly by their bit patterns.
        groups.entry((r.sigma.to_bits(), r.method)).or_default().push(&r.record);
    }
    groups
        .into_iter()
        .map(|((bits, method), recs)| {
            let n = recs.len() as f64;
            let mean = |f: fn(&EvalRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / n;
            Aggregate {
                sigma: f64::from_bits(bits),
                method,
                count: recs.len(),
                mean: EvalRecord {
                    psnr: mean(|r| r.psnr),
                    ssim: mean(|r| r.ssim),
                    dice_rgb: mean(|r| r.dice_rgb),
                    dice_nir: mean(|r| r.dice_nir),
                    charbonnier: mean(|r| r.charbonnier),
                    composite: mean(|r| r.composite),
                },
            }
        })
        .collect()
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise seed for one (entry, patch, sigma) job.
pub fn job_seed(manifest_seed: u64, id: &str, patch: usize, sigma: f64) -> u64 {
    [fnv1a(id.as_bytes()), patch as u64, sigma.to_bits()]
        .into_iter()
        .fold(splitmix64(manifest_seed), |acc, v| splitmix64(acc ^ v))
}

/// Options of a benchmark run besides the fusion configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub sigmas: Vec<f64>,
    /// Random patches per entry on top of the grid.
    pub extra_patches: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            sigmas: SIGMA_SWEEP.to_vec(),
            extra_patches: 0,
        }
    }
}

/// Metrics of one method output against the noise-free reference.
pub fn evaluate(
    output: &PlanarImage,
    restored: &PlanarImage,
    reference: &PlanarImage,
    nir: &PlanarImage,
    strength: f64,
) -> Result<EvalRecord> {
    let out_structures = structures_of(output)?;
    let ref_structures = structures_of(reference)?;
    let dice_rgb = structure_dice(&out_structures, &ref_structures)?.value;
    let dice_nir = structure_dice(&structures_of(&to_luma(output)?)?, &structures_of(nir)?)?.value;
    let rec_fused = charbonnier(output, reference, CHARBONNIER_EPS)?;
    let composite = composite_score(&CompositeTerms {
        rec_fused: Some(rec_fused),
        rec_coarse: Some(charbonnier(restored, reference, CHARBONNIER_EPS)?),
        rec_nir: Some(charbonnier(&restore(nir, strength)?.clamp01(), nir, CHARBONNIER_EPS)?),
        structure_rgb: Some(dice_rgb),
        structure_nir: Some(dice_nir),
    })?;
    Ok(EvalRecord {
        psnr: psnr(output, reference)?,
        ssim: ssim(output, reference)?,
        dice_rgb,
        dice_nir,
        charbonnier: rec_fused,
        composite,
    })
}

/// Runs the four methods on one synthesized pair.
pub fn run_methods(
    raw: &RawImage,
    nir: &PlanarImage,
    sigma: f64,
    seed: u64,
    cfg: &FusionConfig,
) -> Result<Vec<(Method, EvalRecord)>> {
    let params = NoiseParams::new(sigma, seed)?;
    let pair = synth_lowlight_pair(raw, nir, &params)?;
    let cfg = FusionConfig {
        restore_strength: strength_for_sigma(sigma),
        ..*cfg
    };
    let with_dip = fuse_detailed(&pair.noisy_rgb, &pair.nir, &cfg)?;
    let restored = with_dip.restored.clamp01();
    let outputs = [
        (Method::Noisy, pair.noisy_rgb.clone()),
        (Method::RestoreOnly, restore_only(&pair.noisy_rgb, &cfg)?),
        (Method::FuseNoDip, fuse_without_dip(&pair.noisy_rgb, &pair.nir, &cfg)?),
        (Method::FuseDip, with_dip.fused),
    ];
    outputs
        .par_iter()
        .map(|(m, out)| {
            Ok((
                *m,
                evaluate(out, &restored, &pair.reference_rgb, &pair.nir, cfg.restore_strength)?,
            ))
        })
        .collect()
}

fn patch_label(id: &str, patch: usize, total: usize) -> String {
    if total == 1 {
        id.to_string()
    } else {
        format!("{id}#p{patch}")
    }
}

fn load_entry(entry: &ManifestEntry) -> Result<(RawImage, PlanarImage)> {
    let raw = read_raw(&entry.rgb_raw_path)?;
    let nir = read_image(&entry.nir_path)?;
    let nir = if nir.channels() == 1 { nir } else { to_luma(&nir)? };
    Ok((raw, nir))
}

/// Evaluates every entry at every sigma. Entry failures are collected in
/// the report instead of aborting the run.
pub fn run_benchmark(manifest: &DatasetManifest, opts: &BenchOptions, cfg: &FusionConfig) -> Result<EvalReport> {
    cfg.validate()?;
    for &s in &opts.sigmas {
        NoiseParams::new(s, 0)?;
    }
    let per_entry: Vec<std::result::Result<Vec<EvalRow>, EntryFailure>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let fail = |e: Error| EntryFailure {
                id: entry.id.clone(),
                message: e.to_string(),
            };
            let (raw, nir) = load_entry(entry).map_err(fail)?;
            let crop_seed = job_seed(manifest.seed, &entry.id, usize::MAX, 0.0);
            let patches =
                crop_patches(&raw, &nir, manifest.patch_size, crop_seed, opts.extra_patches).map_err(fail)?;
            let jobs: Vec<(usize, f64)> = (0..patches.len())
                .flat_map(|p| opts.sigmas.iter().map(move |&s| (p, s)))
                .collect();
            let rows = jobs
                .par_iter()
                .map(|&(p, sigma)| {
                    let seed = job_seed(manifest.seed, &entry.id, p, sigma);
                    let label = patch_label(&entry.id, p, patches.len());
                    run_methods(&patches[p].raw, &patches[p].nir, sigma, seed, cfg).map(|recs| {
                        recs.into_iter()
                            .map(|(method, record)| EvalRow {
                                id: label.clone(),
                                sigma,
                                method,
                                record,
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(fail)?;
            Ok(rows.into_iter().flatten().collect())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in per_entry {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(f) => failures.push(f),
        }
    }
    Ok(EvalReport::from_rows(rows, failures))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format `{other}` (csv, json, markdown)"
            ))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "id",
    "sigma",
    "method",
    "psnr",
    "ssim",
    "dice_rgb",
    "dice_nir",
    "charbonnier",
    "composite",
];

const DECIMALS: usize = 4;

fn fmt4(v: f64) -> String {
    format_float(v, DECIMALS)
}

/// Value as it appears in a 4-decimal report.
fn round4(v: f64) -> f64 {
    parse_float(&fmt4(v)).expect("formatted float parses")
}

fn rounded(r: &EvalRecord) -> EvalRecord {
    EvalRecord {
        psnr: round4(r.psnr),
        ssim: round4(r.ssim),
        dice_rgb: round4(r.dice_rgb),
        dice_nir: round4(r.dice_nir),
        charbonnier: round4(r.charbonnier),
        composite: round4(r.composite),
    }
}

fn render_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.id.clone(),
            r.sigma.to_string(),
            r.method.to_string(),
            fmt4(r.record.psnr),
            fmt4(r.record.ssim),
            fmt4(r.record.dice_rgb),
            fmt4(r.record.dice_nir),
            fmt4(r.record.charbonnier),
            fmt4(r.record.composite),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn render_json(report: &EvalReport) -> Result<String> {
    let rounded_report = EvalReport {
        rows: report
            .rows
            .iter()
            .map(|r| EvalRow {
                record: rounded(&r.record),
                ..r.clone()
            })
            .collect(),
        aggregates: report
            .aggregates
            .iter()
            .map(|a| Aggregate {
                mean: rounded(&a.mean),
                ..a.clone()
            })
            .collect(),
        failures: report.failures.clone(),
    };
    let mut s = serde_json::to_string_pretty(&rounded_report)?;
    s.push('\n');
    Ok(s)
}

fn render_markdown(report: &EvalReport) -> String {
    let mut sigmas: Vec<f64> = report.aggregates.iter().map(|a| a.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut out = String::from("| method |");
    for s in &sigmas {
        out.push_str(&format!(" sigma={s} PSNR | sigma={s} SSIM |"));
    }
    out.push_str("\n|---|");
    for _ in &sigmas {
        out.push_str("---:|---:|");
    }
    out.push('\n');
    for m in Method::ALL {
        if !report.aggregates.iter().any(|a| a.method == m) {
            continue;
        }
        out.push_str(&format!("| {m} |"));
        for &s in &sigmas {
            match report.aggregate_for(s, m) {
                Some(a) => out.push_str(&format!(" {} | {} |", fmt4(a.mean.psnr), fmt4(a.mean.ssim))),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    if !report.failures.is_empty() {
        out.push_str("\nFailed entries:\n\n");
        for f in &report.failures {
            out.push_str(&format!("- `{}`: {}\n", f.id, f.message));
        }
    }
    out
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => render_json(report),
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, render_report(report, format)?.as_bytes())
}

/// Parses rows back from CSV report text.
pub fn parse_csv_rows(text: &str) -> Result<Vec<EvalRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::InvalidParameter(format!("unexpected CSV header {headers:?}")));
    }
    let num = |s: &str| parse_float(s).ok_or_else(|| Error::InvalidParameter(format!("bad number `{s}`")));
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(EvalRow {
                id: rec[0].to_string(),
                sigma: num(&rec[1])?,
                method: rec[2].parse()?,
                record: EvalRecord {
                    psnr: num(&rec[3])?,
                    ssim: num(&rec[4])?,
                    dice_rgb: num(&rec[5])?,
                    dice_nir: num(&rec[6])?,
                    charbonnier: num(&rec[7])?,
                    composite: num(&rec[8])?,
                },
            })
        })
        .collect()
}
