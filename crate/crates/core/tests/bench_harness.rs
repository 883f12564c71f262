use std::fs;
use std::path::{Path, PathBuf};

use nirfuse_core::bench::{
    load_manifest, parse_csv_rows, render_report, run_benchmark, BenchOptions, EvalReport, Method, ReportFormat,
};
use nirfuse_core::fusion::FusionConfig;
use nirfuse_core::imagecore::PlanarImage;
use nirfuse_core::io::{write_png, write_raw, BitDepth};
use nirfuse_core::isp::Cfa;
use nirfuse_core::synthetic::{mosaic, scene, SceneKind};
use nirfuse_core::Error;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write_pair(dir: &Path, id: &str, kind: SceneKind, size: usize, nir_size: usize) {
    let s = scene(kind, size, size, 7).unwrap();
    write_raw(&mosaic(&s.rgb, Cfa::Rggb, 1.0).unwrap(), &dir.join(format!("{id}.pgm"))).unwrap();
    let nir = if nir_size == size {
        s.nir
    } else {
        PlanarImage::filled(nir_size, nir_size, 1, 0.5)
    };
    write_png(&nir, &dir.join(format!("{id}.png")), BitDepth::Sixteen).unwrap();
}

fn manifest_line(id: &str) -> String {
    format!("{id}\t{id}.pgm\t{id}.png\n")
}

#[test]
fn bundled_manifest_loads_sorted() {
    let m = load_manifest(&fixtures().join("manifest.tsv")).unwrap();
    let ids: Vec<&str> = m.entries.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids, ["blocks", "disks", "ink", "rings", "shadow"]);
    assert_eq!(m.patch_size, 256);
}

#[test]
fn single_bundled_entry() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures().canonicalize().unwrap();
    let text = format!(
        "shadow\t{}\t{}\n",
        f.join("shadow_rgb.pgm").display(),
        f.join("shadow_nir.png").display()
    );
    fs::write(dir.path().join("m.tsv"), text).unwrap();
    assert_eq!(load_manifest(&dir.path().join("m.tsv")).unwrap().entries.len(), 1);
}

#[test]
fn validation_errors_name_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "good", SceneKind::Blocks, 32, 32);
    write_pair(dir.path(), "skewed", SceneKind::Blocks, 32, 16);
    fs::write(dir.path().join("m.tsv"), manifest_line("good") + &manifest_line("skewed")).unwrap();
    match load_manifest(&dir.path().join("m.tsv")) {
        Err(Error::ManifestEntry { id, .. }) => assert_eq!(id, "skewed"),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(dir.path().join("m.tsv"), manifest_line("absent")).unwrap();
    match load_manifest(&dir.path().join("m.tsv")) {
        Err(Error::ManifestEntry { id, .. }) => assert_eq!(id, "absent"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(load_manifest(&dir.path().join("nope.tsv")), Err(Error::Io { .. })));
}

fn small_run(dir: &Path) -> EvalReport {
    write_pair(dir, "a", SceneKind::Shadow, 64, 64);
    write_pair(dir, "b", SceneKind::Disks, 64, 64);
    fs::write(dir.join("m.tsv"), "seed=5\npatch_size=64\n".to_string() + &manifest_line("b") + &manifest_line("a"))
        .unwrap();
    let m = load_manifest(&dir.join("m.tsv")).unwrap();
    let opts = BenchOptions {
        sigmas: vec![2.0, 4.0],
        ..BenchOptions::default()
    };
    run_benchmark(&m, &opts, &FusionConfig::default()).unwrap()
}

#[test]
fn aggregates_are_row_means_and_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let report = small_run(dir.path());
    assert_eq!(report.rows.len(), 2 * 2 * 4);
    assert_eq!(report.aggregates.len(), 2 * 4);
    for agg in &report.aggregates {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.sigma == agg.sigma && r.method == agg.method)
            .collect();
        let psnr = rows.iter().map(|r| r.record.psnr).sum::<f64>() / rows.len() as f64;
        let ssim = rows.iter().map(|r| r.record.ssim).sum::<f64>() / rows.len() as f64;
        assert!((agg.mean.psnr - psnr).abs() < 1e-9);
        assert!((agg.mean.ssim - ssim).abs() < 1e-9);
    }
    let again = small_run(dir.path());
    assert_eq!(
        render_report(&report, ReportFormat::Csv).unwrap(),
        render_report(&again, ReportFormat::Csv).unwrap()
    );
}

#[test]
fn json_and_csv_round_trip_to_the_same_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = small_run(dir.path());
    let csv_rows = parse_csv_rows(&render_report(&report, ReportFormat::Csv).unwrap()).unwrap();
    let json: EvalReport = serde_json::from_str(&render_report(&report, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(csv_rows, json.rows);
    let md = render_report(&report, ReportFormat::Markdown).unwrap();
    for m in Method::ALL {
        assert!(md.contains(&format!("| {m} |")));
    }
}

#[test]
fn a_broken_entry_does_not_stop_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "ok", SceneKind::Blocks, 64, 64);
    write_pair(dir.path(), "bad", SceneKind::Blocks, 64, 64);
    fs::write(dir.path().join("m.tsv"), "patch_size=64\n".to_string() + &manifest_line("ok") + &manifest_line("bad"))
        .unwrap();
    let m = load_manifest(&dir.path().join("m.tsv")).unwrap();
    fs::write(dir.path().join("bad.png"), b"not a png").unwrap();
    let opts = BenchOptions {
        sigmas: vec![4.0],
        ..BenchOptions::default()
    };
    let report = run_benchmark(&m, &opts, &FusionConfig::default()).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].id, "bad");
    assert_eq!(report.rows.len(), 4);
}

#[test]
fn undersized_entries_fail_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "tiny", SceneKind::Blocks, 32, 32);
    fs::write(dir.path().join("m.tsv"), "patch_size=64\n".to_string() + &manifest_line("tiny")).unwrap();
    let m = load_manifest(&dir.path().join("m.tsv")).unwrap();
    let report = run_benchmark(&m, &BenchOptions::default(), &FusionConfig::default()).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert!(report.rows.is_empty());
}

/// Regression gate: method ordering on the bundled fixtures at sigma 4.
#[test]
fn bundled_fixture_ordering_at_sigma_4() {
    let m = load_manifest(&fixtures().join("manifest.tsv")).unwrap();
    let opts = BenchOptions {
        sigmas: vec![4.0],
        ..BenchOptions::default()
    };
    let report = run_benchmark(&m, &opts, &FusionConfig::default()).unwrap();
    let p = |method| report.aggregate_for(4.0, method).unwrap().mean.psnr;
    assert!(p(Method::FuseDip) > p(Method::RestoreOnly));
    assert!(p(Method::RestoreOnly) > p(Method::Noisy));
    let shadow = |method| {
        report
            .rows
            .iter()
            .find(|r| r.id == "shadow" && r.method == method)
            .unwrap()
            .record
            .psnr
    };
    assert!(shadow(Method::FuseDip) >= shadow(Method::FuseNoDip));
}
