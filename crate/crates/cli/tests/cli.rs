use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nirfuse_core::bench::EvalReport;
use nirfuse_core::imagecore::{PlanarImage, Plane};
use nirfuse_core::io::{read_image, write_png, write_raw, BitDepth};
use nirfuse_core::isp::{Cfa, RawImage};
use nirfuse_core::metrics::psnr;
use nirfuse_core::synthetic::nir_only_edge_fixture;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nirfuse"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, sigma: &str, tag: &str) -> (PathBuf, PathBuf) {
    let noisy = dir.join(format!("noisy_{tag}.png"));
    let reference = dir.join(format!("ref_{tag}.png"));
    let raw = fixtures().join("blocks_rgb.pgm");
    let out = run(&[
        "synth", "--raw", s(&raw), "--sigma", sigma, "--seed", "3", "--out-noisy", s(&noisy), "--out-ref",
        s(&reference),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (noisy, reference)
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [&[][..], &["fuse"], &["synth"], &["structures"], &["eval"]] {
        let mut args: Vec<&str> = sub.to_vec();
        args.push("--help");
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    let help = String::from_utf8_lossy(&run(&["fuse", "--help"]).stdout).to_string();
    for flag in ["--rgb", "--nir", "--out", "--sigma", "--lambda", "--no-dip", "--inject-gain", "--combine"] {
        assert!(help.contains(flag), "fuse help lacks {flag}");
    }
}

#[test]
fn synth_is_deterministic_and_degrades_with_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let (n1, r1) = synth(dir.path(), "4", "a");
    let (n2, _) = synth(dir.path(), "4", "b");
    assert_eq!(std::fs::read(&n1).unwrap(), std::fs::read(&n2).unwrap());
    let (n8, r8) = synth(dir.path(), "8", "c");
    let (n_2, r_2) = synth(dir.path(), "2", "d");
    let p = |n: &Path, r: &Path| psnr(&read_image(n).unwrap(), &read_image(r).unwrap()).unwrap();
    assert!(p(&n8, &r8) < p(&n_2, &r_2));
    assert!(p(&n1, &r1) < p(&n_2, &r_2));
}

#[test]
fn synth_zero_raw_is_a_processing_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("black.pgm");
    write_raw(&RawImage::new(Plane::zeros(8, 8), Cfa::Rggb).unwrap(), &raw).unwrap();
    let out = run(&[
        "synth", "--raw", s(&raw), "--sigma", "4", "--seed", "1", "--out-noisy", s(&dir.path().join("n.png")),
        "--out-ref", s(&dir.path().join("r.png")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn fuse_writes_matching_dimensions_and_lambda_default() {
    let dir = tempfile::tempdir().unwrap();
    let (noisy, _) = synth(dir.path(), "4", "f");
    let nir = fixtures().join("blocks_nir.png");
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    let c = dir.path().join("c.png");
    assert!(run(&["fuse", "--rgb", s(&noisy), "--nir", s(&nir), "--out", s(&a), "--sigma", "4"]).status.success());
    assert!(run(&["fuse", "--rgb", s(&noisy), "--nir", s(&nir), "--out", s(&b), "--sigma", "4", "--lambda", "0.5"])
        .status
        .success());
    assert!(run(&["fuse", "--rgb", s(&noisy), "--nir", s(&nir), "--out", s(&c), "--no-dip"]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let fused = read_image(&a).unwrap();
    assert_eq!(fused.dims(), read_image(&noisy).unwrap().dims());
    assert_eq!(fused.channels(), 3);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fuse", "--rgb", "x.png", "--out", s(&dir.path().join("o.png"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&["fuse", "--rgb", "x.png", "--nir", "y.png", "--out", "o.png", "--lambda", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new("o.png").exists());
    let out = run(&["eval", "--manifest", s(&dir.path().join("none.tsv")), "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "colour=blue\n").unwrap();
    let out = run(&["--config", s(&conf), "eval", "--manifest", "m.tsv", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (noisy, _) = synth(dir.path(), "4", "g");
    let nir = fixtures().join("blocks_nir.png");
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "# tuned\nlambda=0.3\nsigma=4\n").unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    assert!(run(&["--config", s(&conf), "fuse", "--rgb", s(&noisy), "--nir", s(&nir), "--out", s(&a)]).status.success());
    assert!(run(&["fuse", "--rgb", s(&noisy), "--nir", s(&nir), "--out", s(&b), "--lambda", "0.3", "--sigma", "4"])
        .status
        .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn count(dir: &Path, prefix: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(prefix))
        .count()
}

#[test]
fn structures_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.png");
    write_png(&PlanarImage::filled(32, 32, 3, 0.4), &flat, BitDepth::Sixteen).unwrap();
    let out_dir = dir.path().join("flat_maps");
    assert!(run(&["structures", "--input", s(&flat), "--out-dir", s(&out_dir)]).status.success());
    assert_eq!(count(&out_dir, "struct_"), 9);
    for e in std::fs::read_dir(&out_dir).unwrap() {
        let img = read_image(&e.unwrap().path()).unwrap();
        assert!(img.plane(0).data().iter().all(|&v| v == 0.0));
    }

    let (rgb, nir, sx) = nir_only_edge_fixture(64, 64).unwrap();
    let (rgb_path, nir_path) = (dir.path().join("rgb.png"), dir.path().join("nir.png"));
    write_png(&rgb, &rgb_path, BitDepth::Sixteen).unwrap();
    write_png(&nir, &nir_path, BitDepth::Sixteen).unwrap();
    let pair_dir = dir.path().join("pair");
    let out = run(&["structures", "--input", s(&rgb_path), "--nir", s(&nir_path), "--out-dir", s(&pair_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(count(&pair_dir, "dip_"), 3 * 3);
    assert_eq!(count(&pair_dir, "weighted_"), 3 * 3);
    assert_eq!(count(&pair_dir, "nir_struct_"), 3);
    for c in 1..=3 {
        let w = read_image(&pair_dir.join(format!("weighted_s1_c{c}.png"))).unwrap();
        let n = read_image(&pair_dir.join("nir_struct_s1_c1.png")).unwrap();
        for y in 0..64 {
            assert_eq!(n.get(sx, y, 0), 1.0);
            assert_eq!(w.get(sx, y, 0), 0.0);
            assert_eq!(w.get(sx - 1, y, 0), 0.0);
        }
    }
}

#[test]
fn eval_single_sigma_and_failure_exit() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures().canonicalize().unwrap();
    let manifest = dir.path().join("m.tsv");
    std::fs::write(
        &manifest,
        format!("rings\t{}\t{}\n", f.join("rings_rgb.pgm").display(), f.join("rings_nir.png").display()),
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["eval", "--manifest", s(&manifest), "--out", s(&report), "--format", "json", "--sigmas", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json.aggregates.len(), 4);
    assert!(json.aggregates.iter().all(|a| a.sigma == 4.0));

    // An image smaller than one patch passes validation but fails in the run.
    let small = dir.path().join("small.pgm");
    write_raw(&RawImage::new(Plane::filled(64, 64, 0.3), Cfa::Rggb).unwrap(), &small).unwrap();
    let small_nir = dir.path().join("small.png");
    write_png(&PlanarImage::filled(64, 64, 1, 0.5), &small_nir, BitDepth::Eight).unwrap();
    std::fs::write(&manifest, format!("small\t{}\t{}\n", s(&small), s(&small_nir))).unwrap();
    let csv = dir.path().join("r.csv");
    let out = run(&["eval", "--manifest", s(&manifest), "--out", s(&csv), "--sigmas", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("small"));
    assert!(csv.exists());
}
