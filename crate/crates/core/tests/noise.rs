use std::path::PathBuf;

use nirfuse_core::imagecore::Plane;
use nirfuse_core::isp::{Cfa, RawImage, RAW_MAX_DN};
use nirfuse_core::noisesim::{add_noise, noisy_dn, synth_lowlight_pair, NoiseParams};
use nirfuse_core::synthetic::{mosaic, scene, SceneKind};
use nirfuse_core::metrics::psnr;

fn params(sigma: f64, seed: u64) -> NoiseParams {
    NoiseParams::new(sigma, seed).unwrap()
}

#[test]
fn moments_at_100_dn() {
    // 316 x 316 is just under 10^5 samples; use 318 x 316 to clear it.
    let raw = RawImage::new(Plane::filled(318, 316, 100.0 / RAW_MAX_DN), Cfa::Rggb).unwrap();
    let x = raw.plane().get(0, 0) * RAW_MAX_DN;
    let (sigma, chi) = (4.0, 1.0);
    let v = noisy_dn(&raw, &params(sigma, 1)).unwrap();
    assert!(v.len() >= 100_000);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected_var = x * sigma / chi + sigma;
    let se = (expected_var / n).sqrt();
    assert!((mean - x).abs() < 3.0 * se, "mean {mean}");
    assert!((var / expected_var - 1.0).abs() < 0.05, "var {var} vs {expected_var}");
}

#[test]
fn chi_scales_shot_noise() {
    let raw = RawImage::new(Plane::filled(256, 256, 200.0 / RAW_MAX_DN), Cfa::Rggb).unwrap();
    let x = raw.plane().get(0, 0) * RAW_MAX_DN;
    let p = NoiseParams { chi: 4.0, ..params(2.0, 3) };
    let v = noisy_dn(&raw, &p).unwrap();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = x * 2.0 / 4.0 + 2.0;
    assert!((var / expected - 1.0).abs() < 0.05);
}

#[test]
fn repeated_seeds_are_bit_identical() {
    let s = scene(SceneKind::Disks, 64, 64, 2).unwrap();
    let raw = mosaic(&s.rgb, Cfa::Rggb, 1.0).unwrap();
    let a = add_noise(&raw, &params(4.0, 99)).unwrap();
    let b = add_noise(&raw, &params(4.0, 99)).unwrap();
    assert_eq!(a.plane(), b.plane());
    assert_ne!(a.plane(), add_noise(&raw, &params(4.0, 100)).unwrap().plane());
    let pa = synth_lowlight_pair(&raw, &s.nir, &params(4.0, 99)).unwrap();
    let pb = synth_lowlight_pair(&raw, &s.nir, &params(4.0, 99)).unwrap();
    assert_eq!(pa.noisy_rgb, pb.noisy_rgb);
}

#[test]
fn heavier_noise_lowers_psnr() {
    let s = scene(SceneKind::Blocks, 64, 64, 8).unwrap();
    let raw = mosaic(&s.rgb, Cfa::Rggb, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for sigma in [2.0, 4.0, 6.0, 8.0] {
        let pair = synth_lowlight_pair(&raw, &s.nir, &params(sigma, 5)).unwrap();
        let v = psnr(&pair.noisy_rgb, &pair.reference_rgb).unwrap();
        assert!(v < prev);
        prev = v;
    }
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_noisy_16x16.txt")
}

/// Run with `NIRFUSE_BLESS=1` to rewrite the stored patch.
#[test]
fn golden_noisy_patch() {
    let s = scene(SceneKind::Blocks, 16, 16, 4).unwrap();
    let raw = mosaic(&s.rgb, Cfa::Rggb, 1.0).unwrap();
    let noisy = add_noise(&raw, &params(4.0, 2024)).unwrap();
    let text: String = noisy
        .plane()
        .data()
        .iter()
        .map(|v| format!("{:016x}\n", v.to_bits()))
        .collect();
    if std::env::var_os("NIRFUSE_BLESS").is_some() {
        std::fs::write(golden_path(), &text).unwrap();
    }
    let stored = std::fs::read_to_string(golden_path()).expect("golden file present");
    assert_eq!(text, stored);
}
