//! Structure-guided fusion of a restored RGB image with NIR detail.
//!
//! Only luminance detail is exchanged. For every band-pass level `i` of the
//! Laplacian pyramids of `Y = luma(restored RGB)` and of the NIR frame, a
//! guidance plane `g_i` in `[0, 1]` is obtained by blurring the combined
//! prior-weighted NIR structure maps, and the fused detail is
//!
//! ```text
//! L_i = (1 - g_i) * Lrgb_i + g_i * gain * k_i * Lnir_i
//! k_i = local_std(Lrgb_i) / max(local_std(Lnir_i), 1e-4)     (7x7 window)
//! ```
//!
//! The coarsest residual always comes from RGB. The change in luminance is
//! added to every RGB channel. It is computed as the collapse of the
//! per-level differences `L_i - Lrgb_i`, so wherever `g_i` is zero the output
//! is bit-identical to the restored image.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip::{combine_channels, compute_dip, weight_nir, DipPyramid, GuidanceCombine, WeightedStructures, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::imagecore::{binomial_blur, collapse_levels, laplacian_levels, to_luma, PlanarImage, Plane, SCALES};
use crate::structure::{box_mean, restore, strength_for_sigma, structures_of, StructurePyramid};

/// Radius of the local standard deviation window (7x7).
pub const GAIN_MATCH_RADIUS: usize = 3;
/// Floor applied to the NIR local standard deviation.
pub const GAIN_MATCH_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub lambda: f64,
    pub restore_strength: f64,
    pub inject_gain: f64,
    pub guidance_combine: GuidanceCombine,
    pub scales: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            restore_strength: 0.0,
            inject_gain: 1.0,
            guidance_combine: GuidanceCombine::Min,
            scales: SCALES,
        }
    }
}

impl FusionConfig {
    /// Default configuration with the restoration strength matched to `sigma` DN.
    pub fn for_sigma(sigma: f64) -> Self {
        Self {
            restore_strength: strength_for_sigma(sigma),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.inject_gain.is_finite() && self.inject_gain >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inject gain must be >= 0, got {}",
                self.inject_gain
            )));
        }
        if !(self.restore_strength.is_finite() && self.restore_strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "restore strength must be >= 0, got {}",
                self.restore_strength
            )));
        }
        if self.scales != SCALES {
            return Err(Error::InvalidParameter(format!(
                "only {SCALES} scales are supported, got {}",
                self.scales
            )));
        }
        Ok(())
    }
}

/// Every intermediate of one fusion run.
#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub fused: PlanarImage,
    pub restored: PlanarImage,
    pub rgb_structures: StructurePyramid,
    pub nir_structures: StructurePyramid,
    pub dip: DipPyramid,
    pub weighted_nir: WeightedStructures,
    /// Smoothed guidance per band-pass level.
    pub guidance: Vec<Plane>,
}

fn check_inputs(noisy_rgb: &PlanarImage, nir: &PlanarImage) -> Result<()> {
    if noisy_rgb.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            actual: noisy_rgb.channels(),
        });
    }
    if nir.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: nir.channels(),
        });
    }
    if noisy_rgb.dims() != nir.dims() {
        return Err(Error::Alignment(format!(
            "RGB {}x{} vs NIR {}x{}",
            noisy_rgb.width(),
            noisy_rgb.height(),
            nir.width(),
            nir.height()
        )));
    }
    Ok(())
}

fn local_std(p: &Plane) -> Plane {
    let mean = box_mean(p, GAIN_MATCH_RADIUS);
    let sq = box_mean(&p.map(|v| v * v), GAIN_MATCH_RADIUS);
    mean.zip_map(&sq, |m, s| (s - m * m).max(0.0).sqrt())
        .expect("same dimensions")
}

/// Fused-minus-RGB detail for one band-pass level.
fn detail_delta(rgb: &Plane, nir: &Plane, guidance: &Plane, gain: f64) -> Plane {
    let rgb_std = local_std(rgb);
    let nir_std = local_std(nir);
    let data = (0..rgb.data().len())
        .map(|j| {
            let g = guidance.data()[j];
            if g == 0.0 {
                return 0.0;
            }
            let k = rgb_std.data()[j] / nir_std.data()[j].max(GAIN_MATCH_FLOOR);
            g * (gain * k * nir.data()[j] - rgb.data()[j])
        })
        .collect();
    Plane::new(rgb.width(), rgb.height(), data).expect("finite detail")
}

fn run(noisy_rgb: &PlanarImage, nir: &PlanarImage, cfg: &FusionConfig, use_dip: bool) -> Result<FusionOutput> {
    cfg.validate()?;
    check_inputs(noisy_rgb, nir)?;

    let restored = restore(noisy_rgb, cfg.restore_strength)?;
    let (rgb_structures, nir_structures) =
        rayon::join(|| structures_of(&restored), || structures_of(nir));
    let (rgb_structures, nir_structures) = (rgb_structures?, nir_structures?);

    let dip = if use_dip {
        compute_dip(&rgb_structures, &nir_structures, cfg.lambda)?
    } else {
        DipPyramid::all_ones(&rgb_structures, cfg.lambda)
    };
    let weighted_nir = weight_nir(&nir_structures, &dip)?;

    let luma = to_luma(&restored)?;
    let rgb_levels = laplacian_levels(luma.plane(0), cfg.scales);
    let nir_levels = laplacian_levels(nir.plane(0), cfg.scales);

    let guidance = (0..cfg.scales - 1)
        .into_par_iter()
        .map(|i| {
            combine_channels(weighted_nir.level(i), cfg.guidance_combine).map(|g| binomial_blur(&g))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut deltas: Vec<Plane> = (0..cfg.scales - 1)
        .into_par_iter()
        .map(|i| detail_delta(&rgb_levels[i], &nir_levels[i], &guidance[i], cfg.inject_gain))
        .collect();
    let coarsest = &rgb_levels[cfg.scales - 1];
    deltas.push(Plane::zeros(coarsest.width(), coarsest.height()));
    let delta = collapse_levels(&deltas);

    let fused = restored.map_planes(|p| {
        p.zip_map(&delta, |v, d| (v + d).clamp(0.0, 1.0))
            .expect("same dimensions")
    });

    Ok(FusionOutput {
        fused,
        restored,
        rgb_structures,
        nir_structures,
        dip,
        weighted_nir,
        guidance,
    })
}

/// Full pipeline with the inconsistency prior.
pub fn fuse_detailed(noisy_rgb: &PlanarImage, nir: &PlanarImage, cfg: &FusionConfig) -> Result<FusionOutput> {
    run(noisy_rgb, nir, cfg, true)
}

/// Same pipeline with the prior forced to all ones.
pub fn fuse_without_dip_detailed(
    noisy_rgb: &PlanarImage,
    nir: &PlanarImage,
    cfg: &FusionConfig,
) -> Result<FusionOutput> {
    run(noisy_rgb, nir, cfg, false)
}

pub fn fuse(noisy_rgb: &PlanarImage, nir: &PlanarImage, cfg: &FusionConfig) -> Result<PlanarImage> {
    Ok(fuse_detailed(noisy_rgb, nir, cfg)?.fused)
}

pub fn fuse_without_dip(noisy_rgb: &PlanarImage, nir: &PlanarImage, cfg: &FusionConfig) -> Result<PlanarImage> {
    Ok(fuse_without_dip_detailed(noisy_rgb, nir, cfg)?.fused)
}

/// The RGB-only path: restoration followed by the final clamp.
pub fn restore_only(noisy_rgb: &PlanarImage, cfg: &FusionConfig) -> Result<PlanarImage> {
    cfg.validate()?;
    Ok(restore(noisy_rgb, cfg.restore_strength)?.clamp01())
}
