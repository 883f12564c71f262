//! Extremely-low-light raw synthesis: scale a well-exposed mosaic down to a
//! target mean, then add signal-dependent Poisson noise and Gaussian noise.
//!
//! All noise terms are in 10-bit DN. For a clean sample `x` the noisy sample is
//!
//! ```text
//! y = Poisson(x * chi / sigma) * sigma / chi + Normal(0, variance = sigma)
//! ```
//!
//! so `E[y] = x` and `Var[y] = x * sigma / chi + sigma`.
//!
//! Each pixel draws from its own ChaCha8 stream (stream id = pixel index) keyed
//! by the seed, so results do not depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{PlanarImage, Plane};
use crate::isp::{develop, RawImage, RAW_MAX_DN};

pub const DEFAULT_TARGET_MEAN_DN: f64 = 5.0;
pub const DEFAULT_CHI: f64 = 1.0;

/// Noise level sweep used by the benchmark.
pub const SIGMA_SWEEP: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Noise level in DN; Gaussian variance and inverse photon scale.
    pub sigma: f64,
    /// Mean brightness after darkening, in DN.
    pub target_mean: f64,
    /// Photon-scale constant of the Poisson term.
    pub chi: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        Self {
            sigma,
            target_mean: DEFAULT_TARGET_MEAN_DN,
            chi: DEFAULT_CHI,
            seed,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(self.target_mean > 0.0 && self.target_mean <= RAW_MAX_DN) {
            return Err(Error::InvalidParameter(format!(
                "target mean must be in (0, 1023], got {}",
                self.target_mean
            )));
        }
        if !(self.chi.is_finite() && self.chi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "chi must be > 0, got {}",
                self.chi
            )));
        }
        Ok(self)
    }
}

/// Scales the mosaic so its mean becomes `target_mean` DN.
pub fn darken(raw: &RawImage, target_mean: f64) -> Result<RawImage> {
    if !(target_mean > 0.0 && target_mean <= RAW_MAX_DN) {
        return Err(Error::InvalidParameter(format!(
            "target mean must be in (0, 1023], got {target_mean}"
        )));
    }
    let mean = raw.plane().mean();
    if mean <= 0.0 {
        return Err(Error::DegeneratePlane("raw image has zero mean".into()));
    }
    let scale = target_mean / (RAW_MAX_DN * mean);
    let plane = raw.plane().map(|v| v * scale);
    if plane.data().iter().any(|&v| v > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "scaling by {scale} to a mean of {target_mean} DN would clip"
        )));
    }
    Ok(raw.with_plane(plane))
}

/// Per-pixel generator: ChaCha8 keyed by `seed`, stream selected by `index`.
pub(crate) fn pixel_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one noisy DN value for a clean DN value `x`.
fn noisy_sample(x: f64, p: &NoiseParams, rng: &mut ChaCha8Rng) -> f64 {
    let rate = x * p.chi / p.sigma;
    let photons = if rate > 0.0 {
        Poisson::new(rate)
            .expect("rate is finite and positive")
            .sample(rng)
    } else {
        0.0
    };
    let read = Normal::new(0.0, p.sigma.sqrt())
        .expect("sigma validated")
        .sample(rng);
    photons * p.sigma / p.chi + read
}

/// Noisy DN values without the final clamp; used by statistics checks.
pub fn noisy_dn(raw: &RawImage, p: &NoiseParams) -> Result<Vec<f64>> {
    let p = p.validated()?;
    Ok(raw
        .plane()
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut rng = pixel_rng(p.seed, i as u64);
            noisy_sample(v * RAW_MAX_DN, &p, &mut rng)
        })
        .collect())
}

/// Adds Poisson-Gaussian noise; the result is renormalized and clamped to `[0, 1]`.
pub fn add_noise(raw: &RawImage, p: &NoiseParams) -> Result<RawImage> {
    let data = noisy_dn(raw, p)?
        .into_iter()
        .map(|dn| (dn / RAW_MAX_DN).clamp(0.0, 1.0))
        .collect();
    let (w, h) = raw.dims();
    Ok(raw.with_plane(Plane::from_vec_unchecked(w, h, data)))
}

/// Developed low-light input with its noise-free reference and the NIR frame.
#[derive(Clone, Debug)]
pub struct LowLightPair {
    pub noisy_rgb: PlanarImage,
    pub nir: PlanarImage,
    pub reference_rgb: PlanarImage,
}

pub fn synth_lowlight_pair(
    clean_rgb_raw: &RawImage,
    clean_nir: &PlanarImage,
    p: &NoiseParams,
) -> Result<LowLightPair> {
    let p = p.validated()?;
    if clean_nir.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: clean_nir.channels(),
        });
    }
    if clean_nir.dims() != clean_rgb_raw.dims() {
        return Err(Error::Alignment(format!(
            "raw {}x{} vs NIR {}x{}",
            clean_rgb_raw.width(),
            clean_rgb_raw.height(),
            clean_nir.width(),
            clean_nir.height()
        )));
    }
    let dark = darken(clean_rgb_raw, p.target_mean)?;
    let reference_rgb = develop(&dark)?;
    let noisy_rgb = develop(&add_noise(&dark, &p)?)?;
    Ok(LowLightPair {
        noisy_rgb,
        nir: clean_nir.clone(),
        reference_rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isp::Cfa;

    fn constant_raw(w: usize, h: usize, dn: f64) -> RawImage {
        RawImage::new(Plane::filled(w, h, dn / RAW_MAX_DN), Cfa::Rggb).unwrap()
    }

    #[test]
    fn darken_scale_factor() {
        let raw = constant_raw(8, 8, 512.0);
        let dark = darken(&raw, 5.0).unwrap();
        let scale = dark.plane().get(0, 0) / raw.plane().get(0, 0);
        assert!((scale - 5.0 / 512.0).abs() < 1e-12);
        assert!((dark.mean_dn() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn darken_fixed_point_and_zero() {
        let raw = constant_raw(4, 4, 5.0);
        let dark = darken(&raw, 5.0).unwrap();
        for (a, b) in dark.plane().data().iter().zip(raw.plane().data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = constant_raw(4, 4, 0.0);
        assert!(matches!(darken(&zero, 5.0), Err(Error::DegeneratePlane(_))));
    }

    #[test]
    fn darken_mean_is_exact_on_textured_input() {
        let plane = Plane::from_fn(16, 16, |x, y| ((x * 37 + y * 11) % 101) as f64 / 100.0);
        let raw = RawImage::new(plane, Cfa::Bggr).unwrap();
        let dark = darken(&raw, 5.0).unwrap();
        assert!((dark.plane().mean() - 5.0 / RAW_MAX_DN).abs() < 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(NoiseParams::new(0.0, 1).is_err());
        assert!(NoiseParams::new(-1.0, 1).is_err());
        let mut p = NoiseParams::new(2.0, 1).unwrap();
        p.chi = 0.0;
        assert!(p.validated().is_err());
        p.chi = 1.0;
        p.target_mean = 2000.0;
        assert!(p.validated().is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let raw = constant_raw(32, 32, 100.0);
        let p = NoiseParams::new(4.0, 99).unwrap();
        let a = add_noise(&raw, &p).unwrap();
        let b = add_noise(&raw, &p).unwrap();
        assert_eq!(a, b);
        let q = NoiseParams { seed: 100, ..p };
        assert_ne!(add_noise(&raw, &q).unwrap(), a);
    }

    #[test]
    fn tiny_sigma_is_unbiased() {
        let raw = constant_raw(100, 100, 100.0);
        let p = NoiseParams::new(1e-6, 5).unwrap();
        let y = noisy_dn(&raw, &p).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 100.0).abs() <= 3.0 * se.max(1e-12), "{mean} se {se}");
    }

    #[test]
    fn pair_alignment_and_zero_noise_limit() {
        let raw = RawImage::new(
            Plane::from_fn(32, 32, |x, y| 0.2 + 0.3 * ((x / 8 + y / 8) % 2) as f64),
            Cfa::Rggb,
        )
        .unwrap();
        let nir = PlanarImage::filled(32, 32, 1, 0.5);
        let p = NoiseParams::new(1e-6, 3).unwrap();
        let pair = synth_lowlight_pair(&raw, &nir, &p).unwrap();
        assert_eq!(pair.nir, nir);
        for c in 0..3 {
            for (a, b) in pair
                .noisy_rgb
                .plane(c)
                .data()
                .iter()
                .zip(pair.reference_rgb.plane(c).data())
            {
                assert!((a - b).abs() < 1e-2);
            }
        }
        let bad = PlanarImage::filled(30, 32, 1, 0.5);
        assert!(matches!(
            synth_lowlight_pair(&raw, &bad, &p),
            Err(Error::Alignment(_))
        ));
    }
}
