//! Minimal raw-to-sRGB pipeline: gray-world white balance, bilinear
//! demosaicing and a pure power-law gamma.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{reflect, PlanarImage, Plane};

pub const RAW_BIT_DEPTH: u32 = 10;
pub const RAW_MAX_DN: f64 = 1023.0;
pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfaColor {
    Red = 0,
    Green = 1,
    Blue = 2,
}

/// Bayer phase, named by the colors of the top-left 2x2 block in row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cfa {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl Cfa {
    #[inline]
    pub fn color_at(self, x: usize, y: usize) -> CfaColor {
        use CfaColor::*;
        let block = match self {
            Cfa::Rggb => [Red, Green, Green, Blue],
            Cfa::Bggr => [Blue, Green, Green, Red],
            Cfa::Grbg => [Green, Red, Blue, Green],
            Cfa::Gbrg => [Green, Blue, Red, Green],
        };
        block[(y & 1) * 2 + (x & 1)]
    }
}

impl fmt::Display for Cfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cfa::Rggb => "RGGB",
            Cfa::Bggr => "BGGR",
            Cfa::Grbg => "GRBG",
            Cfa::Gbrg => "GBRG",
        })
    }
}

impl FromStr for Cfa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Cfa::Rggb),
            "BGGR" => Ok(Cfa::Bggr),
            "GRBG" => Ok(Cfa::Grbg),
            "GBRG" => Ok(Cfa::Gbrg),
            other => Err(Error::InvalidParameter(format!("unknown CFA pattern `{other}`"))),
        }
    }
}

/// Single-plane Bayer mosaic, normalized so that 1.0 is 1023 DN.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    plane: Plane,
    cfa: Cfa,
}

impl RawImage {
    pub fn new(plane: Plane, cfa: Cfa) -> Result<Self> {
        let (w, h) = plane.dims();
        if w % 2 != 0 || h % 2 != 0 {
            return Err(Error::Dimension(format!(
                "raw dimensions must be even, got {w}x{h}"
            )));
        }
        if let Some(v) = plane.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "raw sample {v} outside [0, 1]"
            )));
        }
        Ok(Self { plane, cfa })
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn cfa(&self) -> Cfa {
        self.cfa
    }

    pub fn bit_depth(&self) -> u32 {
        RAW_BIT_DEPTH
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }

    /// Mean of all samples in DN.
    pub fn mean_dn(&self) -> f64 {
        self.plane.mean() * RAW_MAX_DN
    }

    /// Same mosaic with new samples; caller guarantees `[0, 1]`.
    pub(crate) fn with_plane(&self, plane: Plane) -> Self {
        debug_assert_eq!(plane.dims(), self.plane.dims());
        Self {
            plane,
            cfa: self.cfa,
        }
    }

    /// Crops keeping the Bayer phase: offsets must be even.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if !x0.is_multiple_of(2) || !y0.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "raw crop offset ({x0}, {y0}) must be even"
            )));
        }
        let img = PlanarImage::gray(self.plane.clone()).crop(x0, y0, w, h)?;
        RawImage::new(img.into_planes().remove(0), self.cfa)
    }

    /// Per-color means over the CFA sites, indexed by [`CfaColor`].
    pub fn cfa_means(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        let mut count = [0usize; 3];
        let w = self.width();
        for (i, &v) in self.plane.data().iter().enumerate() {
            let c = self.cfa.color_at(i % w, i / w) as usize;
            sum[c] += v;
            count[c] += 1;
        }
        [0, 1, 2].map(|c| sum[c] / count[c] as f64)
    }
}

/// Gray-world gains `(mean_G/mean_R, 1, mean_G/mean_B)`.
pub fn gray_world_gains(raw: &RawImage) -> Result<[f64; 3]> {
    let means = raw.cfa_means();
    for (c, name) in ["red", "green", "blue"].iter().enumerate() {
        if means[c] <= 0.0 {
            return Err(Error::DegeneratePlane(format!(
                "{name} CFA plane has zero mean"
            )));
        }
    }
    Ok([means[1] / means[0], 1.0, means[1] / means[2]])
}

pub fn gray_world_wb(raw: &RawImage) -> Result<RawImage> {
    let gains = gray_world_gains(raw)?;
    let w = raw.width();
    let data = raw
        .plane()
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let g = gains[raw.cfa().color_at(i % w, i / w) as usize];
            (v * g).clamp(0.0, 1.0)
        })
        .collect();
    Ok(raw.with_plane(Plane::from_vec_unchecked(w, raw.height(), data)))
}

/// Bilinear interpolation without clamping; linear in the mosaic samples.
pub fn demosaic_unclamped(raw: &RawImage) -> Result<PlanarImage> {
    let (w, h) = raw.dims();
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Dimension(format!(
            "raw dimensions must be even, got {w}x{h}"
        )));
    }
    let cfa = raw.cfa();
    let p = raw.plane();
    const CROSS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const DIAG: [(isize, isize); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];

    let interpolate = |x: usize, y: usize, target: CfaColor| -> f64 {
        if cfa.color_at(x, y) == target {
            return p.get(x, y);
        }
        for stencil in [&CROSS, &DIAG] {
            let mut sum = 0.0;
            let mut n = 0;
            for &(dx, dy) in stencil {
                let sx = reflect(x as isize + dx, w);
                let sy = reflect(y as isize + dy, h);
                if cfa.color_at(sx, sy) == target {
                    sum += p.get(sx, sy);
                    n += 1;
                }
            }
            if n > 0 {
                return sum / n as f64;
            }
        }
        unreachable!("every Bayer site has a cross or diagonal neighbour of each color")
    };

    let planes = [CfaColor::Red, CfaColor::Green, CfaColor::Blue]
        .par_iter()
        .map(|&target| Plane::from_fn(w, h, |x, y| interpolate(x, y, target)))
        .collect();
    PlanarImage::from_planes(planes)
}

pub fn demosaic_bilinear(raw: &RawImage) -> Result<PlanarImage> {
    Ok(demosaic_unclamped(raw)?.clamp01())
}

/// `v -> v^(1/gamma)`; inputs are clamped into `[0, 1]` first.
pub fn gamma_encode(img: &PlanarImage, gamma: f64) -> PlanarImage {
    let inv = 1.0 / gamma;
    img.map(|v| v.clamp(0.0, 1.0).powf(inv))
}

/// Gray-world white balance, then demosaic, then gamma 2.2.
pub fn develop(raw: &RawImage) -> Result<PlanarImage> {
    let balanced = gray_world_wb(raw)?;
    let rgb = demosaic_bilinear(&balanced)?;
    Ok(gamma_encode(&rgb, DEFAULT_GAMMA))
}
