//! Binary structure maps: Sobel gradient magnitude thresholded at its own
//! global mean, computed on every level of a Gaussian pyramid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_pyramid, separable_filter, PlanarImage, Plane, SCALES};

/// Window radius of the guided-filter restoration.
pub const RESTORE_RADIUS: usize = 4;

/// Restoration strength used by the pipeline for a given noise level in DN.
pub fn strength_for_sigma(sigma: f64) -> f64 {
    sigma / 255.0
}

/// `sqrt(Gx^2 + Gy^2)` with 3x3 Sobel kernels and mirrored borders.
pub fn sobel_magnitude(p: &Plane) -> Result<Plane> {
    let (w, h) = p.dims();
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "sobel needs at least 3x3, got {w}x{h}"
        )));
    }
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let y = y as isize;
            (0..w as isize).map(move |x| {
                let s = |dx: isize, dy: isize| p.get_reflect(x + dx, y + dy);
                let gx = (s(1, -1) + 2.0 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.0 * s(-1, 0) + s(-1, 1));
                let gy = (s(-1, 1) + 2.0 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.0 * s(0, -1) + s(1, -1));
                (gx * gx + gy * gy).sqrt()
            })
        })
        .collect();
    Ok(Plane::from_vec_unchecked(w, h, data))
}

/// Global mean, computed relative to the minimum so that a constant plane
/// yields exactly its value.
fn shifted_mean(p: &Plane) -> f64 {
    let min = p.data().iter().copied().fold(f64::INFINITY, f64::min);
    min + p.data().iter().map(|v| v - min).sum::<f64>() / p.data().len() as f64
}

/// 1 where the value is strictly above the plane mean, else 0.
pub fn binarize_by_mean(grad: &Plane) -> Plane {
    let mean = shifted_mean(grad);
    grad.map(|v| if v - mean > 0.0 { 1.0 } else { 0.0 })
}

/// Mean over a `(2r+1)^2` window with mirrored borders.
pub(crate) fn box_mean(p: &Plane, radius: usize) -> Plane {
    let n = 2 * radius + 1;
    separable_filter(p, &vec![1.0 / n as f64; n])
}

/// Self-guided filter on one plane.
pub fn guided_filter_plane(p: &Plane, radius: usize, eps: f64) -> Plane {
    let mean = box_mean(p, radius);
    let sq = box_mean(&p.map(|v| v * v), radius);
    let (w, h) = p.dims();
    let mut a = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for (&m, &s) in mean.data().iter().zip(sq.data()) {
        let var = (s - m * m).max(0.0);
        let ak = var / (var + eps);
        a.push(ak);
        b.push(m - ak * m);
    }
    let mean_a = box_mean(&Plane::from_vec_unchecked(w, h, a), radius);
    let mean_b = box_mean(&Plane::from_vec_unchecked(w, h, b), radius);
    let data = p
        .data()
        .iter()
        .zip(mean_a.data().iter().zip(mean_b.data()))
        .map(|(&v, (&ma, &mb))| ma * v + mb)
        .collect();
    Plane::from_vec_unchecked(w, h, data)
}

/// Edge-preserving smoothing standing in for a learned denoiser: a
/// self-guided filter of radius 4 with regularization `strength^2`.
pub fn restore(noisy: &PlanarImage, strength: f64) -> Result<PlanarImage> {
    if !(strength.is_finite() && strength >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "restore strength must be >= 0, got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(noisy.clone());
    }
    let eps = strength * strength;
    Ok(noisy.map_planes(|p| guided_filter_plane(p, RESTORE_RADIUS, eps)))
}

/// Binary structure maps indexed `[scale][channel]`, finest scale first.
#[derive(Clone, Debug, PartialEq)]
pub struct StructurePyramid {
    maps: Vec<Vec<Plane>>,
}

impl StructurePyramid {
    pub fn from_maps(maps: Vec<Vec<Plane>>) -> Result<Self> {
        let channels = maps.first().map(Vec::len).unwrap_or(0);
        if maps.is_empty() || channels == 0 {
            return Err(Error::Dimension("structure pyramid is empty".into()));
        }
        for (i, level) in maps.iter().enumerate() {
            if level.len() != channels {
                return Err(Error::ChannelCount {
                    expected: channels,
                    actual: level.len(),
                });
            }
            for (c, m) in level.iter().enumerate() {
                if m.dims() != level[0].dims() {
                    return Err(Error::ShapeMismatch(format!(
                        "scale {} channel {} has different dimensions",
                        i + 1,
                        c + 1
                    )));
                }
                if !m.is_binary() {
                    return Err(Error::NonBinary(format!(
                        "structure map at scale {} channel {}",
                        i + 1,
                        c + 1
                    )));
                }
            }
        }
        Ok(Self { maps })
    }

    pub fn scales(&self) -> usize {
        self.maps.len()
    }

    pub fn channels(&self) -> usize {
        self.maps[0].len()
    }

    pub fn map(&self, scale: usize, channel: usize) -> &Plane {
        &self.maps[scale][channel]
    }

    pub fn level(&self, scale: usize) -> &[Plane] {
        &self.maps[scale]
    }

    pub fn maps(&self) -> &[Vec<Plane>] {
        &self.maps
    }
}

/// Structure maps of an already-restored image.
pub fn structures_of(img: &PlanarImage) -> Result<StructurePyramid> {
    let pyr = gaussian_pyramid(img, SCALES)?;
    let maps = pyr
        .levels()
        .par_iter()
        .map(|level| {
            level
                .planes()
                .iter()
                .map(|p| Ok(binarize_by_mean(&sobel_magnitude(p)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StructurePyramid { maps })
}

/// Optionally restores `img`, then extracts per-scale, per-channel structures.
pub fn extract_structures(
    img: &PlanarImage,
    pre_restore: bool,
    strength: f64,
) -> Result<StructurePyramid> {
    if pre_restore {
        structures_of(&restore(img, strength)?)
    } else {
        structures_of(img)
    }
}

/// Intersection over union of two binary maps; two empty maps score 1.
pub fn iou(a: &Plane, b: &Plane) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch("iou operands differ in size".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Mean IoU over the channels of one scale.
pub fn scale_iou(a: &StructurePyramid, b: &StructurePyramid, scale: usize) -> Result<f64> {
    if a.channels() != b.channels() || a.scales() != b.scales() {
        return Err(Error::ShapeMismatch("structure pyramids differ".into()));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        total += iou(a.map(scale, c), b.map(scale, c))?;
    }
    Ok(total / a.channels() as f64)
}
