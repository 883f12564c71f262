//! Planar floating-point images, binomial blur kernels and Burt-Adelson
//! Gaussian/Laplacian pyramids.
//!
//! Storage is one row-major `Vec<f64>` per channel. Values are nominally in
//! `[0, 1]` but pyramid detail levels are signed, so only finiteness is
//! enforced at construction.
//!
//! Every filter in this crate uses mirror reflection without edge
//! duplication (`-1 -> 1`, `n -> n - 2`), which keeps constant images exactly
//! constant and preserves Bayer phase when sampling raw mosaics.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of pyramid scales used throughout the fusion pipeline.
pub const SCALES: usize = 3;

/// Smallest admissible side length of the coarsest pyramid level.
pub const MIN_COARSE_SIDE: usize = 4;

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Luma weights (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Maps an out-of-range index back into `0..n` by mirror reflection.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// A single channel of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "plane must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane length {} != {width}x{height}",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at index {idx}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "plane must be non-empty");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "plane must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds a plane from samples already known to be well formed.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with mirror-reflected coordinates.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_dims(self, other)?;
        Ok(Self::from_vec_unchecked(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Plane rotated by 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Self {
        let (w, h) = self.dims();
        Self::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }
}

pub(crate) fn ensure_same_dims(a: &Plane, b: &Plane) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// H x W x C image with C in {1, 3}.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl PlanarImage {
    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::ChannelCount {
                expected: 1,
                actual: 0,
            });
        };
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::ChannelCount {
                expected: 3,
                actual: planes.len(),
            });
        }
        let (width, height) = first.dims();
        for p in &planes[1..] {
            ensure_same_dims(first, p)?;
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn new(width: usize, height: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        let planes = channels
            .into_iter()
            .map(|d| Plane::new(width, height, d))
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(planes)
    }

    pub fn gray(plane: Plane) -> Self {
        Self {
            width: plane.width,
            height: plane.height,
            planes: vec![plane],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            planes: vec![Plane::filled(width, height, value); channels],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &Plane {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.planes[c].get(x, y)
    }

    pub fn map_planes(&self, f: impl Fn(&Plane) -> Plane + Sync) -> Self {
        let planes = self.planes.par_iter().map(&f).collect();
        Self {
            width: self.width,
            height: self.height,
            planes,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        self.map_planes(|p| p.map(&f))
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_shape(&self, other: &PlanarImage) -> bool {
        self.dims() == other.dims() && self.channels() == other.channels()
    }

    /// Crops a `w x h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Dimension(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(self.map_planes(|p| Plane::from_fn(w, h, |x, y| p.get(x0 + x, y0 + y))))
    }
}

/// BT.601 luma of a 3-channel image.
pub fn to_luma(img: &PlanarImage) -> Result<PlanarImage> {
    if img.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            actual: img.channels(),
        });
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| {
            // Achromatic pixels map to themselves exactly.
            if r == g && g == b {
                r
            } else {
                wr * r + wg * g + wb * b
            }
        })
        .collect();
    Ok(PlanarImage::gray(Plane::from_vec_unchecked(
        img.width(),
        img.height(),
        data,
    )))
}

/// Separable 5x5 binomial blur, `(1,4,6,4,1)/16` on each axis.
pub fn binomial_blur(p: &Plane) -> Plane {
    separable_filter(p, &BINOMIAL5)
}

/// Separable convolution with an odd-length symmetric kernel.
pub(crate) fn separable_filter(p: &Plane, kernel: &[f64]) -> Plane {
    let (w, h) = p.dims();
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &p.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - r, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    Plane::from_vec_unchecked(w, h, out)
}

/// Blur then keep every second sample; output side is `ceil(side / 2)`.
pub fn downsample(p: &Plane) -> Plane {
    let blurred = binomial_blur(p);
    let (w, h) = p.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    Plane::from_fn(nw, nh, |x, y| blurred.get(2 * x, 2 * y))
}

/// 2x zero-insertion to `width x height` followed by a `4 * binomial` blur.
pub fn upsample(p: &Plane, width: usize, height: usize) -> Plane {
    debug_assert_eq!(width.div_ceil(2), p.width());
    debug_assert_eq!(height.div_ceil(2), p.height());
    let mut up = Plane::zeros(width, height);
    for y in (0..height).step_by(2) {
        for x in (0..width).step_by(2) {
            up.set(x, y, p.get(x / 2, y / 2));
        }
    }
    let mut out = binomial_blur(&up);
    for v in out.data_mut() {
        *v *= 4.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidKind {
    Gaussian,
    Laplacian,
}

impl PyramidKind {
    fn name(self) -> &'static str {
        match self {
            PyramidKind::Gaussian => "gaussian",
            PyramidKind::Laplacian => "laplacian",
        }
    }
}

/// Multi-scale decomposition; `levels[0]` is the finest scale.
///
/// A Laplacian pyramid stores band-pass detail in every level but the last,
/// which holds the coarsest Gaussian residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    kind: PyramidKind,
    levels: Vec<PlanarImage>,
}

impl Pyramid {
    pub fn from_levels(kind: PyramidKind, levels: Vec<PlanarImage>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Dimension("pyramid needs at least one level".into()));
        }
        for pair in levels.windows(2) {
            let (w, h) = pair[0].dims();
            if pair[1].dims() != (w.div_ceil(2), h.div_ceil(2))
                || pair[1].channels() != pair[0].channels()
            {
                return Err(Error::Dimension(format!(
                    "level {}x{} cannot follow {w}x{h}",
                    pair[1].width(),
                    pair[1].height()
                )));
            }
        }
        Ok(Self { kind, levels })
    }

    pub fn kind(&self) -> PyramidKind {
        self.kind
    }

    pub fn levels(&self) -> &[PlanarImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &PlanarImage {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Checks that an image of `width x height` supports `scales` levels.
pub fn check_scales(width: usize, height: usize, scales: usize) -> Result<()> {
    if scales == 0 {
        return Err(Error::InvalidParameter("scales must be >= 1".into()));
    }
    let mut side = width.min(height);
    for _ in 1..scales {
        side = side.div_ceil(2);
    }
    if side < MIN_COARSE_SIDE {
        return Err(Error::Dimension(format!(
            "{width}x{height} too small for {scales} scales (coarsest side {side} < {MIN_COARSE_SIDE})"
        )));
    }
    Ok(())
}

fn gaussian_levels(plane: &Plane, scales: usize) -> Vec<Plane> {
    let mut levels = Vec::with_capacity(scales);
    levels.push(plane.clone());
    for i in 1..scales {
        let next = downsample(&levels[i - 1]);
        levels.push(next);
    }
    levels
}

fn transpose_levels(per_channel: Vec<Vec<Plane>>, scales: usize) -> Vec<PlanarImage> {
    let mut levels: Vec<Vec<Plane>> = (0..scales).map(|_| Vec::new()).collect();
    for channel in per_channel {
        for (i, p) in channel.into_iter().enumerate() {
            levels[i].push(p);
        }
    }
    levels
        .into_iter()
        .map(|planes| PlanarImage::from_planes(planes).expect("levels share dimensions"))
        .collect()
}

pub fn gaussian_pyramid(img: &PlanarImage, scales: usize) -> Result<Pyramid> {
    check_scales(img.width(), img.height(), scales)?;
    let per_channel: Vec<Vec<Plane>> = img
        .planes()
        .par_iter()
        .map(|p| gaussian_levels(p, scales))
        .collect();
    Ok(Pyramid {
        kind: PyramidKind::Gaussian,
        levels: transpose_levels(per_channel, scales),
    })
}

/// Laplacian decomposition of a single plane.
pub fn laplacian_levels(plane: &Plane, scales: usize) -> Vec<Plane> {
    let gauss = gaussian_levels(plane, scales);
    let mut out = Vec::with_capacity(scales);
    for i in 0..scales - 1 {
        let (w, h) = gauss[i].dims();
        let up = upsample(&gauss[i + 1], w, h);
        out.push(
            gauss[i]
                .zip_map(&up, |a, b| a - b)
                .expect("upsample restores dimensions"),
        );
    }
    out.push(gauss[scales - 1].clone());
    out
}

/// Collapses Laplacian levels of a single plane, coarsest first.
pub fn collapse_levels(levels: &[Plane]) -> Plane {
    let mut acc = levels[levels.len() - 1].clone();
    for detail in levels[..levels.len() - 1].iter().rev() {
        let up = upsample(&acc, detail.width(), detail.height());
        acc = detail
            .zip_map(&up, |d, u| u + d)
            .expect("upsample restores dimensions");
    }
    acc
}

pub fn laplacian_pyramid(img: &PlanarImage, scales: usize) -> Result<Pyramid> {
    check_scales(img.width(), img.height(), scales)?;
    let per_channel: Vec<Vec<Plane>> = img
        .planes()
        .par_iter()
        .map(|p| laplacian_levels(p, scales))
        .collect();
    Ok(Pyramid {
        kind: PyramidKind::Laplacian,
        levels: transpose_levels(per_channel, scales),
    })
}

/// Inverse of [`laplacian_pyramid`]. The result is not clamped.
pub fn reconstruct(pyr: &Pyramid) -> Result<PlanarImage> {
    if pyr.kind != PyramidKind::Laplacian {
        return Err(Error::PyramidKind {
            expected: PyramidKind::Laplacian.name(),
            actual: pyr.kind.name(),
        });
    }
    let channels = pyr.levels[0].channels();
    let planes = (0..channels)
        .into_par_iter()
        .map(|c| {
            let levels: Vec<Plane> = pyr.levels.iter().map(|l| l.plane(c).clone()).collect();
            collapse_levels(&levels)
        })
        .collect();
    PlanarImage::from_planes(planes)
}
