//! Image-quality and structure-agreement measures: PSNR, SSIM, Dice
//! distance between binary maps, Charbonnier distance and the weighted
//! composite of the last two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{separable_filter, to_luma, PlanarImage, Plane};
use crate::structure::StructurePyramid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Guard added to the Dice denominator when the maps do not overlap.
pub const DICE_GUARD: f64 = 1e-8;

pub const CHARBONNIER_EPS: f64 = 1e-3;

/// Weight of the RGB structure term in [`composite_score`].
pub const STRUCTURE_WEIGHT_RGB: f64 = 1.0 / 1000.0;
/// Weight of the NIR structure term in [`composite_score`].
pub const STRUCTURE_WEIGHT_NIR: f64 = 1.0 / 3000.0;

fn check_shape(x: &PlanarImage, reference: &PlanarImage) -> Result<()> {
    if !x.same_shape(reference) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            x.width(),
            x.height(),
            x.channels(),
            reference.width(),
            reference.height(),
            reference.channels()
        )));
    }
    Ok(())
}

fn sum_sq_diff(x: &PlanarImage, reference: &PlanarImage) -> f64 {
    x.planes()
        .iter()
        .zip(reference.planes())
        .map(|(a, b)| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
        })
        .sum()
}

/// Peak signal-to-noise ratio over all channels jointly, peak 1.0.
/// Identical images give `f64::INFINITY`.
pub fn psnr(x: &PlanarImage, reference: &PlanarImage) -> Result<f64> {
    check_shape(x, reference)?;
    let n = (x.width() * x.height() * x.channels()) as f64;
    let mse = sum_sq_diff(x, reference) / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

fn ssim_plane(x: &Plane, y: &Plane) -> f64 {
    let k = ssim_kernel();
    let mu_x = separable_filter(x, &k);
    let mu_y = separable_filter(y, &k);
    let xx = separable_filter(&x.map(|v| v * v), &k);
    let yy = separable_filter(&y.map(|v| v * v), &k);
    let xy = separable_filter(&x.zip_map(y, |a, b| a * b).expect("same dims"), &k);
    let n = x.data().len();
    let mut total = 0.0;
    for j in 0..n {
        let (mx, my) = (mu_x.data()[j], mu_y.data()[j]);
        let sx = xx.data()[j] - mx * mx;
        let sy = yy.data()[j] - my * my;
        let sxy = xy.data()[j] - mx * my;
        total += ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (sx + sy + SSIM_C2));
    }
    total / n as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5) and mirrored borders.
/// Three-channel inputs are compared on luma.
pub fn ssim(x: &PlanarImage, reference: &PlanarImage) -> Result<f64> {
    check_shape(x, reference)?;
    if x.width() < SSIM_WINDOW || x.height() < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            x.width(),
            x.height()
        )));
    }
    if x.channels() == 3 {
        let (lx, ly) = (to_luma(x)?, to_luma(reference)?);
        Ok(ssim_plane(lx.plane(0), ly.plane(0)))
    } else {
        Ok(ssim_plane(x.plane(0), reference.plane(0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceDistance {
    pub value: f64,
    /// Maps share no foreground pixel; `value` went through the guard.
    pub disjoint: bool,
}

/// `(sum p^2 + sum g^2) / (2 sum p g)` for binary maps.
pub fn dice_distance(p: &Plane, g: &Plane) -> Result<DiceDistance> {
    if p.dims() != g.dims() {
        return Err(Error::ShapeMismatch("dice operands differ in size".into()));
    }
    if !p.is_binary() || !g.is_binary() {
        return Err(Error::NonBinary("dice distance operands".into()));
    }
    let (mut pp, mut gg, mut pg) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.data().iter().zip(g.data()) {
        pp += a * a;
        gg += b * b;
        pg += a * b;
    }
    if pg == 0.0 {
        return Ok(DiceDistance {
            value: (pp + gg) / DICE_GUARD,
            disjoint: true,
        });
    }
    Ok(DiceDistance {
        value: (pp + gg) / (2.0 * pg),
        disjoint: false,
    })
}

/// Dice distance summed over every scale and channel.
pub fn structure_dice(pred: &StructurePyramid, gt: &StructurePyramid) -> Result<DiceDistance> {
    if pred.scales() != gt.scales() || pred.channels() != gt.channels() {
        return Err(Error::ShapeMismatch(format!(
            "structure pyramids {}x{} vs {}x{}",
            pred.scales(),
            pred.channels(),
            gt.scales(),
            gt.channels()
        )));
    }
    let mut total = DiceDistance {
        value: 0.0,
        disjoint: false,
    };
    for i in 0..pred.scales() {
        for c in 0..pred.channels() {
            let d = dice_distance(pred.map(i, c), gt.map(i, c))?;
            total.value += d.value;
            total.disjoint |= d.disjoint;
        }
    }
    Ok(total)
}

/// `sqrt(||x - ref||^2 + eps^2)` over all samples.
pub fn charbonnier(x: &PlanarImage, reference: &PlanarImage, eps: f64) -> Result<f64> {
    check_shape(x, reference)?;
    let ss = sum_sq_diff(x, reference);
    if ss == 0.0 {
        return Ok(eps);
    }
    Ok((ss + eps * eps).sqrt())
}

/// Terms of the weighted composite score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositeTerms {
    /// Charbonnier of the final RGB output.
    pub rec_fused: Option<f64>,
    /// Charbonnier of the coarse (restored) RGB output.
    pub rec_coarse: Option<f64>,
    /// Charbonnier of the NIR reconstruction.
    pub rec_nir: Option<f64>,
    /// Dice distance of RGB structures.
    pub structure_rgb: Option<f64>,
    /// Dice distance of NIR structures.
    pub structure_nir: Option<f64>,
}

pub fn composite_score(t: &CompositeTerms) -> Result<f64> {
    let rec_fused = t.rec_fused.ok_or(Error::MissingTerm("rec_fused"))?;
    let rec_coarse = t.rec_coarse.ok_or(Error::MissingTerm("rec_coarse"))?;
    let rec_nir = t.rec_nir.ok_or(Error::MissingTerm("rec_nir"))?;
    let s_rgb = t.structure_rgb.ok_or(Error::MissingTerm("structure_rgb"))?;
    let s_nir = t.structure_nir.ok_or(Error::MissingTerm("structure_nir"))?;
    Ok(rec_fused
        + rec_coarse
        + rec_nir
        + STRUCTURE_WEIGHT_RGB * s_rgb
        + STRUCTURE_WEIGHT_NIR * s_nir)
}

/// One evaluated (image, noise level, method) triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(with = "inf_as_string")]
    pub psnr: f64,
    pub ssim: f64,
    pub dice_rgb: f64,
    pub dice_nir: f64,
    pub charbonnier: f64,
    pub composite: f64,
}

/// Serializes non-finite floats as `"inf"`, `"-inf"` or `"nan"`.
pub mod inf_as_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::format_float(*v, 4))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => super::parse_float(&s).ok_or_else(|| de::Error::custom(format!("bad float `{s}`"))),
        }
    }
}

/// Fixed-decimal formatting with `inf` for infinite values.
pub fn format_float(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.decimals$}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}
