//! Procedural RGB/NIR scene pairs used for the bundled fixture set and for
//! tests. Scenes are piecewise smooth with hard edges so that structure maps
//! have well-defined support.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imagecore::{PlanarImage, Plane};
use crate::isp::{Cfa, RawImage, DEFAULT_GAMMA};

/// A clean, aligned scene: sRGB-encoded RGB and NIR in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub rgb: PlanarImage,
    pub nir: PlanarImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    /// Colored rectangles over a gradient; NIR edges coincide with RGB edges.
    Blocks,
    /// Blocks plus a hard-edged shadow that exists only in NIR.
    Shadow,
    /// Blocks plus dark strokes that exist only in RGB.
    Ink,
    /// Concentric rings present in both modalities.
    Rings,
    /// Overlapping disks with NIR-bright foreground.
    Disks,
}

impl SceneKind {
    pub const ALL: [SceneKind; 5] = [
        SceneKind::Blocks,
        SceneKind::Shadow,
        SceneKind::Ink,
        SceneKind::Rings,
        SceneKind::Disks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Blocks => "blocks",
            SceneKind::Shadow => "shadow",
            SceneKind::Ink => "ink",
            SceneKind::Rings => "rings",
            SceneKind::Disks => "disks",
        }
    }

    /// Scenes whose NIR frame carries structure absent from RGB.
    pub fn has_nir_only_structure(self) -> bool {
        matches!(self, SceneKind::Shadow)
    }
}

struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    rgb: [f64; 3],
    nir: f64,
}

fn random_rects(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> Vec<Rect> {
    (0..n)
        .map(|_| {
            let rw = rng.random_range(w / 8..w / 3);
            let rh = rng.random_range(h / 8..h / 3);
            let x0 = rng.random_range(0..w - rw);
            let y0 = rng.random_range(0..h - rh);
            Rect {
                x0,
                y0,
                x1: x0 + rw,
                y1: y0 + rh,
                rgb: [
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                ],
                nir: rng.random_range(0.2..0.9),
            }
        })
        .collect()
}

fn blocks(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ([Plane; 3], Plane) {
    let rects = random_rects(rng, w, h, 7);
    let base = |x: usize, y: usize| 0.35 + 0.25 * (x + y) as f64 / (w + h) as f64;
    let mut rgb = [0, 1, 2].map(|c| {
        Plane::from_fn(w, h, |x, y| base(x, y) * [1.0, 0.95, 0.85][c])
    });
    let mut nir = Plane::from_fn(w, h, |x, y| 0.45 + 0.2 * base(x, y));
    for r in &rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                for (c, p) in rgb.iter_mut().enumerate() {
                    p.set(x, y, r.rgb[c]);
                }
                nir.set(x, y, r.nir);
            }
        }
    }
    (rgb, nir)
}

fn rings(w: usize, h: usize) -> ([Plane; 3], Plane) {
    let (cx, cy) = (w as f64 * 0.45, h as f64 * 0.55);
    let band = |x: usize, y: usize| {
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        ((d / 9.0).floor() as i64 % 3) as f64 / 2.0
    };
    let rgb = [0, 1, 2].map(|c| {
        let tint = [0.6, 0.45, 0.3][c];
        Plane::from_fn(w, h, |x, y| 0.2 + tint * band(x, y))
    });
    let nir = Plane::from_fn(w, h, |x, y| 0.3 + 0.5 * band(x, y));
    (rgb, nir)
}

fn disks(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ([Plane; 3], Plane) {
    let mut rgb = [0, 1, 2].map(|c| Plane::filled(w, h, [0.45, 0.35, 0.3][c]));
    let mut nir = Plane::filled(w, h, 0.3);
    for _ in 0..14 {
        let r = rng.random_range(w as f64 / 16.0..w as f64 / 7.0);
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let green = rng.random_range(0.3..0.8);
        let color = [green * 0.4, green, green * 0.3];
        let nir_v = rng.random_range(0.6..0.95);
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    for (c, p) in rgb.iter_mut().enumerate() {
                        p.set(x, y, color[c]);
                    }
                    nir.set(x, y, nir_v);
                }
            }
        }
    }
    (rgb, nir)
}

/// Builds one scene; identical `(kind, size, seed)` gives identical output.
pub fn scene(kind: SceneKind, width: usize, height: usize, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rgb, mut nir) = match kind {
        SceneKind::Blocks | SceneKind::Shadow | SceneKind::Ink => blocks(&mut rng, width, height),
        SceneKind::Rings => rings(width, height),
        SceneKind::Disks => disks(&mut rng, width, height),
    };
    let mut rgb = rgb;
    match kind {
        SceneKind::Shadow => {
            // A diagonal cast shadow visible only under the NIR flash.
            let (w, h) = (width as f64, height as f64);
            for y in 0..height {
                for x in 0..width {
                    let u = x as f64 / w + 0.6 * y as f64 / h;
                    if (0.55..0.85).contains(&u) {
                        nir.set(x, y, nir.get(x, y) * 0.45);
                    }
                }
            }
        }
        SceneKind::Ink => {
            // Horizontal strokes, dark in RGB, invisible in NIR.
            for k in 0..4 {
                let y0 = height / 6 + k * height / 5;
                for y in y0..(y0 + 3).min(height) {
                    for x in width / 8..width * 7 / 8 {
                        if (x / 6) % 4 != 3 {
                            for p in rgb.iter_mut() {
                                p.set(x, y, 0.08);
                            }
                        }
                    }
                }
            }
        }
        _ => {}
    }
    let [r, g, b] = rgb;
    Ok(Scene {
        rgb: PlanarImage::from_planes(vec![r, g, b])?,
        nir: PlanarImage::gray(nir),
    })
}

/// Illuminant cast applied when simulating the sensor (R, G, B).
pub const SENSOR_CAST: [f64; 3] = [0.75, 1.0, 0.6];

/// Simulates a well-exposed Bayer capture of an sRGB scene: linearize, apply
/// the sensor cast, sample the CFA and quantize to 10 bits.
pub fn mosaic(rgb: &PlanarImage, cfa: Cfa, exposure: f64) -> Result<RawImage> {
    let (w, h) = rgb.dims();
    let plane = Plane::from_fn(w, h, |x, y| {
        let c = cfa.color_at(x, y) as usize;
        let linear = rgb.get(x, y, c).clamp(0.0, 1.0).powf(DEFAULT_GAMMA);
        ((linear * SENSOR_CAST[c] * exposure).clamp(0.0, 1.0) * 1023.0).round() / 1023.0
    });
    RawImage::new(plane, cfa)
}

/// Fixture for the shadow-suppression check: a clean RGB image holding one
/// square, and an NIR frame holding the same square plus a vertical
/// NIR-only step edge at `shadow_x`. Returns the pair and the shadow column.
///
/// The RGB frame carries a faint pixel checkerboard. Sobel and the binomial
/// blur both null it exactly, so it adds no RGB structure, but it gives the
/// finest detail level the local contrast that NIR gain matching needs.
pub fn nir_only_edge_fixture(width: usize, height: usize) -> Result<(PlanarImage, PlanarImage, usize)> {
    let square = |x: usize, y: usize| {
        (width / 8..width * 3 / 8).contains(&x) && (height * 3 / 8..height * 5 / 8).contains(&y)
    };
    let checker = |x: usize, y: usize| if (x + y).is_multiple_of(2) { CHECKER_AMPLITUDE } else { -CHECKER_AMPLITUDE };
    let shadow_x = width * 3 / 4;
    let rgb = PlanarImage::from_planes(
        [0.55, 0.5, 0.4]
            .iter()
            .map(|&v| {
                Plane::from_fn(width, height, |x, y| {
                    let base = if square(x, y) { v * 0.4 } else { v };
                    base + checker(x, y)
                })
            })
            .collect(),
    )?;
    let nir = PlanarImage::gray(Plane::from_fn(width, height, |x, y| {
        let base = if square(x, y) { 0.25 } else { 0.7 };
        if x >= shadow_x {
            base * 0.5
        } else {
            base
        }
    }));
    Ok((rgb, nir, shadow_x))
}

const CHECKER_AMPLITUDE: f64 = 0.03;
