//! Structure inconsistency prior between RGB and NIR structure maps.
//!
//! For binary edge maps `c` (RGB channel) and `n` (NIR) the inconsistency is
//!
//! ```text
//! F(c, n) = lambda * (1 - c) * (1 - n) + c * n
//! ```
//!
//! which is 1 where both have structure, 0 where exactly one has structure
//! and `lambda` where neither does. Multiplying NIR structures by this map
//! removes NIR edges that have no RGB counterpart.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{ensure_same_dims, Plane};
use crate::structure::StructurePyramid;

pub const DEFAULT_LAMBDA: f64 = 0.5;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    Ok(())
}

/// Pixelwise inconsistency of two binary edge maps.
pub fn inconsistency(edge_c: &Plane, edge_n: &Plane, lambda: f64) -> Result<Plane> {
    check_lambda(lambda)?;
    ensure_same_dims(edge_c, edge_n)?;
    if !edge_c.is_binary() {
        return Err(Error::NonBinary("RGB edge map".into()));
    }
    if !edge_n.is_binary() {
        return Err(Error::NonBinary("NIR edge map".into()));
    }
    edge_c.zip_map(edge_n, |c, n| lambda * (1.0 - c) * (1.0 - n) + c * n)
}

/// Per-scale, per-RGB-channel inconsistency maps with values in `{0, lambda, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DipPyramid {
    maps: Vec<Vec<Plane>>,
    lambda: f64,
}

impl DipPyramid {
    /// All-ones maps shaped like `like`; turns the prior off.
    pub fn all_ones(like: &StructurePyramid, lambda: f64) -> Self {
        let maps = like
            .maps()
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|m| Plane::filled(m.width(), m.height(), 1.0))
                    .collect()
            })
            .collect();
        Self { maps, lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
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

    pub fn maps(&self) -> &[Vec<Plane>] {
        &self.maps
    }
}

/// Inconsistency prior for every scale and RGB channel; the single NIR
/// structure channel is broadcast against each RGB channel.
pub fn compute_dip(
    rgb: &StructurePyramid,
    nir: &StructurePyramid,
    lambda: f64,
) -> Result<DipPyramid> {
    check_lambda(lambda)?;
    if rgb.scales() != nir.scales() {
        return Err(Error::ShapeMismatch(format!(
            "RGB has {} scales, NIR has {}",
            rgb.scales(),
            nir.scales()
        )));
    }
    if nir.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: nir.channels(),
        });
    }
    let maps = (0..rgb.scales())
        .into_par_iter()
        .map(|i| {
            rgb.level(i)
                .iter()
                .map(|c| inconsistency(c, nir.map(i, 0), lambda))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DipPyramid { maps, lambda })
}

/// NIR structures multiplied by the prior, indexed `[scale][rgb channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedStructures {
    maps: Vec<Vec<Plane>>,
}

impl WeightedStructures {
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
}

pub fn weight_nir(nir: &StructurePyramid, dip: &DipPyramid) -> Result<WeightedStructures> {
    if nir.scales() != dip.scales() {
        return Err(Error::ShapeMismatch(format!(
            "NIR has {} scales, prior has {}",
            nir.scales(),
            dip.scales()
        )));
    }
    if nir.channels() != 1 && nir.channels() != dip.channels() {
        return Err(Error::ChannelCount {
            expected: dip.channels(),
            actual: nir.channels(),
        });
    }
    let maps = (0..dip.scales())
        .map(|i| {
            (0..dip.channels())
                .map(|c| {
                    let n = nir.map(i, if nir.channels() == 1 { 0 } else { c });
                    n.zip_map(dip.map(i, c), |s, m| m * s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedStructures { maps })
}

/// How per-RGB-channel maps are merged into one guidance plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceCombine {
    /// Pixelwise minimum: inject only where no channel flags inconsistency.
    #[default]
    Min,
    Mean,
}

impl std::str::FromStr for GuidanceCombine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(GuidanceCombine::Min),
            "mean" => Ok(GuidanceCombine::Mean),
            other => Err(Error::InvalidParameter(format!(
                "guidance combine must be `min` or `mean`, got `{other}`"
            ))),
        }
    }
}

pub fn combine_channels(planes: &[Plane], how: GuidanceCombine) -> Result<Plane> {
    let Some(first) = planes.first() else {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: 0,
        });
    };
    let mut acc = first.clone();
    for p in &planes[1..] {
        acc = match how {
            GuidanceCombine::Min => acc.zip_map(p, f64::min)?,
            GuidanceCombine::Mean => acc.zip_map(p, |a, b| a + b)?,
        };
    }
    if how == GuidanceCombine::Mean {
        let n = planes.len() as f64;
        acc = acc.map(|v| v / n);
    }
    Ok(acc)
}
