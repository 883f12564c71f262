//! Deterministic RGB-NIR low-light fusion.
//!
//! The pipeline restores a noisy RGB frame, extracts binary structure maps
//! from RGB and NIR pyramids, scores their agreement with an inconsistency
//! prior, and injects only the NIR detail whose structure is confirmed by
//! RGB. Raw synthesis ([`isp`], [`noisesim`]), quality metrics ([`metrics`])
//! and a benchmark harness ([`bench`]) complete the toolkit.

pub mod bench;
pub mod dip;
pub mod error;
pub mod fusion;
pub mod imagecore;
pub mod io;
pub mod isp;
pub mod metrics;
pub mod noisesim;
pub mod structure;
pub mod synthetic;

pub use error::{Error, Result};
pub use imagecore::{PlanarImage, Plane, Pyramid, PyramidKind};
