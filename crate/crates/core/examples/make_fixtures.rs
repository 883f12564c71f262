//! Regenerates the bundled fixture set.
//!
//!     cargo run -p nirfuse-core --example make_fixtures -- fixtures

use std::path::PathBuf;

use nirfuse_core::io::{write_png, write_raw, BitDepth};
use nirfuse_core::isp::Cfa;
use nirfuse_core::synthetic::{mosaic, scene, SceneKind};

const SIZE: usize = 256;

fn main() -> nirfuse_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).map_err(|e| nirfuse_core::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let mut manifest = String::from("# Synthetic RGB raw / NIR pairs.\nseed=2024\npatch_size=256\n");
    for (i, kind) in SceneKind::ALL.into_iter().enumerate() {
        let s = scene(kind, SIZE, SIZE, 100 + i as u64)?;
        let raw = mosaic(&s.rgb, Cfa::Rggb, 1.0)?;
        let name = kind.name();
        write_raw(&raw, &dir.join(format!("{name}_rgb.pgm")))?;
        write_png(&s.nir, &dir.join(format!("{name}_nir.png")), BitDepth::Sixteen)?;
        manifest.push_str(&format!("{name}\t{name}_rgb.pgm\t{name}_nir.png\n"));
    }
    nirfuse_core::io::write_atomic(&dir.join("manifest.tsv"), manifest.as_bytes())?;
    println!("wrote {} fixtures to {}", SceneKind::ALL.len(), dir.display());
    Ok(())
}
