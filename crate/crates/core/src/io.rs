//! File formats: PNG for developed images and structure maps, 16-bit binary
//! PGM (`P5`, maxval 1023) with a `.meta` sidecar for Bayer raw data.
//!
//! All writers go through a temporary file in the destination directory
//! followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::imagecore::{PlanarImage, Plane};
use crate::isp::{Cfa, RawImage, RAW_BIT_DEPTH, RAW_MAX_DN};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "not a file path".into(),
        })?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Loads a PNG (or any format the codec recognizes) as a 1- or 3-channel image.
/// Alpha is dropped; gray+alpha becomes single-channel.
pub fn read_image(path: &Path) -> Result<PlanarImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let buf = img.to_luma16();
        let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        PlanarImage::new(w, h, vec![data])
    } else {
        let buf = img.to_rgb16();
        let mut planes: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(w * h)).collect();
        for px in buf.pixels() {
            for (c, plane) in planes.iter_mut().enumerate() {
                plane.push(px.0[c] as f64 / 65535.0);
            }
        }
        PlanarImage::new(w, h, planes)
    }
}

/// Encodes an image as PNG, clamping to `[0, 1]` and rounding.
pub fn encode_png(img: &PlanarImage, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let n = img.width() * img.height();
    let dynamic = match (img.channels(), depth) {
        (1, BitDepth::Eight) => {
            let raw = img.plane(0).data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
        (1, BitDepth::Sixteen) => {
            let raw = img.plane(0).data().iter().map(|&v| quantize(v, 65535.0) as u16).collect();
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
        (_, BitDepth::Eight) => {
            let mut raw = Vec::with_capacity(3 * n);
            for j in 0..n {
                for c in 0..3 {
                    raw.push(quantize(img.plane(c).data()[j], 255.0) as u8);
                }
            }
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
        (_, BitDepth::Sixteen) => {
            let mut raw = Vec::with_capacity(3 * n);
            for j in 0..n {
                for c in 0..3 {
                    raw.push(quantize(img.plane(c).data()[j], 65535.0) as u16);
                }
            }
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut bytes, ImageFormat::Png)?;
    Ok(bytes.into_inner())
}

pub fn write_png(img: &PlanarImage, path: &Path, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_png(img, depth)?)
}

/// Writes a map with values in `[0, 1]` as 8-bit grayscale (`v -> round(255 v)`).
pub fn write_map_png(map: &Plane, path: &Path) -> Result<()> {
    write_png(&PlanarImage::gray(map.clone()), path, BitDepth::Eight)
}

/// Sidecar path for a raw file: `<stem>.meta` next to it.
pub fn meta_path(raw_path: &Path) -> PathBuf {
    raw_path.with_extension("meta")
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_meta(path: &Path) -> Result<Cfa> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfa = None;
    let mut depth = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("expected key=value, got `{line}`")))?;
        match key.trim() {
            "cfa" => cfa = Some(value.parse::<Cfa>()?),
            "bit_depth" => {
                depth = Some(
                    value
                        .trim()
                        .parse::<u32>()
                        .map_err(|_| format_err(path, format!("bad bit_depth `{value}`")))?,
                )
            }
            other => return Err(format_err(path, format!("unknown key `{other}`"))),
        }
    }
    match depth {
        Some(RAW_BIT_DEPTH) => {}
        Some(d) => return Err(format_err(path, format!("unsupported bit_depth {d}"))),
        None => return Err(format_err(path, "missing bit_depth")),
    }
    cfa.ok_or_else(|| format_err(path, "missing cfa"))
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Parses a 16-bit big-endian `P5` graymap with maxval 1023.
pub fn decode_raw_pgm(bytes: &[u8], cfa: Cfa, path: &Path) -> Result<RawImage> {
    let mut pos = 0;
    if header_token(bytes, &mut pos) != Some(b"P5".as_slice()) {
        return Err(format_err(path, "not a binary PGM (magic P5)"));
    }
    let mut next_num = |what: &str| -> Result<usize> {
        let tok = header_token(bytes, &mut pos)
            .ok_or_else(|| format_err(path, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, format!("bad {what}")))
    };
    let width = next_num("width")?;
    let height = next_num("height")?;
    let maxval = next_num("maxval")?;
    if maxval != RAW_MAX_DN as usize {
        return Err(format_err(path, format!("maxval must be 1023, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    let data_start = pos + 1;
    let need = width * height * 2;
    if bytes.len() < data_start + need {
        return Err(format_err(
            path,
            format!("expected {need} sample bytes, found {}", bytes.len().saturating_sub(data_start)),
        ));
    }
    let mut data = Vec::with_capacity(width * height);
    for chunk in bytes[data_start..data_start + need].chunks_exact(2) {
        let dn = u16::from_be_bytes([chunk[0], chunk[1]]);
        if dn as f64 > RAW_MAX_DN {
            return Err(format_err(path, format!("sample {dn} exceeds maxval")));
        }
        data.push(dn as f64 / RAW_MAX_DN);
    }
    RawImage::new(Plane::new(width, height, data)?, cfa)
}

/// Reads a raw mosaic and its `.meta` sidecar.
pub fn read_raw(path: &Path) -> Result<RawImage> {
    let cfa = parse_meta(&meta_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_pgm(&bytes, cfa, path)
}

pub fn encode_raw_pgm(raw: &RawImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", raw.width(), raw.height(), RAW_MAX_DN as u32).into_bytes();
    for &v in raw.plane().data() {
        let dn = quantize(v, RAW_MAX_DN) as u16;
        out.extend_from_slice(&dn.to_be_bytes());
    }
    out
}

/// Writes the mosaic (quantized to 10 bits) and its sidecar.
pub fn write_raw(raw: &RawImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_raw_pgm(raw))?;
    let meta = format!("cfa={}\nbit_depth={}\n", raw.cfa(), RAW_BIT_DEPTH);
    write_atomic(&meta_path(path), meta.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pgm");
        let plane = Plane::from_fn(6, 4, |x, y| ((x * 97 + y * 311) % 1024) as f64 / RAW_MAX_DN);
        let raw = RawImage::new(plane, Cfa::Grbg).unwrap();
        write_raw(&raw, &path).unwrap();
        assert!(dir.path().join("scene.meta").exists());
        let back = read_raw(&path).unwrap();
        assert_eq!(back.cfa(), Cfa::Grbg);
        for (a, b) in back.plane().data().iter().zip(raw.plane().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_header_errors() {
        let p = Path::new("x.pgm");
        assert!(decode_raw_pgm(b"P2\n2 2\n1023\n", Cfa::Rggb, p).is_err());
        assert!(decode_raw_pgm(b"P5\n2 2\n255\n\0\0\0\0", Cfa::Rggb, p).is_err());
        assert!(decode_raw_pgm(b"P5\n2 2\n1023\n\0\0", Cfa::Rggb, p).is_err());
        let mut over = b"P5\n# comment\n2 2\n1023\n".to_vec();
        over.extend_from_slice(&[0xff, 0xff, 0, 0, 0, 0, 0, 0]);
        assert!(decode_raw_pgm(&over, Cfa::Rggb, p).is_err());
    }

    #[test]
    fn png_round_trip_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let img = PlanarImage::new(
            3,
            2,
            (0..3)
                .map(|c| (0..6).map(|j| ((j * 3 + c) * 3855) as f64 / 65535.0).collect())
                .collect(),
        )
        .unwrap();
        write_png(&img, &path, BitDepth::Sixteen).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);

        let gray = PlanarImage::gray(Plane::from_fn(4, 4, |x, _| x as f64 * 85.0 / 255.0));
        let gpath = dir.path().join("gray.png");
        write_png(&gray, &gpath, BitDepth::Eight).unwrap();
        let back = read_image(&gpath).unwrap();
        assert_eq!(back.channels(), 1);
        for (a, b) in back.plane(0).data().iter().zip(gray.plane(0).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn map_png_levels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dip.png");
        let map = Plane::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        write_map_png(&map, &path).unwrap();
        let buf = image::open(&path).unwrap().to_luma8();
        assert_eq!(buf.into_raw(), vec![0, 128, 255]);
    }
}
