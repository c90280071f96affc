use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage};

use super::{rgb_to_ycbcr, ycbcr_to_rgb, ColorImage, LumaImage};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Decode any supported raster (PNG, PGM/PPM, ...) into YCbCr planes.
pub fn read_color(path: impl AsRef<Path>) -> Result<ColorImage> {
    let img = open(path.as_ref())?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Format {
            kind: "image",
            reason: format!("{} is empty", path.as_ref().display()),
        });
    }
    Ok(rgb_to_ycbcr(&img.to_rgb8()))
}

/// Luminance plane of any supported raster. Grey images are taken as-is.
pub fn read_luma(path: impl AsRef<Path>) -> Result<LumaImage> {
    let img = open(path.as_ref())?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Format {
            kind: "image",
            reason: format!("{} is empty", path.as_ref().display()),
        });
    }
    if img.color().has_color() {
        Ok(rgb_to_ycbcr(&img.to_rgb8()).luma)
    } else {
        let g = img.to_luma8();
        let data = g.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        LumaImage::new(g.height() as usize, g.width() as usize, data)
    }
}

fn quantize(img: &LumaImage) -> Vec<u8> {
    img.data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Write an 8-bit grey image; binary PGM for `.pgm`, otherwise by extension
/// (PNG by default).
pub fn write_luma(path: impl AsRef<Path>, img: &LumaImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = quantize(img);
    if is_pgm(path) {
        let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
        out.extend_from_slice(&bytes);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        return f.write_all(&out).map_err(|e| Error::io(path, e));
    }
    let g = GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer sized from image dimensions");
    g.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_color(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    ycbcr_to_rgb(img).save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_and_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = LumaImage::from_fn(7, 5, |r, c| ((r * 5 + c) * 7) as f64 / 255.0);
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            write_luma(&p, &img).unwrap();
            let back = read_luma(&p).unwrap();
            assert_eq!(back.dims(), (7, 5));
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrupt_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        fs::write(&p, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(read_color(&p).is_err());
        assert!(read_luma(dir.path().join("missing.png")).is_err());
    }
}
