//! File formats: `HSICUBE1` binary cubes, per-band PNG stacks, false-color
//! previews and objective-history CSV.
//!
//! Cube layout (all little-endian):
//!
//! ```text
//! offset  size  field
//!      0     8  magic  "HSICUBE1"
//!      8     4  c      u32, bands
//!     12     4  w      u32
//!     16     4  h      u32
//!     20     4  dtype  u32, 0 = f32
//!     24   4cwh payload, band-major, each band row-major over (w, h)
//! ```
//!
//! In image terms `w` is the row index and `h` the column index, so a cube
//! band of `w × h` maps to an image `h` pixels wide and `w` pixels tall.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::tensor::HsiCube;

pub const CUBE_MAGIC: &[u8; 8] = b"HSICUBE1";
pub const CUBE_HEADER_LEN: usize = 24;
pub const DTYPE_F32: u32 = 0;
pub const DEFAULT_FALSE_COLOR_BANDS: (usize, usize, usize) = (30, 15, 10);

fn u32_at(buf: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(buf[off..off + 4].try_into().expect("4-byte slice"))
}

/// Reads a cube, widening to f64. Values outside `[0, 1]` are accepted with a warning.
pub fn read_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < CUBE_MAGIC.len() || &bytes[..8] != CUBE_MAGIC {
        let mut found = [0u8; 8];
        let n = bytes.len().min(8);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    if bytes.len() < CUBE_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: CUBE_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let (c, w, h) = (u32_at(&bytes, 8), u32_at(&bytes, 12), u32_at(&bytes, 16));
    let dtype = u32_at(&bytes, 20);
    let overflow = || Error::DimOverflow {
        c: c as u64,
        w: w as u64,
        h: h as u64,
    };
    if c == 0 || w == 0 || h == 0 {
        return Err(overflow());
    }
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let count = (c as u64)
        .checked_mul(w as u64)
        .and_then(|v| v.checked_mul(h as u64))
        .filter(|&v| v <= (usize::MAX / 8) as u64)
        .ok_or_else(overflow)?;
    let expected = count.checked_mul(4).ok_or_else(overflow)?;
    let actual = (bytes.len() - CUBE_HEADER_LEN) as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::InvalidParameter(format!(
            "cube file {path:?} has {} trailing bytes",
            actual - expected
        )));
    }
    let data: Vec<f64> = bytes[CUBE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cube payload"));
    }
    let cube = HsiCube::new(c as usize, w as usize, h as usize, data)?;
    if !cube.in_unit_range() {
        log::warn!("{}: values outside [0, 1]", path.display());
    }
    Ok(cube)
}

/// Writes a cube, narrowing to f32.
pub fn write_cube(path: impl AsRef<Path>, cube: &HsiCube) -> Result<()> {
    let path = path.as_ref();
    cube.validate(false)?;
    let dims = [cube.bands(), cube.width(), cube.height()];
    let mut header = Vec::with_capacity(CUBE_HEADER_LEN + 4 * cube.data().len());
    header.extend_from_slice(CUBE_MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::DimOverflow {
            c: dims[0] as u64,
            w: dims[1] as u64,
            h: dims[2] as u64,
        })?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for &v in cube.data() {
        header.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, header).map_err(|e| Error::io(path, e))
}

fn decode_gray(path: &Path) -> Result<(u32, u32, Vec<f64>)> {
    let img = image::open(path)?;
    let (iw, ih) = (img.width(), img.height());
    let data = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::BandImport(format!(
                "{} is not single-channel grayscale ({:?})",
                path.display(),
                other.color()
            )))
        }
    };
    Ok((iw, ih, data))
}

/// Stacks grayscale images matching `pattern` inside `dir` into a cube.
///
/// Files are sorted lexicographically to give band order. 8-bit values are
/// divided by 255 and 16-bit values by 65535.
pub fn import_band_pngs(dir: impl AsRef<Path>, pattern: &str) -> Result<HsiCube> {
    let dir = dir.as_ref();
    let full = dir.join(pattern);
    let full = full
        .to_str()
        .ok_or_else(|| Error::BandImport(format!("non-UTF-8 path {full:?}")))?;
    let mut paths: Vec<PathBuf> = glob::glob(full)
        .map_err(|e| Error::BandImport(format!("bad pattern {pattern:?}: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::BandImport(e.to_string()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::BandImport(format!("no files match {pattern:?} in {}", dir.display())));
    }

    let bands = paths.iter().map(|p| decode_gray(p)).collect::<Result<Vec<_>>>()?;
    let (iw, ih) = (bands[0].0, bands[0].1);
    let offenders: Vec<String> = paths
        .iter()
        .zip(&bands)
        .filter(|(_, b)| (b.0, b.1) != (iw, ih))
        .map(|(p, b)| format!("{} ({}x{})", p.display(), b.0, b.1))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::BandImport(format!(
            "expected {iw}x{ih} like {}, but got: {}",
            paths[0].display(),
            offenders.join(", ")
        )));
    }
    let c = bands.len();
    let data = bands.into_iter().flat_map(|b| b.2).collect();
    HsiCube::new(c, ih as usize, iw as usize, data)
}

fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit RGB PNG from three bands, each clipped to `[0, 1]`.
pub fn export_false_color(cube: &HsiCube, bands: (usize, usize, usize), path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let sel = [bands.0, bands.1, bands.2];
    if let Some(&index) = sel.iter().find(|&&b| b >= cube.bands()) {
        return Err(Error::BandOutOfRange {
            index,
            bands: cube.bands(),
        });
    }
    let (rows, cols) = (cube.width(), cube.height());
    let planes = sel.map(|b| cube.band(b));
    let img = ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
        let k = y as usize * cols + x as usize;
        Rgb(planes.map(|p| to_u8(p[k])))
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// `iteration,objective` rows, iteration 0 being the initial point.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["iteration", "objective"])?;
    for (i, f) in history.iter().enumerate() {
        w.write_record([i.to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize::<(usize, f64)>()
        .map(|row| Ok(row?.1))
        .collect()
}
