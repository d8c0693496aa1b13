//! Raster container format and PNG + world-file interop.
//!
//! Container layout (all little-endian):
//!
//! ```text
//! 0   12  magic "ROADQRASTER\0"
//! 12   4  format version (u32) = 1
//! 16   4  width (u32)
//! 20   4  height (u32)
//! 24   4  capture date, days since 1970-01-01 (i32)
//! 28  48  origin_x, origin_y, pixel_size_x, pixel_size_y, reserved, reserved (f64)
//! 76   …  RGB bytes, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{GeoError, GeoTransform, RasterImage, RoadPolyline};

pub const RASTER_MAGIC: &[u8; 12] = b"ROADQRASTER\0";
const RASTER_VERSION: u32 = 1;
const HEADER_LEN: usize = 76;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn write_raster<W: Write>(img: &RasterImage, mut w: W) -> Result<(), GeoError> {
    let t = img.transform();
    let days = img.capture_date().signed_duration_since(epoch()).num_days();
    let days = i32::try_from(days)
        .map_err(|_| GeoError::Format(format!("capture date {} out of range", img.capture_date())))?;
    let dim = |v: usize| u32::try_from(v).map_err(|_| GeoError::Format(format!("dimension {v} exceeds u32")));
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(RASTER_MAGIC);
    header.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    header.extend_from_slice(&dim(img.width())?.to_le_bytes());
    header.extend_from_slice(&dim(img.height())?.to_le_bytes());
    header.extend_from_slice(&days.to_le_bytes());
    for v in [t.origin_x, t.origin_y, t.pixel_size_x, t.pixel_size_y, 0.0, 0.0] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header)?;
    w.write_all(img.data())?;
    Ok(())
}

pub fn read_raster<R: Read>(mut r: R) -> Result<RasterImage, GeoError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| GeoError::Format(format!("truncated header: {e}")))?;
    if &header[..12] != RASTER_MAGIC {
        return Err(GeoError::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(12);
    if version != RASTER_VERSION {
        return Err(GeoError::Format(format!("unsupported version {version}")));
    }
    let width = u32_at(16) as usize;
    let height = u32_at(20) as usize;
    let days = i32::from_le_bytes(header[24..28].try_into().unwrap());
    let capture_date = epoch()
        .checked_add_signed(chrono::Duration::days(days as i64))
        .ok_or_else(|| GeoError::Format(format!("capture date offset {days} out of range")))?;
    let transform = GeoTransform::new(f64_at(28), f64_at(36), f64_at(44), f64_at(52))?;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| GeoError::Format("dimensions overflow".into()))?;
    let mut data = vec![0u8; len];
    r.read_exact(&mut data)
        .map_err(|e| GeoError::Format(format!("truncated pixel data: {e}")))?;
    RasterImage::new(width, height, data, transform, capture_date)
}

/// Reads a JSON array of `{"road_id", "vertices": [[x, y], ...]}` objects.
pub fn read_roads<R: Read>(r: R) -> Result<Vec<RoadPolyline>, GeoError> {
    serde_json::from_reader(r).map_err(|e| GeoError::Format(format!("roads: {e}")))
}

pub fn write_roads<W: Write>(roads: &[RoadPolyline], mut w: W) -> Result<(), GeoError> {
    serde_json::to_writer_pretty(&mut w, roads).map_err(|e| GeoError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Parses a six-line world file (A, D, B, E, C, F).
///
/// C and F locate the center of the top-left pixel, as in the usual world
/// file convention; the returned transform is anchored at its corner.
pub fn parse_world_file(text: &str) -> Result<GeoTransform, GeoError> {
    let values: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| GeoError::Format(format!("world file line {}: {e}", i + 1)))
        })
        .collect::<Result<_, _>>()?;
    let [a, d, b, e, c, f] = values[..] else {
        return Err(GeoError::Format(format!(
            "world file needs 6 values, found {}",
            values.len()
        )));
    };
    if d != 0.0 || b != 0.0 {
        return Err(GeoError::Format("rotated world files are not supported".into()));
    }
    if e >= 0.0 {
        return Err(GeoError::Format(
            "world file y pixel size must be negative (north-up)".into(),
        ));
    }
    GeoTransform::new(c - a / 2.0, f - e / 2.0, a, -e)
}

/// Loads an 8-bit PNG (gray, RGB or RGBA) georeferenced by a world file.
pub fn load_png_with_world_file(
    png_path: &Path,
    world_path: &Path,
    capture_date: NaiveDate,
) -> Result<RasterImage, GeoError> {
    let transform = parse_world_file(&std::fs::read_to_string(world_path)?)?;
    let mut decoder = png::Decoder::new(BufReader::new(File::open(png_path)?));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| GeoError::Format(format!("{}: {e}", png_path.display())))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| GeoError::Format(format!("{}: {e}", png_path.display())))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let pixels = &buf[..info.buffer_size()];
    let mut data = Vec::with_capacity(width * height * 3);
    for px in pixels.chunks_exact(channels) {
        match channels {
            1 | 2 => data.extend_from_slice(&[px[0]; 3]),
            _ => data.extend_from_slice(&px[..3]),
        }
    }
    RasterImage::new(width, height, data, transform, capture_date)
}
