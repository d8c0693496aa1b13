use chrono::NaiveDate;

use super::{GeoError, GeoTransform, Point};

/// Georeferenced RGB raster, row-major, band-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    transform: GeoTransform,
    capture_date: NaiveDate,
}

impl RasterImage {
    pub const BANDS: usize = 3;

    pub fn new(
        width: usize,
        height: usize,
        data: Vec<u8>,
        transform: GeoTransform,
        capture_date: NaiveDate,
    ) -> Result<Self, GeoError> {
        if width == 0 || height == 0 {
            return Err(GeoError::InvalidRaster(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(Self::BANDS))
            .ok_or_else(|| GeoError::InvalidRaster("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(GeoError::InvalidRaster(format!(
                "expected {expected} samples for {width}x{height}x3, got {}",
                data.len()
            )));
        }
        transform.validate()?;
        Ok(Self {
            width,
            height,
            data,
            transform,
            capture_date,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn capture_date(&self) -> NaiveDate {
        self.capture_date
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * self.width + col) * Self::BANDS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// A square block of RGB pixels, row-major and band-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBlock {
    pub size: usize,
    pub data: Vec<u8>,
}

impl PixelBlock {
    pub fn new(size: usize, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            size * size * 3,
            "block data does not match {size}x{size}x3"
        );
        Self { size, data }
    }

    pub fn get(&self, col: usize, row: usize, band: usize) -> u8 {
        self.data[(row * self.size + col) * 3 + band]
    }
}

/// Copies the `size`×`size` window centered on the world point.
///
/// The continuous pixel position of `center` is rounded to the nearest
/// integer pixel (ties toward negative infinity); that pixel sits at offset
/// `size / 2` inside the window. Windows touching the raster edge are
/// rejected, never padded.
pub fn sample_window(img: &RasterImage, center: Point, size: usize) -> Result<PixelBlock, GeoError> {
    assert!(size >= 1, "window size must be at least 1");
    let c = img.transform.world_to_pixel(center);
    let (cx, cy) = (round_ties_down(c.col), round_ties_down(c.row));
    let half = (size / 2) as i64;
    let (left, top) = (cx - half, cy - half);
    let out_of_bounds = GeoError::WindowOutOfBounds {
        col: left,
        row: top,
        size,
        width: img.width,
        height: img.height,
    };
    if !c.col.is_finite() || !c.row.is_finite() || left < 0 || top < 0 {
        return Err(out_of_bounds);
    }
    let (left, top) = (left as usize, top as usize);
    if left + size > img.width || top + size > img.height {
        return Err(out_of_bounds);
    }
    let row_bytes = size * 3;
    let mut data = Vec::with_capacity(size * row_bytes);
    for r in top..top + size {
        let start = (r * img.width + left) * 3;
        data.extend_from_slice(&img.data[start..start + row_bytes]);
    }
    Ok(PixelBlock { size, data })
}

fn round_ties_down(v: f64) -> i64 {
    (v - 0.5).ceil() as i64
}

/// Bilinear resize on a corner-aligned grid: output sample `i` reads input
/// position `i * (S - 1) / (target - 1)`, so the four corners are copied
/// exactly. A single-sample target reads the block center. Values are rounded
/// half-to-even.
pub fn resample_bilinear(block: &PixelBlock, target: usize) -> PixelBlock {
    let s = block.size;
    assert!(s >= 2, "resample needs a block of at least 2x2");
    assert!(target >= 1, "target size must be at least 1");
    let coord = |i: usize| -> f64 {
        if target == 1 {
            (s - 1) as f64 / 2.0
        } else {
            i as f64 * (s - 1) as f64 / (target - 1) as f64
        }
    };
    let taps: Vec<(usize, f64)> = (0..target)
        .map(|i| {
            let x = coord(i);
            let i0 = (x.floor() as usize).min(s - 2);
            (i0, x - i0 as f64)
        })
        .collect();

    let mut lo = [u8::MAX; 3];
    let mut hi = [u8::MIN; 3];
    for px in block.data.chunks_exact(3) {
        for b in 0..3 {
            lo[b] = lo[b].min(px[b]);
            hi[b] = hi[b].max(px[b]);
        }
    }

    let mut data = Vec::with_capacity(target * target * 3);
    for &(y0, fy) in &taps {
        for &(x0, fx) in &taps {
            for b in 0..3 {
                let p00 = block.get(x0, y0, b) as f64;
                let p10 = block.get(x0 + 1, y0, b) as f64;
                let p01 = block.get(x0, y0 + 1, b) as f64;
                let p11 = block.get(x0 + 1, y0 + 1, b) as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                let v = (top + (bottom - top) * fy).round_ties_even();
                data.push(v.clamp(lo[b] as f64, hi[b] as f64) as u8);
            }
        }
    }
    PixelBlock { size: target, data }
}
