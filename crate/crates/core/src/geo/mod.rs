//! Coordinate and raster primitives.
//!
//! World coordinates are projected planar meters. Rasters are north-up with
//! no rotation: column grows with world x, row grows as world y decreases.

mod io;
mod polyline;
mod raster;

pub use io::{
    load_png_with_world_file, parse_world_file, read_raster, read_roads, write_raster, write_roads,
    RASTER_MAGIC,
};
pub use polyline::RoadPolyline;
pub use raster::{resample_bilinear, sample_window, PixelBlock, RasterImage};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ground sampling distance of the imagery, in meters per pixel.
pub const DEFAULT_PIXEL_SIZE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid geotransform: {0}")]
    InvalidTransform(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid polyline for road {road_id}: {reason}")]
    InvalidPolyline { road_id: String, reason: String },
    #[error("chainage {chainage} m outside [0, {length}] m")]
    ChainageOutOfRange { chainage: f64, length: f64 },
    #[error("window of {size} px at pixel ({col}, {row}) extends past the {width}x{height} raster")]
    WindowOutOfBounds {
        col: i64,
        row: i64,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("raster file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point in the projected plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Continuous pixel coordinate; integer values fall on pixel corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub col: f64,
    pub row: f64,
}

/// North-up affine mapping between world meters and pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    /// World x of the top-left corner of pixel (0, 0).
    pub origin_x: f64,
    /// World y of the top-left corner of pixel (0, 0).
    pub origin_y: f64,
    pub pixel_size_x: f64,
    /// Positive; rows advance toward decreasing world y.
    pub pixel_size_y: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Result<Self, GeoError> {
        let t = Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.pixel_size_x > 0.0 && self.pixel_size_x.is_finite())
            || !(self.pixel_size_y > 0.0 && self.pixel_size_y.is_finite())
        {
            return Err(GeoError::InvalidTransform(format!(
                "pixel sizes must be positive and finite, got ({}, {})",
                self.pixel_size_x, self.pixel_size_y
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(GeoError::InvalidTransform("origin must be finite".into()));
        }
        Ok(())
    }

    /// Out-of-raster results are legal; bounds are checked when sampling.
    pub fn world_to_pixel(&self, p: Point) -> PixelCoord {
        PixelCoord {
            col: (p.x - self.origin_x) / self.pixel_size_x,
            row: (self.origin_y - p.y) / self.pixel_size_y,
        }
    }

    pub fn pixel_to_world(&self, c: PixelCoord) -> Point {
        Point {
            x: self.origin_x + c.col * self.pixel_size_x,
            y: self.origin_y - c.row * self.pixel_size_y,
        }
    }

    /// World coordinate of the center of integer pixel (col, row).
    pub fn pixel_center(&self, col: usize, row: usize) -> Point {
        self.pixel_to_world(PixelCoord {
            col: col as f64 + 0.5,
            row: row as f64 + 0.5,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t() -> GeoTransform {
        GeoTransform::new(100.0, 200.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn origin_maps_to_pixel_zero() {
        let c = t().world_to_pixel(Point::new(100.0, 200.0));
        assert_eq!((c.col, c.row), (0.0, 0.0));
    }

    #[test]
    fn one_meter_is_two_pixels_with_y_inverted() {
        let c = t().world_to_pixel(Point::new(101.0, 199.0));
        assert_eq!((c.col, c.row), (2.0, 2.0));
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tr = GeoTransform::new(512_345.25, 9_876_543.5, 0.5, 0.5).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let p = Point::new(
                tr.origin_x + rng.random_range(-5_000.0..5_000.0),
                tr.origin_y + rng.random_range(-5_000.0..5_000.0),
            );
            let q = tr.pixel_to_world(tr.world_to_pixel(p));
            worst = worst.max((p.x - q.x).abs()).max((p.y - q.y).abs());
        }
        assert!(worst < 1e-9, "max abs error {worst}");
    }

    #[test]
    fn rejects_non_positive_pixel_size() {
        assert!(GeoTransform::new(0.0, 0.0, 0.0, 0.5).is_err());
        assert!(GeoTransform::new(0.0, 0.0, 0.5, -0.5).is_err());
        assert!(GeoTransform::new(0.0, 0.0, f64::NAN, 0.5).is_err());
    }
}
