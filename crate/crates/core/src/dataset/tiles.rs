use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runs::{Run, RunKey};
use crate::geo::{resample_bilinear, sample_window, PixelBlock, RasterImage, RoadPolyline};
use crate::survey::{bin_iri, binarize, BinaryLabel, IriRecord, QualityClass, Task};

/// Half-open chainage interval `[start, end)`, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// A square image window on a road centerline with its roughness labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTile {
    pub tile_id: String,
    pub road_id: String,
    pub run_index: usize,
    pub span: Span,
    pub iri_label: f64,
    pub class_label: QualityClass,
    pub binary_label: BinaryLabel,
    pub pixels: PixelBlock,
}

impl LabeledTile {
    /// Builds a tile whose class labels are derived from `iri_label`.
    pub fn new(
        tile_id: String,
        road_id: String,
        run_index: usize,
        span: Span,
        iri_label: f64,
        pixels: PixelBlock,
    ) -> Self {
        let class_label = bin_iri(iri_label).expect("tile labels are non-negative");
        let binary_label = binarize(iri_label).expect("tile labels are non-negative");
        Self {
            tile_id,
            road_id,
            run_index,
            span,
            iri_label,
            class_label,
            binary_label,
            pixels,
        }
    }

    pub fn run_key(&self) -> RunKey {
        RunKey::new(self.road_id.clone(), self.run_index)
    }

    /// Class ordinal under the given task.
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Binary => self.binary_label.ordinal(),
            Task::FiveClass => self.class_label.ordinal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    OutOfBounds,
    NoSurveyCoverage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub out_of_bounds: usize,
    pub no_survey_coverage: usize,
}

impl SkipReport {
    pub fn record(&mut self, reason: SkipReason) {
        match reason {
            SkipReason::OutOfBounds => self.out_of_bounds += 1,
            SkipReason::NoSurveyCoverage => self.no_survey_coverage += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.out_of_bounds + self.no_survey_coverage
    }

    pub fn merge(&mut self, other: SkipReport) {
        self.out_of_bounds += other.out_of_bounds;
        self.no_survey_coverage += other.no_survey_coverage;
    }
}

#[derive(Debug, Clone, Default)]
pub struct TileExtraction {
    pub tiles: Vec<LabeledTile>,
    pub skips: SkipReport,
}

/// Length-weighted mean IRI of the records overlapping `span`, or `None`
/// when no record overlaps it. Overlapping or duplicate records all count
/// with their overlap length.
pub fn length_weighted_iri(records: &[IriRecord], span: Span) -> Option<f64> {
    let mut weight = 0.0;
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in records {
        let overlap = span.end.min(r.chainage_end) - span.start.max(r.chainage_start);
        if overlap > 0.0 {
            weight += overlap;
            sum += overlap * r.iri;
            lo = lo.min(r.iri);
            hi = hi.max(r.iri);
        }
    }
    // the clamp only absorbs rounding at the last ulp
    (weight > 0.0).then(|| (sum / weight).clamp(lo, hi))
}

/// Extracts non-overlapping tiles along one road.
///
/// The ground extent of a tile is `d = tile_px * pixel_size_x`. Tile `k`
/// covers chainage `[k*d, (k+1)*d)` and is centered on the centerline at
/// `k*d + d/2`; only tiles lying wholly on the road are attempted. A tile
/// belongs to the run containing its center. Tiles are skipped when the
/// window leaves the raster or no survey record overlaps their span.
pub fn extract_tiles(
    road: &RoadPolyline,
    img: &RasterImage,
    records: &[IriRecord],
    tile_px: usize,
    runs: &[Run],
) -> TileExtraction {
    assert!(tile_px >= 1, "tile size must be at least one pixel");
    let extent = tile_px as f64 * img.transform().pixel_size_x;
    let total = road.total_length();
    let records: Vec<IriRecord> = records
        .iter()
        .filter(|r| r.road_id == road.road_id())
        .cloned()
        .collect();
    let mut road_runs: Vec<&Run> = runs.iter().filter(|r| r.road_id == road.road_id()).collect();
    road_runs.sort_by(|a, b| a.start.total_cmp(&b.start));

    let mut out = TileExtraction::default();
    let mut k = 0usize;
    loop {
        let span = Span::new(k as f64 * extent, (k + 1) as f64 * extent);
        if span.end > total {
            break;
        }
        let center = (k as f64 + 0.5) * extent;
        let tile = (|| {
            let iri = length_weighted_iri(&records, span).ok_or(SkipReason::NoSurveyCoverage)?;
            let point = road
                .chainage_to_point(center)
                .expect("tile centers lie on the road");
            let pixels = sample_window(img, point, tile_px).map_err(|_| SkipReason::OutOfBounds)?;
            let run_index = road_runs
                .iter()
                .find(|r| r.start <= center && center < r.end)
                .or(road_runs.last())
                .map_or(0, |r| r.run_index);
            Ok(LabeledTile::new(
                format!("{}/{}/{:05}", road.road_id(), tile_px, k),
                road.road_id().to_string(),
                run_index,
                span,
                iri,
                pixels,
            ))
        })();
        match tile {
            Ok(t) => out.tiles.push(t),
            Err(reason) => out.skips.record(reason),
        }
        k += 1;
    }
    out
}

/// Extracts tiles for many roads in parallel; output keeps road order.
pub fn extract_all(
    roads: &[RoadPolyline],
    img: &RasterImage,
    records: &[IriRecord],
    tile_px: usize,
    runs: &[Run],
) -> TileExtraction {
    let parts: Vec<TileExtraction> = roads
        .par_iter()
        .map(|road| extract_tiles(road, img, records, tile_px, runs))
        .collect();
    let mut out = TileExtraction::default();
    for p in parts {
        out.tiles.extend(p.tiles);
        out.skips.merge(p.skips);
    }
    out
}

/// Bilinearly resizes every tile's pixels to `target`×`target`.
pub fn resize_tiles(tiles: Vec<LabeledTile>, target: usize) -> Vec<LabeledTile> {
    tiles
        .into_par_iter()
        .map(|mut t| {
            if t.pixels.size != target {
                t.pixels = resample_bilinear(&t.pixels, target);
            }
            t
        })
        .collect()
}
