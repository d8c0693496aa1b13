use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::roads::ROAD_GAP_M;
use super::{raster_date, substream, ScenarioSpec, SynthError};
use crate::geo::{GeoTransform, Point, RasterImage, RoadPolyline};
use crate::survey::IriRecord;

/// Ground added around the roads' bounding box on every side.
pub const RASTER_MARGIN_M: f64 = 60.0;
const BAND_ROWS: usize = 64;
const TAG_RENDER: u64 = 3;
const TAG_PALETTE: u64 = 4;

/// IRI painted everywhere when texture_strength is 0.
const IRI_REFERENCE: f64 = 12.0;
const ROAD_BASE: f64 = 170.0;
const BRIGHTNESS_PER_IRI: f64 = 2.5;
const SPECKLE_BASE: f64 = 3.0;
const SPECKLE_PER_IRI: f64 = 0.8;
const DEFAULT_GROUND: [f64; 3] = [115.0, 125.0, 85.0];

#[derive(Debug, Clone, Copy)]
struct Palette {
    ground: [f64; 3],
    /// Offset added to the road surface gray level.
    tint: f64,
}

fn palettes(spec: &ScenarioSpec, n: usize) -> Vec<Palette> {
    (0..n)
        .map(|i| {
            if spec.confound_per_road {
                let mut rng = substream(spec.seed, TAG_PALETTE, i as u64);
                Palette {
                    ground: [
                        rng.random_range(80.0..170.0),
                        rng.random_range(90.0..170.0),
                        rng.random_range(50.0..130.0),
                    ],
                    tint: rng.random_range(-15.0..15.0),
                }
            } else {
                Palette {
                    ground: DEFAULT_GROUND,
                    tint: 0.0,
                }
            }
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(octave ^ splitmix(ix as u64 ^ splitmix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Smooth value noise in `[-1, 1]` with lattice spacing `cell` meters.
fn value_noise(seed: u64, octave: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice(seed, octave, ix, iy);
    let v10 = lattice(seed, octave, ix + 1, iy);
    let v01 = lattice(seed, octave, ix, iy + 1);
    let v11 = lattice(seed, octave, ix + 1, iy + 1);
    let top = v00 + (v10 - v00) * sx;
    let bottom = v01 + (v11 - v01) * sx;
    top + (bottom - top) * sy
}

struct Segment {
    a: Point,
    b: Point,
    chainage: f64,
    road: usize,
}

/// World rectangle `(x0, y0, x1, y1)`.
type Rect = (f64, f64, f64, f64);

fn bounds(points: impl Iterator<Item = Point>) -> Rect {
    points.fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(a, b, c, d), p| {
        (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
    })
}

/// Renders the scene: smooth noisy ground, and road pixels (within half the
/// road width of a centerline) whose brightness falls and speckle grows with
/// the local IRI.
///
/// Rows are rendered in bands of 64, each with its own generator derived
/// from the scenario seed and band index, so the result does not depend on
/// how bands are scheduled.
pub fn render_raster(
    spec: &ScenarioSpec,
    roads: &[RoadPolyline],
    records: &[IriRecord],
) -> Result<RasterImage, SynthError> {
    spec.validate()?;
    if roads.is_empty() {
        return Err(SynthError::InvalidSpec("no roads to render".into()));
    }
    let px = spec.pixel_size;
    let all = bounds(roads.iter().flat_map(|r| r.vertices().iter().copied()));
    let width = ((all.2 - all.0 + 2.0 * RASTER_MARGIN_M) / px).ceil() as u64;
    let height = ((all.3 - all.1 + 2.0 * RASTER_MARGIN_M) / px).ceil() as u64;
    let pixels = width * height;
    if pixels > spec.max_pixels {
        return Err(SynthError::SceneTooLarge {
            pixels,
            budget: spec.max_pixels,
        });
    }
    let (width, height) = (width as usize, height as usize);
    let transform = GeoTransform::new(all.0 - RASTER_MARGIN_M, all.3 + RASTER_MARGIN_M, px, px)?;

    let palette = palettes(spec, roads.len());
    let cells: Vec<Rect> = roads
        .iter()
        .map(|r| {
            let b = bounds(r.vertices().iter().copied());
            let g = ROAD_GAP_M / 2.0;
            (b.0 - g, b.1 - g, b.2 + g, b.3 + g)
        })
        .collect();
    let mut profiles: Vec<Vec<(f64, f64)>> = vec![Vec::new(); roads.len()];
    for (i, road) in roads.iter().enumerate() {
        let mut recs: Vec<&IriRecord> = records.iter().filter(|r| r.road_id == road.road_id()).collect();
        recs.sort_by(|a, b| a.chainage_start.total_cmp(&b.chainage_start));
        profiles[i] = recs.iter().map(|r| (r.chainage_end, r.iri)).collect();
    }
    let segments: Vec<Segment> = roads
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.vertices()
                .windows(2)
                .zip(r.cumulative_chainage())
                .map(move |(w, &s)| Segment {
                    a: w[0],
                    b: w[1],
                    chainage: s,
                    road: i,
                })
        })
        .collect();

    let ctx = Ctx {
        spec,
        transform,
        width,
        palette,
        cells,
        profiles,
        segments,
    };
    let n_bands = height.div_ceil(BAND_ROWS);
    let bands: Vec<Vec<u8>> = (0..n_bands)
        .into_par_iter()
        .map(|band| ctx.band(band, (band * BAND_ROWS)..((band + 1) * BAND_ROWS).min(height)))
        .collect();
    let data = bands.concat();
    Ok(RasterImage::new(width, height, data, transform, raster_date())?)
}

struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    transform: GeoTransform,
    width: usize,
    palette: Vec<Palette>,
    cells: Vec<Rect>,
    profiles: Vec<Vec<(f64, f64)>>,
    segments: Vec<Segment>,
}

impl Ctx<'_> {
    fn iri_at(&self, road: usize, chainage: f64) -> f64 {
        let p = &self.profiles[road];
        if p.is_empty() {
            return IRI_REFERENCE;
        }
        let i = p.partition_point(|&(end, _)| end <= chainage).min(p.len() - 1);
        p[i].1
    }

    fn band(&self, band: usize, rows: std::ops::Range<usize>) -> Vec<u8> {
        let t = &self.transform;
        let px = t.pixel_size_x;
        let w = self.width;
        let n_rows = rows.len();
        let half = self.spec.road_width / 2.0;
        let y_hi = t.origin_y - rows.start as f64 * px;
        let y_lo = t.origin_y - rows.end as f64 * px;

        // nearest centerline within half the road width: (distance, road, chainage)
        let mut hit: Vec<Option<(f64, usize, f64)>> = vec![None; n_rows * w];
        for s in &self.segments {
            if s.a.y.min(s.b.y) - half > y_hi || s.a.y.max(s.b.y) + half < y_lo {
                continue;
            }
            let c0 = (((s.a.x.min(s.b.x) - half - t.origin_x) / px).floor().max(0.0)) as usize;
            let c1 = (((s.a.x.max(s.b.x) + half - t.origin_x) / px).ceil().max(0.0) as usize).min(w);
            let r0 = (((t.origin_y - s.a.y.max(s.b.y) - half) / px)
                .floor()
                .max(rows.start as f64)) as usize;
            let r1 = (((t.origin_y - s.a.y.min(s.b.y) + half) / px).ceil().max(0.0) as usize).min(rows.end);
            let (dx, dy) = (s.b.x - s.a.x, s.b.y - s.a.y);
            let len2 = dx * dx + dy * dy;
            for row in r0..r1 {
                for col in c0..c1 {
                    let p = t.pixel_center(col, row);
                    let u = (((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2).clamp(0.0, 1.0);
                    let q = Point::new(s.a.x + u * dx, s.a.y + u * dy);
                    let d = p.distance(&q);
                    let slot = &mut hit[(row - rows.start) * w + col];
                    if d <= half && slot.is_none_or(|(best, _, _)| d < best) {
                        *slot = Some((d, s.road, s.chainage + u * len2.sqrt()));
                    }
                }
            }
        }

        let band_cells: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i].1 <= y_hi && self.cells[i].3 >= y_lo)
            .collect();
        let strength = self.spec.texture_strength;
        let seed = self.spec.seed;
        let mut rng = substream(seed, TAG_RENDER, band as u64);
        let mut out = Vec::with_capacity(n_rows * w * 3);
        for row in rows.clone() {
            for col in 0..w {
                let p = t.pixel_center(col, row);
                let owner = band_cells.iter().copied().find(|&i| {
                    let c = self.cells[i];
                    c.0 <= p.x && p.x <= c.2 && c.1 <= p.y && p.y <= c.3
                });
                let pal = owner.map_or(
                    Palette {
                        ground: DEFAULT_GROUND,
                        tint: 0.0,
                    },
                    |i| self.palette[i],
                );
                let rgb = match hit[(row - rows.start) * w + col] {
                    Some((_, road, chainage)) => {
                        let iri = strength * self.iri_at(road, chainage) + (1.0 - strength) * IRI_REFERENCE;
                        let z: f64 = rng.sample(StandardNormal);
                        let g = ROAD_BASE + self.palette[road].tint - BRIGHTNESS_PER_IRI * iri
                            + (SPECKLE_BASE + SPECKLE_PER_IRI * iri) * z;
                        [g + 3.0, g, g - 5.0]
                    }
                    None => {
                        let n = 22.0 * value_noise(seed, 0, p.x, p.y, 50.0)
                            + 8.0 * value_noise(seed, 1, p.x, p.y, 12.0);
                        let grain = rng.random_range(-5.0..5.0);
                        let [r, g, b] = pal.ground;
                        [r + n + grain, g + n + grain, b + 0.7 * n + grain]
                    }
                };
                out.extend(rgb.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
            }
        }
        out
    }
}
