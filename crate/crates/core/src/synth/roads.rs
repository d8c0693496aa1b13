use rand::Rng;
use rand_distr::StandardNormal;

use super::{substream, ScenarioSpec};
use crate::geo::{Point, RoadPolyline};

const STEP_M: f64 = 20.0;
/// Largest heading change per step (radius of curvature >= STEP / MAX_TURN).
const MAX_TURN: f64 = 0.12;
const MAX_HEADING: f64 = 0.5;
/// Pull back toward the lane axis, per meter of lateral offset.
const LATERAL_GAIN: f64 = 0.003;
const TURN_NOISE: f64 = 0.04;
/// Clear ground between neighbouring roads' bounding boxes.
pub(crate) const ROAD_GAP_M: f64 = 40.0;

const TAG_ROADS: u64 = 1;

/// One road drawn at the origin, heading roughly east.
fn wander(spec: &ScenarioSpec, index: usize) -> (f64, Vec<Point>) {
    let mut rng = substream(spec.seed, TAG_ROADS, index as u64);
    let (lo, hi) = spec.length_range;
    let length = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut heading: f64 = rng.random_range(-MAX_HEADING / 2.0..MAX_HEADING / 2.0);
    let mut p = Point::new(0.0, 0.0);
    let mut pts = vec![p];
    let mut done = 0.0;
    while done < length {
        let step = STEP_M.min(length - done);
        let z: f64 = rng.sample(StandardNormal);
        let turn = (-LATERAL_GAIN * p.y - 0.2 * heading + TURN_NOISE * z).clamp(-MAX_TURN, MAX_TURN);
        heading = (heading + turn).clamp(-MAX_HEADING, MAX_HEADING);
        p = Point::new(p.x + step * heading.cos(), p.y + step * heading.sin());
        pts.push(p);
        done += step;
    }
    (length, pts)
}

/// Seeded smooth roads with lengths uniform in the spec's range, packed
/// row by row so the scene stays compact.
pub fn gen_roads(spec: &ScenarioSpec) -> Vec<RoadPolyline> {
    let shapes: Vec<Vec<Point>> = (0..spec.n_roads).map(|i| wander(spec, i).1).collect();
    let bbox = |pts: &[Point]| {
        pts.iter()
            .fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(a, b, c, d), p| {
                (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
            })
    };
    let boxes: Vec<_> = shapes.iter().map(|s| bbox(s)).collect();
    let area: f64 = boxes
        .iter()
        .map(|b| (b.2 - b.0 + ROAD_GAP_M) * (b.3 - b.1 + ROAD_GAP_M))
        .sum();
    let widest = boxes.iter().map(|b| b.2 - b.0).fold(0.0, f64::max);
    let row_width = widest.max(area.sqrt());

    let (mut x, mut y, mut row_height) = (0.0, 0.0, 0.0f64);
    shapes
        .into_iter()
        .zip(boxes)
        .enumerate()
        .map(|(i, (pts, (x0, y0, x1, y1)))| {
            let (w, h) = (x1 - x0, y1 - y0);
            if x > 0.0 && x + w > row_width {
                x = 0.0;
                y += row_height + ROAD_GAP_M;
                row_height = 0.0;
            }
            // rows grow southward; the top of this box sits at -y
            let (dx, dy) = (x - x0, -y - y1);
            let moved = pts.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
            x += w + ROAD_GAP_M;
            row_height = row_height.max(h);
            RoadPolyline::new(format!("R{i:02}"), moved).expect("generated roads are valid polylines")
        })
        .collect()
}
