use serde::{Deserialize, Serialize};

use super::{GeoError, Point};

/// Projected road centerline with cumulative chainage per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyline", into = "RawPolyline")]
pub struct RoadPolyline {
    road_id: String,
    vertices: Vec<Point>,
    chainage: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolyline {
    road_id: String,
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<RawPolyline> for RoadPolyline {
    type Error = GeoError;

    fn try_from(raw: RawPolyline) -> Result<Self, Self::Error> {
        let vertices = raw.vertices.iter().map(|v| Point::new(v[0], v[1])).collect();
        RoadPolyline::new(raw.road_id, vertices)
    }
}

impl From<RoadPolyline> for RawPolyline {
    fn from(r: RoadPolyline) -> Self {
        RawPolyline {
            road_id: r.road_id,
            vertices: r.vertices.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl RoadPolyline {
    pub fn new(road_id: impl Into<String>, vertices: Vec<Point>) -> Result<Self, GeoError> {
        let road_id = road_id.into();
        let invalid = |reason: String| GeoError::InvalidPolyline {
            road_id: road_id.clone(),
            reason,
        };
        if road_id.is_empty() {
            return Err(invalid("empty road id".into()));
        }
        if vertices.len() < 2 {
            return Err(invalid(format!("{} vertices, need at least 2", vertices.len())));
        }
        if let Some(i) = vertices.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(invalid(format!("vertex {i} is not finite")));
        }
        let mut chainage = Vec::with_capacity(vertices.len());
        chainage.push(0.0);
        for (i, w) in vertices.windows(2).enumerate() {
            let step = w[0].distance(&w[1]);
            if step <= 0.0 {
                return Err(invalid(format!("vertices {i} and {} coincide", i + 1)));
            }
            let prev = chainage[i];
            chainage.push(prev + step);
        }
        Ok(Self {
            road_id,
            vertices,
            chainage,
        })
    }

    pub fn road_id(&self) -> &str {
        &self.road_id
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cumulative_chainage(&self) -> &[f64] {
        &self.chainage
    }

    pub fn total_length(&self) -> f64 {
        *self.chainage.last().expect("at least two vertices")
    }

    /// Locates the point at chainage `s` by linear interpolation.
    ///
    /// Returns vertex `i` exactly when `s` equals its cumulative chainage.
    pub fn chainage_to_point(&self, s: f64) -> Result<Point, GeoError> {
        let length = self.total_length();
        if !(0.0..=length).contains(&s) {
            return Err(GeoError::ChainageOutOfRange { chainage: s, length });
        }
        // last vertex whose chainage is <= s
        let i = self.chainage.partition_point(|&c| c <= s) - 1;
        if i == self.vertices.len() - 1 {
            return Ok(self.vertices[i]);
        }
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let t = (s - self.chainage[i]) / (self.chainage[i + 1] - self.chainage[i]);
        Ok(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t))
    }

    /// Closest point on the centerline to `p`, as (distance, chainage).
    pub fn project(&self, p: Point) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.vertices.windows(2).enumerate() {
            let (d, t) = point_segment(p, w[0], w[1]);
            if d < best.0 {
                let s = self.chainage[i] + t * (self.chainage[i + 1] - self.chainage[i]);
                best = (d, s);
            }
        }
        best
    }
}

/// Distance from `p` to segment `ab` and the clamped parameter of the foot point.
pub(crate) fn point_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    let foot = Point::new(a.x + dx * t, a.y + dy * t);
    (p.distance(&foot), t)
}
