use rand::Rng;
use rand_distr::StandardNormal;

use super::{substream, survey_date, ScenarioSpec};
use crate::geo::RoadPolyline;
use crate::survey::IriRecord;

pub const SEGMENT_LENGTH_M: f64 = 100.0;
pub const IRI_MAX: f64 = 40.0;

const TAG_PROFILE: u64 = 2;

/// Survey records every 100 m along `road` (the last one may be shorter).
///
/// Values follow a mean-reverting walk
/// `x' = x + θ(μ − x)Δ + σ√Δ·z`, clipped to `[0, 40]`, with `θ = 1/smoothness`
/// and `σ = spread·√(2θ)` so the walk's spread stays near `iri_spread`.
/// The road mean `μ` is uniform in `iri_mean_range` and the walk starts at
/// a draw around it.
pub fn gen_iri_profile(spec: &ScenarioSpec, road: &RoadPolyline, index: usize) -> Vec<IriRecord> {
    let mut rng = substream(spec.seed, TAG_PROFILE, index as u64);
    let (lo, hi) = spec.iri_mean_range;
    let mu = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let theta = 1.0 / spec.iri_smoothness;
    let sigma = spec.iri_spread * (2.0 * theta).sqrt();
    let dt = SEGMENT_LENGTH_M;

    let total = road.total_length();
    let n = (total / SEGMENT_LENGTH_M).ceil() as usize;
    let z0: f64 = rng.sample(StandardNormal);
    let mut x = (mu + spec.iri_spread * z0).clamp(0.0, IRI_MAX);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k as f64 * SEGMENT_LENGTH_M;
        let end = ((k + 1) as f64 * SEGMENT_LENGTH_M).min(total);
        out.push(IriRecord {
            road_id: road.road_id().to_string(),
            chainage_start: start,
            chainage_end: end,
            iri: x,
            survey_date: survey_date(),
        });
        let z: f64 = rng.sample(StandardNormal);
        x = (x + theta * (mu - x) * dt + sigma * dt.sqrt() * z).clamp(0.0, IRI_MAX);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Point;
    use crate::synth::preset;

    fn road(len: f64) -> RoadPolyline {
        RoadPolyline::new("R", vec![Point::new(0.0, 0.0), Point::new(len, 0.0)]).unwrap()
    }

    #[test]
    fn segments_tile_the_road() {
        let spec = preset("kenya-like").unwrap();
        let recs = gen_iri_profile(&spec, &road(1234.5), 0);
        assert_eq!(recs.len(), 13);
        assert_eq!(recs[0].chainage_start, 0.0);
        assert_eq!(recs.last().unwrap().chainage_end, 1234.5);
        for w in recs.windows(2) {
            assert_eq!(w[0].chainage_end, w[1].chainage_start);
        }
        assert!(recs.iter().all(|r| (0.0..=IRI_MAX).contains(&r.iri)));
        assert!(recs.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn infinite_smoothness_freezes_the_profile() {
        let spec = ScenarioSpec {
            iri_smoothness: f64::INFINITY,
            ..preset("kenya-like").unwrap()
        };
        let recs = gen_iri_profile(&spec, &road(5000.0), 4);
        assert!(recs.iter().all(|r| r.iri == recs[0].iri));
    }
}
