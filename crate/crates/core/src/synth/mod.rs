//! Seeded synthetic scenes: road networks, roughness profiles and imagery
//! whose road texture tracks IRI.

mod profile;
mod render;
mod roads;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{length_weighted_iri, Span};
use crate::geo::{write_raster, write_roads, GeoError, RasterImage, RoadPolyline};
use crate::survey::{bin_iri, write_survey, IriRecord, QualityClass, SurveyFormat};

pub use profile::{gen_iri_profile, IRI_MAX, SEGMENT_LENGTH_M};
pub use render::{render_raster, RASTER_MARGIN_M};
pub use roads::gen_roads;

/// Capture date stamped on synthetic rasters.
pub fn raster_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 6, 15).expect("valid date")
}

/// Survey date of synthetic records, well inside the default temporal window.
pub fn survey_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 3, 2).expect("valid date")
}

pub const DEFAULT_PIXEL_BUDGET: u64 = 64_000_000;
const MAX_RESEEDS: u32 = 10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("unknown preset {0:?} (separable, kenya-like, null)")]
    UnknownPreset(String),
    #[error("scene needs {pixels} pixels, budget is {budget}")]
    SceneTooLarge { pixels: u64, budget: u64 },
    #[error("no tiles of class {missing:?} after {attempts} seeds")]
    MissingClasses { attempts: u32, missing: Vec<String> },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub n_roads: usize,
    /// Road lengths are uniform in `[min, max]`, meters.
    pub length_range: (f64, f64),
    pub pixel_size: f64,
    /// Correlation length of the roughness profile, meters.
    pub iri_smoothness: f64,
    /// Per-road mean IRI is uniform in this range, m/km.
    pub iri_mean_range: (f64, f64),
    /// Stationary standard deviation of the profile around the road mean.
    #[serde(default = "default_spread")]
    pub iri_spread: f64,
    /// 0 paints every road as if it had the same IRI; 1 paints true IRI.
    pub texture_strength: f64,
    pub road_width: f64,
    /// Give each road its own background palette and surface tint.
    pub confound_per_road: bool,
    /// Re-seed until every quality class appears among 64 px tiles.
    #[serde(default)]
    pub require_class_coverage: bool,
    #[serde(default = "default_budget")]
    pub max_pixels: u64,
}

fn default_spread() -> f64 {
    5.0
}

fn default_budget() -> u64 {
    DEFAULT_PIXEL_BUDGET
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let (lo, hi) = self.length_range;
        if self.n_roads == 0 {
            return bad("n_roads must be at least 1".into());
        }
        if !(lo >= 200.0 && hi >= lo && hi.is_finite()) {
            return bad(format!(
                "length range ({lo}, {hi}) must satisfy 200 <= min <= max"
            ));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return bad(format!("pixel size {} must be positive", self.pixel_size));
        }
        // the Euler step θΔ must not overshoot the mean
        if self.iri_smoothness.is_nan() || self.iri_smoothness < SEGMENT_LENGTH_M {
            return bad(format!(
                "iri_smoothness {} must be at least {SEGMENT_LENGTH_M} m",
                self.iri_smoothness
            ));
        }
        let (mlo, mhi) = self.iri_mean_range;
        if !(0.0 <= mlo && mlo <= mhi && mhi <= IRI_MAX) {
            return bad(format!(
                "iri mean range ({mlo}, {mhi}) must lie within [0, {IRI_MAX}]"
            ));
        }
        if !(self.iri_spread >= 0.0 && self.iri_spread.is_finite()) {
            return bad(format!("iri spread {} must be non-negative", self.iri_spread));
        }
        if !(0.0..=1.0).contains(&self.texture_strength) {
            return bad(format!(
                "texture strength {} outside [0, 1]",
                self.texture_strength
            ));
        }
        if !(self.road_width > 0.0 && self.road_width <= 100.0) {
            return bad(format!("road width {} must be in (0, 100] m", self.road_width));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| SynthError::Format(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }
}

/// Named scenario presets.
///
/// * `separable`: 6 short roads, full texture signal, shared palette.
/// * `kenya-like`: 21 roads totalling about 115 km, texture 0.7, one palette per road.
/// * `null`: 12 roads of 2 to 5 km, no texture signal, shared palette.
pub fn preset(name: &str) -> Result<ScenarioSpec, SynthError> {
    let base = ScenarioSpec {
        name: name.to_string(),
        seed: 0,
        n_roads: 21,
        length_range: (3000.0, 8000.0),
        pixel_size: 0.5,
        iri_smoothness: 1500.0,
        iri_mean_range: (3.0, 28.0),
        iri_spread: default_spread(),
        texture_strength: 0.7,
        road_width: 8.0,
        confound_per_road: true,
        require_class_coverage: true,
        max_pixels: DEFAULT_PIXEL_BUDGET,
    };
    match name {
        "separable" => Ok(ScenarioSpec {
            n_roads: 6,
            length_range: (1200.0, 2000.0),
            texture_strength: 1.0,
            road_width: 10.0,
            confound_per_road: false,
            require_class_coverage: false,
            ..base
        }),
        "kenya-like" => Ok(base),
        "null" => Ok(ScenarioSpec {
            n_roads: 12,
            length_range: (2000.0, 5000.0),
            texture_strength: 0.0,
            confound_per_road: false,
            require_class_coverage: false,
            ..base
        }),
        _ => Err(SynthError::UnknownPreset(name.to_string())),
    }
}

/// Independent generator for one purpose (`tag`) and item (`index`).
pub(crate) fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 40) ^ index);
    rng
}

/// A generated scenario: roads, survey records and imagery.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: ScenarioSpec,
    /// Seed actually used; differs from `spec.seed` after class-coverage re-seeding.
    pub effective_seed: u64,
    pub roads: Vec<RoadPolyline>,
    pub records: Vec<IriRecord>,
    pub raster: RasterImage,
}

/// Quality classes of the 64 px tiles a scene would yield, from survey
/// records alone.
fn tile_classes(spec: &ScenarioSpec, roads: &[RoadPolyline], records: &[IriRecord]) -> [bool; 5] {
    let extent = 64.0 * spec.pixel_size;
    let mut seen = [false; 5];
    for road in roads {
        let recs: Vec<IriRecord> = records
            .iter()
            .filter(|r| r.road_id == road.road_id())
            .cloned()
            .collect();
        let mut k = 0.0;
        while (k + 1.0) * extent <= road.total_length() {
            if let Some(iri) = length_weighted_iri(&recs, Span::new(k * extent, (k + 1.0) * extent)) {
                seen[bin_iri(iri).expect("profile values are in range").ordinal()] = true;
            }
            k += 1.0;
        }
    }
    seen
}

/// Generates roads, profiles and raster for `spec`.
pub fn generate_scene(spec: &ScenarioSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let mut attempt = 0;
    loop {
        let seed = if attempt == 0 {
            spec.seed
        } else {
            substream(spec.seed, 0xC1A55, attempt as u64).next_u64()
        };
        let mut s = spec.clone();
        s.seed = seed;
        let roads = gen_roads(&s);
        let records: Vec<IriRecord> = roads
            .iter()
            .enumerate()
            .flat_map(|(i, r)| gen_iri_profile(&s, r, i))
            .collect();
        if spec.require_class_coverage {
            let seen = tile_classes(&s, &roads, &records);
            if seen.iter().any(|&b| !b) {
                attempt += 1;
                if attempt >= MAX_RESEEDS {
                    return Err(SynthError::MissingClasses {
                        attempts: attempt,
                        missing: QualityClass::ALL
                            .iter()
                            .filter(|c| !seen[c.ordinal()])
                            .map(|c| c.name().to_string())
                            .collect(),
                    });
                }
                continue;
            }
        }
        let raster = render_raster(&s, &roads, &records)?;
        return Ok(Scene {
            spec: spec.clone(),
            effective_seed: seed,
            roads,
            records,
            raster,
        });
    }
}

/// Paths written by [`write_scene`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFiles {
    pub scenario: PathBuf,
    pub roads: PathBuf,
    pub survey: PathBuf,
    pub raster: PathBuf,
}

impl SceneFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            scenario: dir.join("scenario.json"),
            roads: dir.join("roads.json"),
            survey: dir.join("survey.csv"),
            raster: dir.join("raster.rqr"),
        }
    }
}

#[derive(Serialize)]
struct ScenarioFile<'a> {
    spec: &'a ScenarioSpec,
    effective_seed: u64,
    raster_width: usize,
    raster_height: usize,
}

/// Writes the scene in the ingest formats: roads JSON, survey CSV and a
/// raster container, plus the scenario that produced them.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<SceneFiles, SynthError> {
    std::fs::create_dir_all(dir)?;
    let files = SceneFiles::in_dir(dir);
    let meta = ScenarioFile {
        spec: &scene.spec,
        effective_seed: scene.effective_seed,
        raster_width: scene.raster.width(),
        raster_height: scene.raster.height(),
    };
    let mut json = serde_json::to_vec_pretty(&meta).expect("scenario serializes");
    json.push(b'\n');
    crate::fsio::write_atomic(&files.scenario, &json)?;

    let mut buf = Vec::new();
    write_roads(&scene.roads, &mut buf)?;
    crate::fsio::write_atomic(&files.roads, &buf)?;

    buf.clear();
    write_survey(&scene.records, SurveyFormat::Csv, &mut buf)
        .map_err(|e| SynthError::Format(e.to_string()))?;
    crate::fsio::write_atomic(&files.survey, &buf)?;

    buf.clear();
    write_raster(&scene.raster, &mut buf)?;
    crate::fsio::write_atomic(&files.raster, &buf)?;
    Ok(files)
}
