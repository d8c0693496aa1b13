//! Stage implementations. Each reads its inputs from files and writes its
//! outputs atomically; `pipeline` calls the same functions in order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use chrono::NaiveDate;
use rayon::prelude::*;
use roadq::dataset::{
    extract_all, heldout_splits, leakage_check, read_tile_dataset, resize_tiles, segment_runs,
    standard_split, write_tile_dataset, LabeledTile, Run, Side, SplitKind, SplitPlan, TileDataset,
};
use roadq::eval::{
    emit_report, evaluate, heldout_aggregate, read_predictions, write_predictions, BaselineKind, EvalReport,
    ReportDoc, ReportFormat, TilePrediction,
};
use roadq::fsio::write_atomic;
use roadq::geo::{
    load_png_with_world_file, read_raster, read_roads, write_raster, write_roads, RasterImage, RoadPolyline,
};
use roadq::model::{
    embed_tiles, init_model, load_model, predict, read_embeddings, save_model, train, train_head,
    ArchitectureSpec, ClassifierModel, EmbeddingSet, Input, InputKind, EMBEDDING_BACKBONE,
};
use roadq::survey::{parse_survey, temporal_filter, write_survey, IriRecord, SurveyFormat};
use roadq::synth::{generate_scene, preset, write_scene, ScenarioSpec, SceneFiles};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ClassifierKind, PipelineConfig};
use crate::{data_err, usage, Command, Result};

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub reproducible: bool,
    /// `--seed` was passed explicitly.
    pub seed_given: bool,
}

impl Ctx {
    /// Config, seed and stage details stamped into every artifact.
    pub fn provenance(&self, stage: &str, extra: Value) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("tool".into(), json!(concat!("roadq ", env!("CARGO_PKG_VERSION"))));
        m.insert("stage".into(), json!(stage));
        m.insert("seed".into(), json!(self.cfg.seed));
        m.insert(
            "config".into(),
            serde_json::to_value(&self.cfg).expect("config serializes"),
        );
        if !self.reproducible {
            m.insert(
                "created_at".into(),
                json!(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            );
        }
        if let Value::Object(e) = extra {
            m.extend(e);
        }
        Value::Object(m)
    }
}

/// CRC-32 of a file's bytes, as lowercase hex.
pub fn checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("{}", path.display()))?;
    Ok(format!("{:08x}", crc32fast::hash(&bytes)))
}

fn dataset_checksum(path: &Path) -> Result<String> {
    let a = checksum(&path.with_extension("json"))?;
    let b = checksum(&path.with_extension("bin"))?;
    Ok(format!("{a}:{b}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    write_atomic(path, &bytes).with_context(|| format!("{}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn in_file<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> anyhow::Error + '_ {
    move |e| data_err(format!("{}: {e}", path.display()))
}

pub fn load_roads(path: &Path) -> Result<Vec<RoadPolyline>> {
    let roads = read_roads(open(path)?).map_err(in_file(path))?;
    if roads.is_empty() {
        return Err(data_err(format!("{}: no roads", path.display())));
    }
    Ok(roads)
}

fn survey_format(path: &Path, flag: Option<&str>) -> Result<SurveyFormat> {
    match flag {
        Some(f) => f
            .parse()
            .map_err(|e: String| usage(format!("--survey-format: {e}"))),
        None => Ok(match path.extension().and_then(|e| e.to_str()) {
            Some("json") => SurveyFormat::Json,
            _ => SurveyFormat::Csv,
        }),
    }
}

pub fn load_survey(path: &Path, format: SurveyFormat) -> Result<Vec<IriRecord>> {
    parse_survey(open(path)?, format).map_err(in_file(path))
}

pub fn load_raster(path: &Path) -> Result<RasterImage> {
    read_raster(open(path)?).map_err(in_file(path))
}

/// Picks a flag value, falling back to a named config path.
fn pick(flag: &Option<PathBuf>, cfg: &PipelineConfig, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.path(name).map(Path::to_path_buf))
        .ok_or_else(|| usage(format!("missing --{name} (or paths.{name} in the config)")))
}

pub fn dispatch(ctx: &Ctx, command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => {
            let files = synth(ctx, a.preset.as_deref(), a.scenario.as_deref(), &a.out)?;
            println!(
                "wrote scene to {}",
                files.roads.parent().unwrap_or(Path::new(".")).display()
            );
        }
        Command::Ingest(a) => {
            let roads = pick(&a.roads, &ctx.cfg, "roads")?;
            let survey = pick(&a.survey, &ctx.cfg, "survey")?;
            let fmt = survey_format(&survey, a.survey_format.as_deref())?;
            let raster = match (&a.raster, &a.png) {
                (_, Some(png)) => {
                    let world = a.world.as_deref().ok_or_else(|| usage("--png needs --world"))?;
                    let date = a
                        .capture_date
                        .as_deref()
                        .ok_or_else(|| usage("--png needs --capture-date"))?;
                    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                        .map_err(|e| usage(format!("--capture-date {date}: {e}")))?;
                    RasterSource::Png {
                        png: png.clone(),
                        world: world.to_path_buf(),
                        date,
                    }
                }
                (raster, None) => RasterSource::Container(pick(raster, &ctx.cfg, "raster")?),
            };
            let summary = ingest(ctx, &roads, &survey, fmt, &raster, &a.out)?;
            println!(
                "ingested {} roads, kept {} of {} survey records",
                summary.roads, summary.records_kept, summary.records_read
            );
        }
        Command::Tile(a) => {
            let inputs = SceneInputs::resolve(ctx, a.scene.as_deref(), &a.roads, &a.survey, &a.raster)?;
            let ds = tile(ctx, &inputs, &a.out)?;
            println!("wrote {} tiles over {} runs", ds.tiles.len(), ds.runs.len());
        }
        Command::Split(a) => {
            let plans = split(ctx, a.kind, &a.tiles, &a.out)?;
            println!("wrote {} plan file(s) to {}", plans.len(), a.out.display());
        }
        Command::Train(a) => {
            train_cnn(ctx, &a.tiles, &a.plan, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        Command::TrainHead(a) => {
            let emb = match &a.embeddings {
                Some(p) => Embeddings::File(p.clone()),
                None => Embeddings::Trunk,
            };
            train_dense_head(ctx, &a.tiles, &a.plan, &emb, None, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        Command::Predict(a) => {
            let n = predict_tiles(
                &a.model,
                &a.tiles,
                a.plan.as_deref(),
                a.embeddings.as_deref(),
                None,
                &a.out,
            )?;
            println!("wrote {n} predictions");
        }
        Command::Evaluate(a) => {
            let rep = evaluate_plan(ctx, &a.tiles, &a.plan, &a.predictions, &a.out)?;
            println!(
                "{}: accuracy {:.4} over {} tiles",
                rep.split, rep.overall_accuracy, rep.n_tiles
            );
        }
        Command::Report(a) => {
            let format: ReportFormat = a
                .format
                .parse()
                .map_err(|e: String| usage(format!("--format: {e}")))?;
            let baseline: BaselineKind = a
                .baseline
                .parse()
                .map_err(|e: String| usage(format!("--baseline: {e}")))?;
            report(ctx, &a.inputs, format, baseline, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        Command::Pipeline(a) => {
            let which = match a.splits.as_str() {
                "standard" => (true, false),
                "heldout" | "held-out" => (false, true),
                "both" => (true, true),
                other => {
                    return Err(usage(format!(
                        "--splits: unknown value `{other}` (standard|heldout|both)"
                    )))
                }
            };
            let source = match (&a.source.preset, &a.source.scenario, &a.source.scene) {
                (Some(p), _, _) => Source::Preset(p.clone()),
                (_, Some(s), _) => Source::Scenario(s.clone()),
                (_, _, Some(d)) => Source::Scene(d.clone()),
                _ => Source::Config,
            };
            let summary = pipeline(ctx, &source, which, &a.out)?;
            if let Some(acc) = summary.standard_accuracy {
                println!("standard split accuracy {acc:.4}");
            }
            if let Some(acc) = summary.heldout_mean_accuracy {
                println!(
                    "held-out mean accuracy {acc:.4} over {} roads",
                    summary.heldout_splits
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

pub fn synth(
    ctx: &Ctx,
    preset_name: Option<&str>,
    scenario: Option<&Path>,
    out: &Path,
) -> Result<SceneFiles> {
    let mut spec = match (preset_name, scenario) {
        (Some(name), None) => {
            let mut s = preset(name).map_err(|e| usage(format!("--preset: {e}")))?;
            s.seed = ctx.cfg.seed;
            s
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(in_file(path))?;
            ScenarioSpec::from_json(&text).map_err(in_file(path))?
        }
        _ => return Err(usage("synth needs exactly one of --preset or --scenario")),
    };
    if ctx.seed_given {
        spec.seed = ctx.cfg.seed;
    }
    let scene = generate_scene(&spec)?;
    let files = write_scene(&scene, out)?;
    write_json(
        &out.join("provenance.json"),
        &ctx.provenance(
            "synth",
            json!({ "scenario": spec, "effective_seed": scene.effective_seed }),
        ),
    )?;
    Ok(files)
}

// ---------------------------------------------------------------- ingest

pub enum RasterSource {
    Container(PathBuf),
    Png {
        png: PathBuf,
        world: PathBuf,
        date: NaiveDate,
    },
}

#[derive(Debug, Serialize)]
pub struct IngestSummary {
    pub roads: usize,
    pub records_read: usize,
    pub records_kept: usize,
    pub dropped_by_date: usize,
    /// Survey road ids with no matching centerline.
    pub unmatched_survey_roads: Vec<String>,
    pub provenance: Value,
}

/// Validates external inputs and rewrites them in the pipeline's formats,
/// dropping survey records too far in time from the imagery.
pub fn ingest(
    ctx: &Ctx,
    roads_path: &Path,
    survey_path: &Path,
    format: SurveyFormat,
    raster: &RasterSource,
    out: &Path,
) -> Result<IngestSummary> {
    let roads = load_roads(roads_path)?;
    let records = load_survey(survey_path, format)?;
    let (img, raster_sum) = match raster {
        RasterSource::Container(p) => (load_raster(p)?, checksum(p)?),
        RasterSource::Png { png, world, date } => {
            let img = load_png_with_world_file(png, world, *date).map_err(in_file(png))?;
            (img, format!("{}:{}", checksum(png)?, checksum(world)?))
        }
    };
    let (kept, dropped) = temporal_filter(&records, img.capture_date(), ctx.cfg.max_gap_days);
    if kept.is_empty() {
        return Err(data_err(format!(
            "{}: no survey record lies within {} days of the imagery date {}",
            survey_path.display(),
            ctx.cfg.max_gap_days,
            img.capture_date()
        )));
    }
    let known: std::collections::BTreeSet<&str> = roads.iter().map(|r| r.road_id()).collect();
    let mut unmatched: Vec<String> = kept
        .iter()
        .filter(|r| !known.contains(r.road_id.as_str()))
        .map(|r| r.road_id.clone())
        .collect();
    unmatched.sort();
    unmatched.dedup();

    std::fs::create_dir_all(out).map_err(in_file(out))?;
    let files = SceneFiles::in_dir(out);
    let mut buf = Vec::new();
    write_roads(&roads, &mut buf)?;
    write_atomic(&files.roads, &buf)?;
    buf.clear();
    write_survey(&kept, SurveyFormat::Csv, &mut buf)?;
    write_atomic(&files.survey, &buf)?;
    buf.clear();
    write_raster(&img, &mut buf)?;
    write_atomic(&files.raster, &buf)?;

    let summary = IngestSummary {
        roads: roads.len(),
        records_read: records.len(),
        records_kept: kept.len(),
        dropped_by_date: dropped,
        unmatched_survey_roads: unmatched,
        provenance: ctx.provenance(
            "ingest",
            json!({ "inputs": {
                "roads": checksum(roads_path)?,
                "survey": checksum(survey_path)?,
                "raster": raster_sum,
            }}),
        ),
    };
    write_json(&out.join("ingest.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- tile

pub struct SceneInputs {
    pub roads: PathBuf,
    pub survey: PathBuf,
    pub raster: PathBuf,
}

impl SceneInputs {
    pub fn in_dir(dir: &Path) -> Self {
        let f = SceneFiles::in_dir(dir);
        Self {
            roads: f.roads,
            survey: f.survey,
            raster: f.raster,
        }
    }

    fn resolve(
        ctx: &Ctx,
        scene: Option<&Path>,
        roads: &Option<PathBuf>,
        survey: &Option<PathBuf>,
        raster: &Option<PathBuf>,
    ) -> Result<Self> {
        let scene = scene.or_else(|| ctx.cfg.path("scene"));
        let base = scene.map(Self::in_dir);
        let get = |flag: &Option<PathBuf>, name: &str, from_scene: Option<&PathBuf>| match (flag, from_scene)
        {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(p)) => Ok(p.clone()),
            (None, None) => pick(flag, &ctx.cfg, name),
        };
        Ok(Self {
            roads: get(roads, "roads", base.as_ref().map(|b| &b.roads))?,
            survey: get(survey, "survey", base.as_ref().map(|b| &b.survey))?,
            raster: get(raster, "raster", base.as_ref().map(|b| &b.raster))?,
        })
    }
}

/// Segments roads into runs and cuts labeled tiles.
pub fn tile(ctx: &Ctx, inputs: &SceneInputs, out: &Path) -> Result<TileDataset> {
    let cfg = &ctx.cfg;
    let roads = load_roads(&inputs.roads)?;
    let records = load_survey(&inputs.survey, survey_format(&inputs.survey, None)?)?;
    let img = load_raster(&inputs.raster)?;
    let (records, dropped) = temporal_filter(&records, img.capture_date(), cfg.max_gap_days);

    let runs: Vec<Run> = roads
        .iter()
        .flat_map(|r| segment_runs(r, cfg.run_length_m))
        .collect();
    let ex = extract_all(&roads, &img, &records, cfg.tile_px, &runs);
    if ex.tiles.is_empty() {
        return Err(data_err(format!(
            "{}: no tiles could be labeled ({} outside the raster, {} without survey coverage)",
            inputs.survey.display(),
            ex.skips.out_of_bounds,
            ex.skips.no_survey_coverage
        )));
    }
    let tiles = if cfg.resize_to_224 {
        resize_tiles(ex.tiles, 224)
    } else {
        ex.tiles
    };
    let ds = TileDataset {
        tile_px: cfg.stored_tile_px(),
        source_tile_px: cfg.tile_px,
        run_length_m: cfg.run_length_m,
        runs,
        tiles,
        skips: ex.skips,
        provenance: ctx.provenance(
            "tile",
            json!({
                "inputs": {
                    "roads": checksum(&inputs.roads)?,
                    "survey": checksum(&inputs.survey)?,
                    "raster": checksum(&inputs.raster)?,
                },
                "survey_records_dropped_by_date": dropped,
            }),
        ),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(in_file(dir))?;
    }
    write_tile_dataset(out, &ds)?;
    Ok(ds)
}

pub fn load_tiles(path: &Path) -> Result<TileDataset> {
    Ok(read_tile_dataset(path)?)
}

// ---------------------------------------------------------------- split

/// A split plan as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    #[serde(flatten)]
    pub plan: SplitPlan,
    #[serde(default)]
    pub provenance: Value,
}

pub fn load_plan(path: &Path) -> Result<SplitPlan> {
    let f: PlanFile = serde_json::from_reader(open(path)?).map_err(in_file(path))?;
    Ok(f.plan)
}

fn check_clean(plan: &SplitPlan, tiles: &[LabeledTile], origin: &Path) -> Result<()> {
    let report = leakage_check(plan, tiles).map_err(in_file(origin))?;
    if !report.is_clean() {
        return Err(data_err(format!(
            "{}: plan {} leaks between train and test: {}",
            origin.display(),
            plan.label(),
            serde_json::to_string(&report)?
        )));
    }
    Ok(())
}

/// Writes `standard.json`, or one `heldout-<road>.json` per road, into `out`.
pub fn split(ctx: &Ctx, kind: SplitKind, tiles: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_tiles(tiles)?;
    let plans = match kind {
        SplitKind::Standard => {
            vec![standard_split(&ds.runs, ctx.cfg.seed, ctx.cfg.train_fraction).map_err(in_file(tiles))?]
        }
        SplitKind::Heldout => heldout_splits(&ds.runs).map_err(in_file(tiles))?,
    };
    let source = dataset_checksum(tiles)?;
    let mut written = Vec::with_capacity(plans.len());
    for plan in plans {
        check_clean(&plan, &ds.tiles, tiles)?;
        let path = out.join(format!("{}.json", plan.label()));
        let file = PlanFile {
            provenance: ctx.provenance(
                "split",
                json!({
                    "tiles": source,
                    "train_runs": plan.count(Side::Train),
                    "test_runs": plan.count(Side::Test),
                }),
            ),
            plan,
        };
        write_json(&path, &file)?;
        written.push(path);
    }
    Ok(written)
}

fn sides<'a>(
    ds: &'a TileDataset,
    plan: &SplitPlan,
    origin: &Path,
) -> Result<(Vec<&'a LabeledTile>, Vec<&'a LabeledTile>)> {
    let index = plan.index();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for t in &ds.tiles {
        match index.get(&t.run_key()) {
            Some(Side::Train) => train.push(t),
            Some(Side::Test) => test.push(t),
            None => {
                return Err(data_err(format!(
                    "{}: tile {} lies on run {}#{}, which the plan does not assign",
                    origin.display(),
                    t.tile_id,
                    t.road_id,
                    t.run_index
                )))
            }
        }
    }
    Ok((train, test))
}

// ---------------------------------------------------------------- train

pub fn train_cnn(ctx: &Ctx, tiles: &Path, plan_path: &Path, out: &Path) -> Result<ClassifierModel> {
    let cfg = &ctx.cfg;
    let ds = load_tiles(tiles)?;
    let plan = load_plan(plan_path)?;
    check_clean(&plan, &ds.tiles, plan_path)?;
    let (train_tiles, _) = sides(&ds, &plan, plan_path)?;
    let inputs: Vec<Input> = train_tiles.iter().map(|t| Input::from(&t.pixels)).collect();
    let labels: Vec<usize> = train_tiles.iter().map(|t| t.label(cfg.task)).collect();

    let arch = ArchitectureSpec::native_cnn(ds.tile_px, cfg.task.num_classes());
    let mut init = init_model(&arch, cfg.seed)?;
    init.provenance = ctx.provenance(
        "train",
        json!({
            "task": cfg.task,
            "split": plan.label(),
            "tiles": dataset_checksum(tiles)?,
            "plan": checksum(plan_path)?,
            "n_train": inputs.len(),
        }),
    );
    let outcome = train(&init, &inputs, &labels, &cfg.train_config())
        .map_err(|e| data_err(format!("training on {}: {e}", plan_path.display())))?;
    let mut model = outcome.model;
    model.provenance["loss_trace"] = json!(outcome.loss_trace);
    save_model_to(&model, out)?;
    Ok(model)
}

fn save_model_to(model: &ClassifierModel, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(in_file(dir))?;
    }
    save_model(model, out).map_err(in_file(out))
}

/// Where a dense head gets its feature vectors.
pub enum Embeddings {
    File(PathBuf),
    /// Computed by a frozen, randomly initialized CNN trunk seeded with the config seed.
    Trunk,
}

fn trunk(tile_px: usize, seed: u64) -> Result<ClassifierModel> {
    Ok(init_model(&ArchitectureSpec::native_cnn(tile_px, 2), seed)?)
}

/// Embeds tiles with the frozen trunk for `seed`.
pub fn trunk_embeddings(tiles: &[&LabeledTile], tile_px: usize, seed: u64) -> Result<EmbeddingSet> {
    let model = trunk(tile_px, seed)?;
    let pairs: Vec<(&str, &roadq::geo::PixelBlock)> =
        tiles.iter().map(|t| (t.tile_id.as_str(), &t.pixels)).collect();
    Ok(embed_tiles(&model, &pairs)?)
}

fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    read_embeddings(open(path)?, "external").map_err(in_file(path))
}

/// Trains a dense head on a plan's Train tiles. `cached` holds trunk
/// embeddings already computed for this dataset and seed.
pub fn train_dense_head(
    ctx: &Ctx,
    tiles: &Path,
    plan_path: &Path,
    source: &Embeddings,
    cached: Option<&EmbeddingSet>,
    out: &Path,
) -> Result<ClassifierModel> {
    let cfg = &ctx.cfg;
    let ds = load_tiles(tiles)?;
    let plan = load_plan(plan_path)?;
    check_clean(&plan, &ds.tiles, plan_path)?;
    let (train_tiles, _) = sides(&ds, &plan, plan_path)?;
    let (emb, origin) = match source {
        Embeddings::File(p) => (
            load_embeddings(p)?,
            json!({ "source": "file", "checksum": checksum(p)? }),
        ),
        Embeddings::Trunk => {
            let emb = match cached {
                Some(e) => e.clone(),
                None => trunk_embeddings(&train_tiles, ds.tile_px, cfg.seed)?,
            };
            (
                emb,
                json!({ "source": EMBEDDING_BACKBONE, "trunk_seed": cfg.seed, "tile_px": ds.tile_px }),
            )
        }
    };
    let labels: Vec<(String, usize)> = train_tiles
        .iter()
        .map(|t| (t.tile_id.clone(), t.label(cfg.task)))
        .collect();
    let outcome = train_head(
        &emb,
        &labels,
        cfg.head_layers,
        cfg.head_hidden,
        cfg.task.num_classes(),
        &cfg.train_config(),
    )
    .map_err(|e| data_err(format!("training head on {}: {e}", plan_path.display())))?;
    let mut model = outcome.model;
    model.provenance = ctx.provenance(
        "train-head",
        json!({
            "task": cfg.task,
            "split": plan.label(),
            "tiles": dataset_checksum(tiles)?,
            "plan": checksum(plan_path)?,
            "n_train": labels.len(),
            "embedding": origin,
            "loss_trace": outcome.loss_trace,
        }),
    );
    save_model_to(&model, out)?;
    Ok(model)
}

// ---------------------------------------------------------------- predict

/// Predicts the plan's Test tiles (or all tiles) and writes `tile_id,class,p0..`.
pub fn predict_tiles(
    model_path: &Path,
    tiles: &Path,
    plan_path: Option<&Path>,
    embeddings: Option<&Path>,
    cached: Option<&EmbeddingSet>,
    out: &Path,
) -> Result<usize> {
    let model = load_model(model_path).map_err(in_file(model_path))?;
    let ds = load_tiles(tiles)?;
    let chosen: Vec<&LabeledTile> = match plan_path {
        Some(p) => sides(&ds, &load_plan(p)?, p)?.1,
        None => ds.tiles.iter().collect(),
    };
    let preds = match model.arch.input {
        InputKind::Image { .. } => {
            let inputs: Vec<Input> = chosen.iter().map(|t| Input::from(&t.pixels)).collect();
            predict(&model, &inputs).map_err(in_file(tiles))?
        }
        InputKind::Vector { .. } => {
            let emb = match (embeddings, cached) {
                (Some(p), _) => load_embeddings(p)?,
                (None, Some(e)) => e.clone(),
                (None, None) => {
                    let e = &model.provenance["embedding"];
                    let (Some(seed), Some(px)) = (e["trunk_seed"].as_u64(), e["tile_px"].as_u64()) else {
                        return Err(usage(format!(
                            "{} consumes embedding vectors; pass --embeddings",
                            model_path.display()
                        )));
                    };
                    if px as usize != ds.tile_px {
                        return Err(data_err(format!(
                            "{}: model trunk expects {px} px tiles, dataset has {} px",
                            model_path.display(),
                            ds.tile_px
                        )));
                    }
                    trunk_embeddings(&chosen, ds.tile_px, seed)?
                }
            };
            let rows: Vec<&[f64]> = chosen
                .iter()
                .map(|t| {
                    emb.get(&t.tile_id)
                        .ok_or_else(|| data_err(format!("no embedding for tile {}", t.tile_id)))
                })
                .collect::<Result<_>>()?;
            let inputs: Vec<Input> = rows.into_iter().map(Input::Vector).collect();
            predict(&model, &inputs).map_err(in_file(model_path))?
        }
    };
    let rows: Vec<TilePrediction> = chosen
        .iter()
        .zip(preds)
        .map(|(t, p)| TilePrediction {
            tile_id: t.tile_id.clone(),
            class: p.class,
            probabilities: p.probabilities,
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&rows, &mut buf)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(in_file(dir))?;
    }
    write_atomic(out, &buf).map_err(in_file(out))?;
    Ok(rows.len())
}

// ---------------------------------------------------------------- evaluate / report

pub fn evaluate_plan(
    ctx: &Ctx,
    tiles: &Path,
    plan_path: &Path,
    predictions: &Path,
    out: &Path,
) -> Result<EvalReport> {
    let ds = load_tiles(tiles)?;
    let plan = load_plan(plan_path)?;
    let preds = read_predictions(open(predictions)?).map_err(in_file(predictions))?;
    let mut rep = evaluate(&preds, &ds.tiles, &plan, ctx.cfg.task).map_err(in_file(predictions))?;
    rep.provenance = ctx.provenance(
        "evaluate",
        json!({
            "tiles": dataset_checksum(tiles)?,
            "plan": checksum(plan_path)?,
            "predictions": checksum(predictions)?,
        }),
    );
    write_report(
        ReportDoc::Eval(&rep),
        ReportFormat::Json,
        BaselineKind::Uniform,
        out,
    )?;
    Ok(rep)
}

fn write_report(doc: ReportDoc<'_>, format: ReportFormat, baseline: BaselineKind, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(in_file(dir))?;
    }
    emit_report(doc, format, baseline, out).map_err(in_file(out))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    serde_json::from_reader(open(path)?).map_err(in_file(path))
}

/// One report is re-emitted as is; several are aggregated as held-out splits.
pub fn report(
    ctx: &Ctx,
    inputs: &[PathBuf],
    format: ReportFormat,
    baseline: BaselineKind,
    out: &Path,
) -> Result<()> {
    let reports: Vec<EvalReport> = inputs.iter().map(|p| load_report(p)).collect::<Result<_>>()?;
    if let [single] = &reports[..] {
        return write_report(ReportDoc::Eval(single), format, baseline, out);
    }
    let mut summary = heldout_aggregate(&reports)?;
    let mut sums = BTreeMap::new();
    for (p, r) in inputs.iter().zip(&reports) {
        sums.insert(r.split.clone(), checksum(p)?);
    }
    summary.provenance = ctx.provenance("report", json!({ "inputs": sums }));
    write_report(ReportDoc::Heldout(&summary), format, baseline, out)
}

// ---------------------------------------------------------------- pipeline

pub enum Source {
    Preset(String),
    Scenario(PathBuf),
    Scene(PathBuf),
    /// Roads, survey and raster from the config's `paths`.
    Config,
}

#[derive(Debug, Serialize)]
pub struct PipelineSummary {
    pub standard_accuracy: Option<f64>,
    pub heldout_mean_accuracy: Option<f64>,
    pub heldout_splits: usize,
    /// Relative path and CRC-32 of every artifact written.
    pub artifacts: BTreeMap<String, String>,
    pub provenance: Value,
}

/// Runs synth (when asked), tile, split, train, predict, evaluate and
/// report, writing everything below `out`.
pub fn pipeline(
    ctx: &Ctx,
    source: &Source,
    (standard, heldout): (bool, bool),
    out: &Path,
) -> Result<PipelineSummary> {
    let cfg = &ctx.cfg;
    std::fs::create_dir_all(out).map_err(in_file(out))?;
    let inputs = match source {
        Source::Preset(name) => {
            synth(ctx, Some(name), None, &out.join("scene"))?;
            SceneInputs::in_dir(&out.join("scene"))
        }
        Source::Scenario(path) => {
            synth(ctx, None, Some(path), &out.join("scene"))?;
            SceneInputs::in_dir(&out.join("scene"))
        }
        Source::Scene(dir) => SceneInputs::in_dir(dir),
        Source::Config => SceneInputs::resolve(ctx, None, &None, &None, &None)?,
    };
    let tiles = out.join("tiles.bin");
    let ds = tile(ctx, &inputs, &tiles)?;

    let plans_dir = out.join("plans");
    let mut plans = Vec::new();
    if standard {
        plans.extend(split(ctx, SplitKind::Standard, &tiles, &plans_dir)?);
    }
    if heldout {
        plans.extend(split(ctx, SplitKind::Heldout, &tiles, &plans_dir)?);
    }

    let cached = match cfg.classifier {
        ClassifierKind::Head => {
            let all: Vec<&LabeledTile> = ds.tiles.iter().collect();
            Some(trunk_embeddings(&all, ds.tile_px, cfg.seed)?)
        }
        ClassifierKind::Cnn => None,
    };
    let reports: Vec<EvalReport> = plans
        .par_iter()
        .map(|plan| {
            let label = plan
                .file_stem()
                .and_then(|s| s.to_str())
                .expect("plan files are named by label");
            let model = out.join("models").join(format!("{label}.rqm"));
            let preds = out.join("predictions").join(format!("{label}.csv"));
            match cfg.classifier {
                ClassifierKind::Cnn => {
                    train_cnn(ctx, &tiles, plan, &model)?;
                }
                ClassifierKind::Head => {
                    train_dense_head(ctx, &tiles, plan, &Embeddings::Trunk, cached.as_ref(), &model)?;
                }
            }
            predict_tiles(&model, &tiles, Some(plan), None, cached.as_ref(), &preds)?;
            evaluate_plan(
                ctx,
                &tiles,
                plan,
                &preds,
                &out.join("reports").join(format!("{label}.json")),
            )
        })
        .collect::<Result<_>>()?;

    let reports_dir = out.join("reports");
    let mut standard_accuracy = None;
    let mut heldout_mean_accuracy = None;
    let mut heldout_splits = 0;
    if let Some(i) = reports.iter().position(|r| r.split_kind == SplitKind::Standard) {
        let input = [reports_dir.join(plans[i].file_name().expect("plan name"))];
        for (fmt, name) in [
            (ReportFormat::Csv, "standard.csv"),
            (ReportFormat::ScatterCsv, "standard-scatter.csv"),
        ] {
            report(ctx, &input, fmt, BaselineKind::Uniform, &reports_dir.join(name))?;
        }
        standard_accuracy = Some(reports[i].overall_accuracy);
    }
    let held: Vec<PathBuf> = plans
        .iter()
        .zip(&reports)
        .filter(|(_, r)| r.split_kind == SplitKind::Heldout)
        .map(|(p, _)| reports_dir.join(p.file_name().expect("plan name")))
        .collect();
    if !held.is_empty() {
        for (fmt, name) in [
            (ReportFormat::Json, "heldout-summary.json"),
            (ReportFormat::Csv, "heldout-summary.csv"),
            (ReportFormat::ScatterCsv, "heldout-scatter.csv"),
        ] {
            report(ctx, &held, fmt, BaselineKind::Uniform, &reports_dir.join(name))?;
        }
        let h: Vec<&EvalReport> = reports
            .iter()
            .filter(|r| r.split_kind == SplitKind::Heldout)
            .collect();
        heldout_mean_accuracy = Some(h.iter().map(|r| r.overall_accuracy).sum::<f64>() / h.len() as f64);
        heldout_splits = h.len();
    }

    let mut artifacts = BTreeMap::new();
    collect_checksums(out, out, &mut artifacts)?;
    let summary = PipelineSummary {
        standard_accuracy,
        heldout_mean_accuracy,
        heldout_splits,
        artifacts,
        provenance: ctx.provenance("pipeline", Value::Null),
    };
    write_json(&out.join("pipeline.json"), &summary)?;
    Ok(summary)
}

fn collect_checksums(root: &Path, dir: &Path, into: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_checksums(root, &path, into)?;
        } else if path.file_name().is_some_and(|n| n != "pipeline.json") {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            into.insert(key, checksum(&path)?);
        }
    }
    Ok(())
}
