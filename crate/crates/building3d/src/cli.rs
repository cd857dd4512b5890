//! The `building3d` command line.
//!
//! Every flag can also come from `--config <json>`, a flat object keyed by
//! the flag's long name in snake case; flags given on the command line win.
//! Progress and errors go to stderr as one JSON object per line. Exit codes:
//! 0 success, 1 internal or check failure, 2 usage or input error.

use std::io::Write;
use std::path::{Path, PathBuf};

use building3d_core::grad::{grad_check, train_toy, ToyConfig, GRAD_OPS};
use building3d_core::mask::{binarize, connected_components, extract_labeled_contours, simplify, Connectivity};
use building3d_core::metrics::{evaluate_with, EvalOptions};
use building3d_core::recon::{make_synthetic_scene, render_image, HeightStat, SceneSpec};
use building3d_core::sffde::{SffdeConfig, SffdeParams};
use building3d_core::{Geotransform, Grid, Raster};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::asc::{write_asc, AscOptions};
use crate::error::Error;
use crate::geojson::footprints_geojson;
use crate::image_io::write_image;
use crate::pipeline::{self, Emit, Estimator, ReconSettings, TileSettings};
use crate::ply::PlyFormat;
use crate::raster_io::{load_raster, save_raster, RasterFormat};
use crate::weights::{load_weights, save_weights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "building3d", version, about = "Elevation estimation and LOD1 building reconstruction from single images")]
pub struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tile an image through the network (or pass a DSM through), fuse, smooth, write .asc.
    Estimate(EstimateArgs),
    /// Compare a predicted elevation raster with ground truth.
    Evaluate(EvaluateArgs),
    /// Threshold a label raster into a building mask and optional footprints.
    ExtractMask(ExtractMaskArgs),
    /// Point cloud, mesh and LOD1 CityGML from an elevation raster and a mask.
    Reconstruct(ReconstructArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Train the registration block and head on synthetic scenes.
    TrainToy(TrainToyArgs),
    /// Write seeded initial network weights.
    InitWeights(InitWeightsArgs),
    /// Write a seeded synthetic scene (DSM, mask, image, prism list).
    SynthScene(SynthSceneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatArg {
    Median,
    Mean,
    Max,
}

impl From<StatArg> for HeightStat {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Median => HeightStat::Median,
            StatArg::Mean => HeightStat::Mean,
            StatArg::Max => HeightStat::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlyArg {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Small,
    Default,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TileArgs {
    /// Tile side in pixels [default: 512].
    #[arg(long)]
    pub tile: Option<usize>,
    /// Overlap between neighbouring tiles in pixels [default: 64].
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Gaussian smoothing sigma in pixels; 0 disables [default: 2].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Worker threads; 0 uses every core [default: 0].
    #[arg(long)]
    pub workers: Option<usize>,
}

impl TileArgs {
    fn resolve(&self) -> Result<TileSettings, Failure> {
        let d = TileSettings::default();
        let s = TileSettings {
            tile: self.tile.unwrap_or(d.tile),
            overlap: self.overlap.unwrap_or(d.overlap),
            sigma: self.sigma.unwrap_or(d.sigma),
            workers: self.workers.unwrap_or(d.workers),
        };
        if s.tile <= s.overlap {
            return Err(Failure::usage("tile must exceed overlap"));
        }
        if !(s.sigma >= 0.0 && s.sigma.is_finite()) {
            return Err(Failure::usage("sigma must be finite and >= 0"));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Input image (.png/.pgm, 8-bit, channel count must match the model).
    #[arg(long, conflicts_with = "oracle_dsm")]
    pub image: Option<PathBuf>,
    /// Weights manifest written by `init-weights`.
    #[arg(long, conflicts_with = "oracle_dsm")]
    pub weights: Option<PathBuf>,
    /// Ground-truth DSM substituted for the network output.
    #[arg(long)]
    pub oracle_dsm: Option<PathBuf>,
    /// Output elevation raster (.asc).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tiles: TileArgs,
    /// Significant digits for .asc values [default: lossless].
    #[arg(long)]
    pub precision: Option<usize>,
    /// Pixel size for inputs without georeferencing [default: 1].
    #[arg(long)]
    pub pixel_size: Option<f64>,
    /// World x of the west edge for inputs without georeferencing [default: 0].
    #[arg(long)]
    pub origin_x: Option<f64>,
    /// World y of the north edge for inputs without georeferencing [default: 0].
    #[arg(long)]
    pub origin_y: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Restrict to pixels where this raster is positive.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// RMSE over every finite pixel, not only those valid for the ratio metrics.
    #[arg(long)]
    pub rmse_over_all: bool,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ContourArgs {
    /// Smallest component kept, in pixels [default: 20].
    #[arg(long)]
    pub min_area: Option<usize>,
    /// Pixel connectivity for components, 4 or 8 [default: 8].
    #[arg(long, value_parser = clap::value_parser!(u8).range(4..=8))]
    pub connectivity: Option<u8>,
    /// Douglas-Peucker tolerance in world units; 0 keeps pixel-exact rings [default: 0].
    #[arg(long)]
    pub simplify: Option<f64>,
}

impl ContourArgs {
    fn connectivity(&self) -> Result<Connectivity, Failure> {
        match self.connectivity.unwrap_or(8) {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            n => Err(Failure::usage(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }

    fn tolerance(&self) -> Result<f64, Failure> {
        let t = self.simplify.unwrap_or(0.0);
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Failure::usage("simplify must be finite and >= 0"));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExtractMaskArgs {
    /// Label raster (.png/.pgm/.asc).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label value of the building class [default: 1].
    #[arg(long)]
    pub class_id: Option<f64>,
    /// Output mask: .png/.pgm hold 0/255, .asc holds 0/1.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write footprint rings as GeoJSON.
    #[arg(long)]
    pub polygons: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub contours: ContourArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    /// Elevation raster used as-is (typically from `estimate`).
    #[arg(long, conflicts_with = "oracle_dsm")]
    pub dsm: Option<PathBuf>,
    /// Ground-truth DSM run through tiling, fusion and smoothing first.
    #[arg(long)]
    pub oracle_dsm: Option<PathBuf>,
    /// Building mask; positive pixels are buildings.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Optional image for point colours (8-bit).
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub tiles: TileArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub contours: ContourArgs,
    /// Roof height statistic per building [default: median].
    #[arg(long, value_enum)]
    pub stat: Option<StatArg>,
    /// Ground elevation of every building [default: 0].
    #[arg(long)]
    pub base: Option<f64>,
    /// EPSG code recorded as the CityGML srsName.
    #[arg(long)]
    pub epsg: Option<u32>,
    /// PLY encoding [default: binary].
    #[arg(long, value_enum)]
    pub ply_format: Option<PlyArg>,
    /// Artifacts to write: any of ply, obj, citygml, report, or all / none [default: all].
    #[arg(long, value_delimiter = ',')]
    pub emit: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// First seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds [default: 1].
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Tolerance applied to every op instead of the per-op defaults.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Ops to check [default: all].
    #[arg(long, value_delimiter = ',')]
    pub op: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainToyArgs {
    /// Iterations [default: 200].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Seed for weights and scenes [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Momentum [default: 0.9].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Trace output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InitWeightsArgs {
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Architecture preset [default: small].
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// JSON network hyperparameters; overrides the preset.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Manifest path; the buffer goes next to it with extension .bin.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthSceneArgs {
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raster height in pixels [default: 256].
    #[arg(long)]
    pub height: Option<usize>,
    /// Raster width in pixels [default: 256].
    #[arg(long)]
    pub width: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub prisms: Option<usize>,
    /// [default: 3]
    #[arg(long)]
    pub min_height: Option<f64>,
    /// [default: 25]
    #[arg(long)]
    pub max_height: Option<f64>,
    /// Smallest prism side in pixels.
    #[arg(long)]
    pub min_size: Option<usize>,
    /// Largest prism side in pixels.
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Minimum ground pixels between prisms.
    #[arg(long)]
    pub gap: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
pub const CONFIG_KEYS: &[&str] = &[
    "base",
    "class_id",
    "connectivity",
    "dsm",
    "emit",
    "epsg",
    "gap",
    "gt",
    "height",
    "image",
    "iters",
    "labels",
    "lr",
    "mask",
    "max_height",
    "max_size",
    "min_area",
    "min_height",
    "min_size",
    "model_config",
    "momentum",
    "op",
    "oracle_dsm",
    "origin_x",
    "origin_y",
    "out",
    "out_dir",
    "overlap",
    "pixel_size",
    "ply_format",
    "polygons",
    "precision",
    "pred",
    "preset",
    "prisms",
    "rmse_over_all",
    "seed",
    "seeds",
    "sigma",
    "simplify",
    "stat",
    "tile",
    "tol",
    "weights",
    "width",
    "workers",
];

/// A failed command: exit code, the stage that failed and a message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            stage: "arguments",
            message: message.into(),
        }
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| {
            let e = e.into();
            Failure {
                code: if e.is_input_error() { EXIT_USAGE } else { EXIT_FAILURE },
                stage,
                message: e.to_string(),
            }
        })
    }
}

/// Like [`Stage`] but any error counts as bad input.
trait InputStage<T> {
    fn input(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> InputStage<T> for Result<T, E> {
    fn input(self, stage: &'static str) -> Result<T, Failure> {
        self.stage(stage).map_err(|f| Failure { code: EXIT_USAGE, ..f })
    }
}

/// Line-delimited JSON log on stderr.
pub struct Log<'a> {
    command: &'static str,
    out: &'a mut dyn Write,
}

impl Log<'_> {
    pub fn info(&mut self, event: &str, fields: Value) {
        self.emit("info", event, fields);
    }

    pub fn warn(&mut self, event: &str, fields: Value) {
        self.emit("warn", event, fields);
    }

    fn emit(&mut self, level: &str, event: &str, fields: Value) {
        let mut line = Map::new();
        line.insert("level".into(), json!(level));
        line.insert("command".into(), json!(self.command));
        line.insert("event".into(), json!(event));
        if let Value::Object(m) = fields {
            line.extend(m);
        }
        let _ = writeln!(self.out, "{}", Value::Object(line));
    }

    fn error(&mut self, f: &Failure) {
        let line = json!({
            "level": "error",
            "command": self.command,
            "stage": f.stage,
            "code": f.code,
            "error": f.message,
        });
        let _ = writeln!(self.out, "{line}");
    }
}

fn need<'p>(v: &'p Option<PathBuf>, flag: &str) -> Result<&'p Path, Failure> {
    v.as_deref().ok_or_else(|| Failure::usage(format!("missing required --{flag}")))
}

fn existing<'p>(v: &'p Option<PathBuf>, flag: &str) -> Result<&'p Path, Failure> {
    let p = need(v, flag)?;
    if !p.exists() {
        return Err(Failure {
            code: EXIT_USAGE,
            stage: "input",
            message: format!("--{flag}: {} does not exist", p.display()),
        });
    }
    Ok(p)
}

fn read_config(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e)).input("config")?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e)).input("config")?;
    let Value::Object(m) = v else {
        return Err(Failure::usage(format!("{}: config must be a JSON object", path.display())));
    };
    if let Some(k) = m.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Failure::usage(format!("{}: unknown config key `{k}`", path.display())));
    }
    Ok(m)
}

/// Fills every unset field of `args` from `config`.
fn merge<T: Serialize + DeserializeOwned>(args: T, config: &Map<String, Value>) -> Result<T, Failure> {
    let Value::Object(mut fields) = serde_json::to_value(&args).expect("args serialize") else {
        unreachable!("args are structs");
    };
    for (k, v) in fields.iter_mut() {
        if matches!(v, Value::Null | Value::Bool(false)) {
            if let Some(c) = config.get(k) {
                *v = c.clone();
            }
        }
    }
    serde_json::from_value(Value::Object(fields)).map_err(|e| Failure::usage(format!("config: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e)).stage("write")
}

fn estimate(a: EstimateArgs, log: &mut Log) -> Result<(), Failure> {
    let s = a.tiles.resolve()?;
    let out = need(&a.out, "out")?;
    if RasterFormat::from_path(out).ok() != Some(RasterFormat::Asc) {
        return Err(Failure::usage(format!("{}: estimate writes ESRI ASCII grids, use a .asc path", out.display())));
    }
    let opts = AscOptions {
        significant_digits: a.precision,
    };
    if opts.significant_digits == Some(0) {
        return Err(Failure::usage("precision must be >= 1"));
    }
    let params;
    let (input, est) = match (&a.oracle_dsm, &a.image) {
        (Some(_), _) => (load_raster(existing(&a.oracle_dsm, "oracle-dsm")?).input("read-dsm")?, Estimator::Passthrough),
        (None, Some(_)) => {
            let image = load_raster(existing(&a.image, "image")?).input("read-image")?;
            params = load_weights(existing(&a.weights, "weights")?).input("read-weights")?;
            if image.channels() != params.config.in_channels {
                return Err(Failure {
                    code: EXIT_USAGE,
                    stage: "read-image",
                    message: format!("image has {} channels, model expects {}", image.channels(), params.config.in_channels),
                });
            }
            (image, Estimator::Network(&params))
        }
        (None, None) => return Err(Failure::usage("need --image with --weights, or --oracle-dsm")),
    };
    let mut input = input;
    if input.geo.is_none() {
        let ps = a.pixel_size.unwrap_or(1.0);
        let geo = Geotransform::new(a.origin_x.unwrap_or(0.0), a.origin_y.unwrap_or(0.0), ps, ps).input("arguments")?;
        input.geo = Some(geo);
    }
    let plan = building3d_core::raster::plan_tiles(input.height(), input.width(), s.tile, s.overlap).input("plan")?;
    log.info(
        "tiles",
        json!({ "count": plan.anchors.len(), "tile": s.tile, "overlap": s.overlap, "height": input.height(), "width": input.width() }),
    );
    let e = pipeline::estimate(&input, est, s).stage("estimate")?;
    write_asc(&e.elevation, out, opts).stage("write")?;
    log.info("wrote", json!({ "path": out.display().to_string(), "sigma": s.sigma }));
    Ok(())
}

fn evaluate(a: EvaluateArgs, stdout: &mut dyn Write, log: &mut Log) -> Result<(), Failure> {
    let pred = load_raster(existing(&a.pred, "pred")?).input("read-pred")?;
    let gt = load_raster(existing(&a.gt, "gt")?).input("read-gt")?;
    if pred.grid.shape() != gt.grid.shape() || pred.grid.rank() != 2 {
        return Err(Failure {
            code: EXIT_USAGE,
            stage: "input",
            message: format!("pred {:?} and gt {:?} must be equal single-band shapes", pred.grid.shape(), gt.grid.shape()),
        });
    }
    let mut valid: Vec<bool> = pred
        .valid_mask()
        .into_iter()
        .zip(gt.valid_mask())
        .map(|(a, b)| a && b)
        .collect();
    if a.mask.is_some() {
        let m = pipeline::mask_from_raster(&load_raster(existing(&a.mask, "mask")?).input("read-mask")?).input("read-mask")?;
        if (m.height(), m.width()) != (gt.height(), gt.width()) {
            return Err(Failure {
                code: EXIT_USAGE,
                stage: "input",
                message: "mask shape differs from gt".into(),
            });
        }
        for (v, m) in valid.iter_mut().zip(m.as_bools()) {
            *v &= m;
        }
    }
    let opts = EvalOptions {
        rmse_over_all: a.rmse_over_all,
    };
    let report = evaluate_with(&pred.grid, &gt.grid, Some(&valid), opts).input("evaluate")?;
    let line = serde_json::to_string(&report).expect("report serializes");
    writeln!(stdout, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e)).stage("write")?;
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    }
    log.info("evaluated", json!({ "n_valid": report.n_valid, "n_excluded": report.n_excluded }));
    Ok(())
}

fn extract_mask(a: ExtractMaskArgs, log: &mut Log) -> Result<(), Failure> {
    let labels = load_raster(existing(&a.labels, "labels")?).input("read-labels")?;
    let out = need(&a.out, "out")?;
    let format = RasterFormat::from_path(out).input("arguments")?;
    let conn = a.contours.connectivity()?;
    let tol = a.contours.tolerance()?;
    let grid = if labels.grid.rank() == 3 { labels.grid.channel(0).stage("binarize")? } else { labels.grid.clone() };
    let mask = binarize(&grid, a.class_id.unwrap_or(1.0)).stage("binarize")?;
    let on = if format == RasterFormat::Asc { 1.0 } else { 255.0 };
    let mut r = Raster::new(mask.grid().scale(on)).stage("binarize")?;
    r.geo = labels.geo;
    save_raster(&r, out).stage("write")?;
    log.info("mask", json!({ "path": out.display().to_string(), "pixels": mask.count() }));
    if let Some(p) = &a.polygons {
        let geo = labels.geo.unwrap_or_else(Geotransform::unit);
        let comps = connected_components(&mask, conn);
        let mut polys = extract_labeled_contours(&comps, &geo, a.contours.min_area.unwrap_or(building3d_core::mask::DEFAULT_MIN_AREA));
        if tol > 0.0 {
            for poly in &mut polys {
                match simplify(poly, tol) {
                    Ok(q) => *poly = q,
                    Err(e) => log.warn("simplify", json!({ "component": poly.component, "error": e.to_string() })),
                }
            }
        }
        write_text(p, &(serde_json::to_string_pretty(&footprints_geojson(&polys)).expect("json") + "\n"))?;
        log.info("polygons", json!({ "path": p.display().to_string(), "count": polys.len() }));
    }
    Ok(())
}

fn parse_emit(list: &Option<Vec<String>>) -> Result<Emit, Failure> {
    let Some(list) = list else {
        return Ok(Emit::ALL);
    };
    let mut e = Emit::NONE;
    for item in list {
        match item.trim() {
            "all" => e = Emit::ALL,
            "none" | "" => {}
            "ply" => e.ply = true,
            "obj" => e.obj = true,
            "citygml" => e.citygml = true,
            "report" => e.report = true,
            other => return Err(Failure::usage(format!("unknown --emit item `{other}`"))),
        }
    }
    Ok(e)
}

fn reconstruct(a: ReconstructArgs, log: &mut Log) -> Result<(), Failure> {
    let out_dir = need(&a.out_dir, "out-dir")?;
    let settings = ReconSettings {
        stat: a.stat.map(HeightStat::from).unwrap_or_default(),
        base: a.base.unwrap_or(0.0),
        min_area: a.contours.min_area.unwrap_or(building3d_core::mask::DEFAULT_MIN_AREA),
        simplify: a.contours.tolerance()?,
        connectivity: a.contours.connectivity()?,
        epsg: a.epsg,
        ply_format: match a.ply_format {
            Some(PlyArg::Ascii) => PlyFormat::Ascii,
            _ => PlyFormat::BinaryLittleEndian,
        },
        emit: parse_emit(&a.emit)?,
    };
    if !settings.base.is_finite() {
        return Err(Failure::usage("base must be finite"));
    }
    let mask_raster = load_raster(existing(&a.mask, "mask")?).input("read-mask")?;
    let dsm = match (&a.oracle_dsm, &a.dsm) {
        (Some(_), _) => {
            let s = a.tiles.resolve()?;
            let truth = load_raster(existing(&a.oracle_dsm, "oracle-dsm")?).input("read-dsm")?;
            let e = pipeline::estimate(&truth, Estimator::Passthrough, s).stage("estimate")?;
            log.info("tiles", json!({ "count": e.tiles, "sigma": s.sigma }));
            e.elevation
        }
        (None, Some(_)) => load_raster(existing(&a.dsm, "dsm")?).input("read-dsm")?,
        (None, None) => return Err(Failure::usage("need --dsm or --oracle-dsm")),
    };
    if dsm.grid.rank() != 2 {
        return Err(Failure::usage("elevation raster must have one band"));
    }
    let mask = pipeline::mask_from_raster(&mask_raster).input("read-mask")?;
    if (mask.height(), mask.width()) != (dsm.height(), dsm.width()) {
        return Err(Failure {
            code: EXIT_USAGE,
            stage: "input",
            message: format!("mask is {}x{}, elevation is {}x{}", mask.height(), mask.width(), dsm.height(), dsm.width()),
        });
    }
    let image = match &a.image {
        Some(_) => Some(load_raster(existing(&a.image, "image")?).input("read-image")?),
        None => None,
    };
    if let Some(img) = &image {
        if (img.height(), img.width()) != (dsm.height(), dsm.width()) {
            return Err(Failure {
                code: EXIT_USAGE,
                stage: "input",
                message: "image shape differs from elevation".into(),
            });
        }
    }
    let rec = pipeline::reconstruct(&dsm, &mask, image.as_ref(), &settings).stage("reconstruct")?;
    for w in &rec.manifest.warnings {
        log.warn("reconstruct", json!({ "warning": w }));
    }
    pipeline::write_reconstruction(&rec, &settings, out_dir).stage("write")?;
    log.info(
        "wrote",
        json!({ "dir": out_dir.display().to_string(), "buildings": rec.manifest.counts.buildings, "points": rec.manifest.counts.points }),
    );
    Ok(())
}

fn gradcheck(a: GradcheckArgs, stdout: &mut dyn Write, log: &mut Log) -> Result<(), Failure> {
    let ops: Vec<String> = match &a.op {
        Some(v) => v.clone(),
        None => GRAD_OPS.iter().map(|(n, _)| n.to_string()).collect(),
    };
    if let Some(t) = a.tol {
        if !(t > 0.0) {
            return Err(Failure::usage("tol must be > 0"));
        }
    }
    let first = a.seed.unwrap_or(0);
    let n = a.seeds.unwrap_or(1);
    let (mut failed, mut total) = (0, 0);
    for op in &ops {
        let tol = match a.tol {
            Some(t) => t,
            None => building3d_core::grad::default_tolerance(op).input("arguments")?,
        };
        for seed in first..first.saturating_add(n) {
            let r = grad_check(op, seed, tol).input("gradcheck")?;
            total += 1;
            failed += usize::from(!r.passed);
            writeln!(stdout, "{}", serde_json::to_string(&r).expect("report serializes"))
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
                .stage("write")?;
        }
    }
    log.info("summary", json!({ "checks": total, "failed": failed }));
    if failed > 0 {
        return Err(Failure {
            code: EXIT_FAILURE,
            stage: "gradcheck",
            message: format!("{failed} of {total} checks exceeded tolerance"),
        });
    }
    Ok(())
}

fn train(a: TrainToyArgs, stdout: &mut dyn Write, log: &mut Log) -> Result<(), Failure> {
    let d = ToyConfig::default();
    let cfg = ToyConfig {
        lr: a.lr.unwrap_or(d.lr),
        momentum: a.momentum.unwrap_or(d.momentum),
        ..d
    };
    let seed = a.seed.unwrap_or(42);
    let iters = a.iters.unwrap_or(200);
    let trace = train_toy(&cfg, seed, iters).map_err(Error::from).input("train")?;
    let (first, last) = trace.quartile_means().unzip();
    let doc = json!({
        "seed": seed,
        "iters": iters,
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "first_quartile_mean": first,
        "last_quartile_mean": last,
        "steps": trace.steps,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e)).stage("write")?,
    }
    log.info("trained", json!({ "iters": iters, "first_quartile_mean": first, "last_quartile_mean": last }));
    Ok(())
}

fn init_weights(a: InitWeightsArgs, log: &mut Log) -> Result<(), Failure> {
    let out = need(&a.out, "out")?;
    let cfg = match &a.model_config {
        Some(_) => {
            let p = existing(&a.model_config, "model-config")?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e)).input("read-config")?;
            serde_json::from_str::<SffdeConfig>(&text).map_err(|e| Error::json(p, e)).input("read-config")?
        }
        None => match a.preset.unwrap_or(PresetArg::Small) {
            PresetArg::Small => ToyConfig::default().model,
            PresetArg::Default => SffdeConfig::default(),
        },
    };
    let p = SffdeParams::init(&cfg, a.seed.unwrap_or(0)).map_err(Error::from).input("init")?;
    save_weights(&p, out).stage("write")?;
    log.info("wrote", json!({ "path": out.display().to_string(), "tensors": p.tensors().len() }));
    Ok(())
}

fn synth_scene(a: SynthSceneArgs, log: &mut Log) -> Result<(), Failure> {
    let dir = need(&a.out_dir, "out-dir")?;
    let seed = a.seed.unwrap_or(0);
    let extent = (a.height.unwrap_or(256), a.width.unwrap_or(256));
    let mut spec = SceneSpec::new(seed, extent, a.prisms.unwrap_or(10), (a.min_height.unwrap_or(3.0), a.max_height.unwrap_or(25.0)));
    spec.size_range = (a.min_size.unwrap_or(spec.size_range.0), a.max_size.unwrap_or(spec.size_range.1));
    spec.gap = a.gap.unwrap_or(spec.gap);
    let scene = make_synthetic_scene(&spec).map_err(Error::from).input("synthesize")?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage("write")?;
    write_asc(&scene.dsm, &dir.join("dsm.asc"), AscOptions::default()).stage("write")?;
    let mask = Raster::new(scene.mask.grid().scale(255.0)).stage("write")?;
    write_image(&mask, &dir.join("mask.png"), image::ImageFormat::Png).stage("write")?;
    let rgb: Grid = render_image(&scene, seed).map(|v| (v * 255.0).round());
    write_image(&Raster::new(rgb).stage("write")?, &dir.join("image.png"), image::ImageFormat::Png).stage("write")?;
    let prisms: Vec<Value> = scene
        .prisms
        .iter()
        .map(|p| {
            json!({
                "row": p.row, "col": p.col, "rows": p.rows, "cols": p.cols,
                "height": p.height,
                "footprint": p.footprint.ring.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = json!({ "seed": seed, "height": extent.0, "width": extent.1, "geotransform": spec.geo, "prisms": prisms });
    write_text(&dir.join("scene.json"), &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    log.info("wrote", json!({ "dir": dir.display().to_string(), "prisms": scene.prisms.len() }));
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Estimate(_) => "estimate",
        Command::Evaluate(_) => "evaluate",
        Command::ExtractMask(_) => "extract-mask",
        Command::Reconstruct(_) => "reconstruct",
        Command::Gradcheck(_) => "gradcheck",
        Command::TrainToy(_) => "train-toy",
        Command::InitWeights(_) => "init-weights",
        Command::SynthScene(_) => "synth-scene",
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, log: &mut Log) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => read_config(p)?,
        None => Map::new(),
    };
    match cli.command {
        Command::Estimate(a) => estimate(merge(a, &config)?, log),
        Command::Evaluate(a) => evaluate(merge(a, &config)?, stdout, log),
        Command::ExtractMask(a) => extract_mask(merge(a, &config)?, log),
        Command::Reconstruct(a) => reconstruct(merge(a, &config)?, log),
        Command::Gradcheck(a) => gradcheck(merge(a, &config)?, stdout, log),
        Command::TrainToy(a) => train(merge(a, &config)?, stdout, log),
        Command::InitWeights(a) => init_weights(merge(a, &config)?, log),
        Command::SynthScene(a) => synth_scene(merge(a, &config)?, log),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let line = json!({
                "level": "error",
                "stage": "arguments",
                "code": EXIT_USAGE,
                "error": e.render().to_string().trim_end(),
            });
            let _ = writeln!(stderr, "{line}");
            return EXIT_USAGE;
        }
    };
    let mut log = Log {
        command: command_name(&cli.command),
        out: stderr,
    };
    match dispatch(cli, stdout, &mut log) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            log.error(&f);
            f.code
        }
    }
}
