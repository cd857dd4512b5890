//! Estimation and reconstruction stages shared by the CLI and tests.

use std::path::Path;

use building3d_core::mask::{connected_components, extract_labeled_contours, simplify, BuildingMask, Connectivity, FootprintPolygon};
use building3d_core::raster::{fuse_patches, gaussian_filter, plan_tiles};
use building3d_core::recon::{extrude_lod1, heightfield_mesh, is_wall, mask_elevation, to_point_cloud, HeightStat, Mesh, PointCloud};
use building3d_core::sffde::{sffde_forward, SffdeParams};
use building3d_core::{Geotransform, Grid, Raster};
use rayon::prelude::*;
use serde::Serialize;

use crate::citygml::write_citygml;
use crate::error::{Error, Result};
use crate::geojson::buildings_geojson;
use crate::obj::write_obj;
use crate::ply::{write_ply, PlyData, PlyFormat};

/// What produces elevation for each tile.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    Network(&'a SffdeParams),
    /// Tiles of the input are passed through unchanged (ground-truth DSM).
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileSettings {
    pub tile: usize,
    pub overlap: usize,
    pub sigma: f64,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
}

impl Default for TileSettings {
    fn default() -> Self {
        Self {
            tile: 512,
            overlap: 64,
            sigma: building3d_core::raster::DEFAULT_SIGMA,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub elevation: Raster,
    pub tiles: usize,
}

/// Edge-replicating pad of an `h×w×c` grid up to multiples of `m`.
pub fn pad_to_multiple(g: &Grid, m: usize) -> Result<Grid> {
    let (h, w, c) = g.spatial("pad_to_multiple")?;
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) {
        return Ok(g.clone());
    }
    Ok(Grid::from_fn3(ph, pw, c, |y, x, k| g.data()[(y.min(h - 1) * w + x.min(w - 1)) * c + k]))
}

fn crop(g: &Grid, h: usize, w: usize) -> Result<Grid> {
    let (_, gw) = g.dims2("crop")?;
    let data = (0..h).flat_map(|r| g.row(r)[..w].iter().copied()).collect::<Vec<_>>();
    debug_assert!(w <= gw);
    Ok(Grid::new(vec![h, w], data)?)
}

fn run_tile(tile: &Grid, est: Estimator) -> Result<Grid> {
    match est {
        Estimator::Passthrough => Ok(if tile.rank() == 3 { tile.channel(0)? } else { tile.clone() }),
        Estimator::Network(p) => {
            let (h, w, _) = tile.spatial("estimate")?;
            let padded = pad_to_multiple(tile, 8)?;
            let out = sffde_forward(&padded, p)?;
            crop(&out, h, w)
        }
    }
}

/// Sliding-window estimation: tiles run on a pool of `workers` threads and
/// are fused in anchor order, then smoothed. Output is identical for any
/// worker count.
pub fn estimate(input: &Raster, est: Estimator, s: TileSettings) -> Result<Estimate> {
    let (h, w) = (input.height(), input.width());
    let plan = plan_tiles(h, w, s.tile, s.overlap)?;
    let grid = match est {
        // the network sees intensities in [0, 1]
        Estimator::Network(_) => input.grid.scale(1.0 / 255.0),
        Estimator::Passthrough => input.grid.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers)
        .build()
        .map_err(|e| Error::Unsupported(format!("worker pool: {e}")))?;
    let patches = pool.install(|| {
        plan.anchors
            .par_iter()
            .map(|&a| Ok((a, run_tile(&plan.cut(&grid, a)?, est)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut fused = fuse_patches(&patches, h, w)?;
    fused.geo = input.geo;
    if matches!(est, Estimator::Passthrough) {
        fused.nodata = input.nodata;
    }
    let elevation = gaussian_filter(&fused, s.sigma)?;
    Ok(Estimate {
        elevation,
        tiles: plan.anchors.len(),
    })
}

/// Any positive, finite value marks a building pixel.
pub fn mask_from_raster(r: &Raster) -> Result<BuildingMask> {
    let g = if r.grid.rank() == 3 { r.grid.channel(0)? } else { r.grid.clone() };
    let (h, w) = g.dims2("mask")?;
    Ok(BuildingMask::from_fn(h, w, |y, x| {
        let v = g.at2(y, x);
        !r.is_nodata(v) && v > 0.0
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emit {
    pub ply: bool,
    pub obj: bool,
    pub citygml: bool,
    pub report: bool,
}

impl Emit {
    pub const ALL: Self = Self {
        ply: true,
        obj: true,
        citygml: true,
        report: true,
    };
    pub const NONE: Self = Self {
        ply: false,
        obj: false,
        citygml: false,
        report: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconSettings {
    pub stat: HeightStat,
    pub base: f64,
    pub min_area: usize,
    /// Douglas–Peucker tolerance in world units; 0 keeps pixel-exact rings.
    pub simplify: f64,
    pub connectivity: Connectivity,
    pub epsg: Option<u32>,
    pub ply_format: PlyFormat,
    pub emit: Emit,
}

impl Default for ReconSettings {
    fn default() -> Self {
        Self {
            stat: HeightStat::Median,
            base: 0.0,
            min_area: building3d_core::mask::DEFAULT_MIN_AREA,
            simplify: 0.0,
            connectivity: Connectivity::Eight,
            epsg: None,
            ply_format: PlyFormat::BinaryLittleEndian,
            emit: Emit::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingRecord {
    pub id: u32,
    pub base: f64,
    pub top: f64,
    pub height: f64,
    pub footprint_area: f64,
    pub footprint_vertices: usize,
    pub volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counts {
    pub mask_pixels: usize,
    pub points: usize,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    pub wall_triangles: usize,
    pub components: usize,
    pub footprints: usize,
    pub buildings: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obj: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub citygml: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconManifest {
    pub counts: Counts,
    pub outputs: Outputs,
    pub buildings: Vec<BuildingRecord>,
    pub warnings: Vec<String>,
}

pub const PLY_NAME: &str = "points.ply";
pub const OBJ_NAME: &str = "mesh.obj";
pub const CITYGML_NAME: &str = "buildings.gml";
pub const REPORT_NAME: &str = "buildings.geojson";
pub const MANIFEST_NAME: &str = "manifest.json";

/// In-memory products of reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cloud: PointCloud,
    pub mesh: Mesh,
    pub footprints: Vec<FootprintPolygon>,
    pub model: building3d_core::recon::CityModel,
    pub manifest: ReconManifest,
}

/// Masking, point cloud, heightfield mesh and LOD1 extrusion. `image`, when
/// given, colours the points (0–255 per channel).
pub fn reconstruct(dsm: &Raster, mask: &BuildingMask, image: Option<&Raster>, s: &ReconSettings) -> Result<Reconstruction> {
    let geo = dsm.geo.unwrap_or_else(Geotransform::unit);
    let mut warnings = Vec::new();
    let masked = mask_elevation(dsm, mask)?;
    // one point per mask pixel, including pixels at exactly zero elevation
    let mut on_mask = masked.clone();
    let w = dsm.width();
    for (i, v) in on_mask.grid.data_mut().iter_mut().enumerate() {
        if !mask.is_set(i / w, i % w) {
            *v = f64::NAN;
        }
    }
    let cloud = to_point_cloud(&on_mask, Some(&geo), image, false)?;
    let mesh = heightfield_mesh(dsm, mask, Some(&geo), s.base)?;
    let labels = connected_components(mask, s.connectivity);
    let mut footprints = extract_labeled_contours(&labels, &geo, s.min_area);
    if s.simplify > 0.0 {
        for p in &mut footprints {
            match simplify(p, s.simplify) {
                Ok(q) => *p = q,
                Err(e) => warnings.push(format!("component {}: kept unsimplified ring ({e})", p.component)),
            }
        }
    }
    let ext = extrude_lod1(&footprints, dsm, &labels, s.base, s.stat)?;
    if mask.count() == 0 {
        warnings.push("mask contains no building pixels".into());
    }
    if ext.dropped > 0 {
        warnings.push(format!("{} components with top at or below base were dropped", ext.dropped));
    }
    let buildings = ext
        .model
        .buildings
        .iter()
        .map(|b| BuildingRecord {
            id: b.id,
            base: b.base,
            top: b.top,
            height: b.top - b.base,
            footprint_area: b.footprint.area(),
            footprint_vertices: b.footprint.ring.len(),
            volume: b.volume(),
        })
        .collect();
    let counts = Counts {
        mask_pixels: mask.count(),
        points: cloud.len(),
        mesh_vertices: mesh.vertices.len(),
        mesh_triangles: mesh.triangles.len(),
        wall_triangles: (0..mesh.triangles.len()).filter(|&t| is_wall(&mesh, t)).count(),
        components: labels.count as usize,
        footprints: footprints.len(),
        buildings: ext.model.buildings.len(),
        dropped: ext.dropped,
    };
    let outputs = Outputs {
        ply: s.emit.ply.then(|| PLY_NAME.into()),
        obj: s.emit.obj.then(|| OBJ_NAME.into()),
        citygml: s.emit.citygml.then(|| CITYGML_NAME.into()),
        report: s.emit.report.then(|| REPORT_NAME.into()),
    };
    Ok(Reconstruction {
        cloud,
        mesh,
        footprints,
        model: ext.model,
        manifest: ReconManifest {
            counts,
            outputs,
            buildings,
            warnings,
        },
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes the enabled artifacts and `manifest.json` into `dir`.
pub fn write_reconstruction(rec: &Reconstruction, s: &ReconSettings, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if s.emit.ply {
        write_file(&dir.join(PLY_NAME), |b| write_ply(b, &PlyData::from(&rec.cloud), s.ply_format))?;
    }
    if s.emit.obj {
        write_file(&dir.join(OBJ_NAME), |b| write_obj(b, &rec.mesh))?;
    }
    if s.emit.citygml {
        let text = write_citygml(&rec.model, s.epsg);
        write_file(&dir.join(CITYGML_NAME), |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })?;
    }
    if s.emit.report {
        let text = serde_json::to_string_pretty(&buildings_geojson(&rec.model)).expect("json value");
        write_file(&dir.join(REPORT_NAME), |b| {
            b.extend_from_slice(text.as_bytes());
            b.push(b'\n');
            Ok(())
        })?;
    }
    let text = serde_json::to_string_pretty(&rec.manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_NAME), |b| {
        b.extend_from_slice(text.as_bytes());
        b.push(b'\n');
        Ok(())
    })
}
