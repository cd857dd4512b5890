//! From a building elevation raster to 3-D geometry: masking, point
//! clouds, heightfield meshes with walls, LOD1 prisms, and a synthetic
//! prism scene with known answers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mask::{signed_area, BuildingMask, FootprintPolygon, Labels};
use crate::raster::{Geotransform, Raster};
use crate::rng::{normal, seeded, uniform};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::Invariant {
                    what: "PointCloud",
                    reason: format!("{} colours for {} points", c.len(), self.points.len()),
                });
            }
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invariant {
                what: "PointCloud",
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

impl Mesh {
    /// Unnormalised normal (length = 2·area) of triangle `t`.
    pub fn normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        cross(sub(b, a), sub(c, a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * norm(self.normal(t))
    }

    pub fn check(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        let fail = |reason: alloc::string::String| Error::Invariant { what: "Mesh", reason };
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(fail("non-finite vertex".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(fail(format!("triangle {t} indexes past {n} vertices")));
            }
            if !(self.triangle_area(t) > 0.0) {
                return Err(fail(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub id: u32,
    pub footprint: FootprintPolygon,
    pub base: f64,
    pub top: f64,
}

impl Building {
    pub fn volume(&self) -> f64 {
        self.footprint.area() * (self.top - self.base)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CityModel {
    pub buildings: Vec<Building>,
}

impl CityModel {
    pub fn check(&self) -> Result<()> {
        for b in &self.buildings {
            if !(b.top > b.base) || !b.top.is_finite() || !b.base.is_finite() {
                return Err(Error::Invariant {
                    what: "CityModel",
                    reason: format!("building {} has top {} <= base {}", b.id, b.top, b.base),
                });
            }
            b.footprint.check()?;
        }
        Ok(())
    }
}

/// `E ∘ M`: elevation kept on building pixels, zero elsewhere. Nodata
/// pixels stay nodata.
pub fn mask_elevation(e: &Raster, m: &BuildingMask) -> Result<Raster> {
    let (h, w) = e.grid.dims2("mask_elevation")?;
    if (h, w) != (m.height(), m.width()) {
        return Err(Error::shape("mask_elevation", e.grid.shape(), m.grid().shape()));
    }
    let data = e
        .grid
        .data()
        .iter()
        .zip(m.grid().data())
        .map(|(&v, &k)| if e.is_nodata(v) { v } else { v * k })
        .collect();
    Ok(Raster {
        grid: Grid::new(vec![h, w], data)?,
        geo: e.geo,
        nodata: e.nodata,
    })
}

fn resolve_geo(e: &Raster, geo: Option<&Geotransform>) -> Result<Geotransform> {
    geo.copied()
        .or(e.geo)
        .ok_or_else(|| Error::invalid("recon", "raster has no geotransform and none was supplied"))
}

fn color_at(image: &Raster, r: usize, c: usize) -> [u8; 3] {
    let ch = image.channels();
    let base = (r * image.width() + c) * ch;
    let px = |k: usize| {
        let v = image.grid.data()[base + k.min(ch - 1)];
        libm::round(v.clamp(0.0, 255.0)) as u8
    };
    [px(0), px(1), px(2)]
}

/// One point per retained pixel at its centre, `z` = elevation. Nodata
/// pixels are always skipped; `skip_zero` also drops zero elevations
/// (pixels masked out as non-building). Image values are read as 0–255.
pub fn to_point_cloud(e: &Raster, geo: Option<&Geotransform>, image: Option<&Raster>, skip_zero: bool) -> Result<PointCloud> {
    let geo = resolve_geo(e, geo)?;
    let (h, w) = e.grid.dims2("to_point_cloud")?;
    if let Some(img) = image {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::shape("to_point_cloud", e.grid.shape(), img.grid.shape()));
        }
    }
    let mut points = Vec::new();
    let mut colors = image.map(|_| Vec::new());
    for r in 0..h {
        for c in 0..w {
            let z = e.grid.at2(r, c);
            if e.is_nodata(z) || (skip_zero && z == 0.0) {
                continue;
            }
            let (x, y) = geo.pixel_center(r, c);
            points.push([x, y, z]);
            if let (Some(cs), Some(img)) = (colors.as_mut(), image) {
                cs.push(color_at(img, r, c));
            }
        }
    }
    let pc = PointCloud { points, colors };
    pc.check()?;
    Ok(pc)
}

struct VertexMap {
    w: usize,
    ids: Vec<u32>,
}

impl VertexMap {
    fn new(h: usize, w: usize) -> Self {
        Self {
            w,
            ids: vec![u32::MAX; h * w],
        }
    }

    fn get(&mut self, mesh: &mut Mesh, r: usize, c: usize, p: [f64; 3]) -> u32 {
        let slot = &mut self.ids[r * self.w + c];
        if *slot == u32::MAX {
            *slot = mesh.vertices.len() as u32;
            mesh.vertices.push(p);
        }
        *slot
    }
}

fn push_if_proper(mesh: &mut Mesh, tri: [u32; 3]) {
    mesh.triangles.push(tri);
    if !(mesh.triangle_area(mesh.triangles.len() - 1) > 0.0) {
        mesh.triangles.pop();
    }
}

/// Roof triangulated over pixel centres: two triangles per 2×2 pixel quad
/// fully inside the mask (and free of nodata). Every boundary edge of the
/// roof gets a vertical wall down to `base`. All faces wind outward
/// (counter-clockwise seen from outside); zero-area faces are skipped.
pub fn heightfield_mesh(e: &Raster, m: &BuildingMask, geo: Option<&Geotransform>, base: f64) -> Result<Mesh> {
    let geo = resolve_geo(e, geo)?;
    let (h, w) = e.grid.dims2("heightfield_mesh")?;
    if (h, w) != (m.height(), m.width()) {
        return Err(Error::shape("heightfield_mesh", e.grid.shape(), m.grid().shape()));
    }
    let mut mesh = Mesh::default();
    if h < 2 || w < 2 {
        return Ok(mesh);
    }
    let usable = |r: usize, c: usize| m.is_set(r, c) && !e.is_nodata(e.grid.at2(r, c));
    let (ch, cw) = (h - 1, w - 1);
    let filled: Vec<bool> = (0..ch * cw)
        .map(|i| {
            let (r, c) = (i / cw, i % cw);
            usable(r, c) && usable(r, c + 1) && usable(r + 1, c) && usable(r + 1, c + 1)
        })
        .collect();
    let cell = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < ch && (c as usize) < cw && filled[r as usize * cw + c as usize];

    let mut top = VertexMap::new(h, w);
    let mut bottom = VertexMap::new(h, w);
    let top_pt = |r: usize, c: usize| {
        let (x, y) = geo.pixel_center(r, c);
        [x, y, e.grid.at2(r, c)]
    };
    for r in 0..ch {
        for c in 0..cw {
            if !filled[r * cw + c] {
                continue;
            }
            // south-west, south-east, north-east, north-west in world terms
            let sw = top.get(&mut mesh, r + 1, c, top_pt(r + 1, c));
            let se = top.get(&mut mesh, r + 1, c + 1, top_pt(r + 1, c + 1));
            let ne = top.get(&mut mesh, r, c + 1, top_pt(r, c + 1));
            let nw = top.get(&mut mesh, r, c, top_pt(r, c));
            push_if_proper(&mut mesh, [sw, se, ne]);
            push_if_proper(&mut mesh, [sw, ne, nw]);
        }
    }

    // Directed boundary edges with the roof on their left (world frame).
    let mut boundary: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for r in 0..h {
        for c in 0..cw {
            let (north, south) = (cell(r as isize - 1, c as isize), cell(r as isize, c as isize));
            if north && !south {
                boundary.push(((r, c), (r, c + 1)));
            } else if south && !north {
                boundary.push(((r, c + 1), (r, c)));
            }
        }
    }
    for r in 0..ch {
        for c in 0..w {
            let (west, east) = (cell(r as isize, c as isize - 1), cell(r as isize, c as isize));
            if east && !west {
                boundary.push(((r, c), (r + 1, c)));
            } else if west && !east {
                boundary.push(((r + 1, c), (r, c)));
            }
        }
    }
    for (a, b) in boundary {
        let at = top.get(&mut mesh, a.0, a.1, top_pt(a.0, a.1));
        let bt = top.get(&mut mesh, b.0, b.1, top_pt(b.0, b.1));
        let (ax, ay) = geo.pixel_center(a.0, a.1);
        let (bx, by) = geo.pixel_center(b.0, b.1);
        let ab = bottom.get(&mut mesh, a.0, a.1, [ax, ay, base]);
        let bb = bottom.get(&mut mesh, b.0, b.1, [bx, by, base]);
        push_if_proper(&mut mesh, [ab, bb, bt]);
        push_if_proper(&mut mesh, [ab, bt, at]);
    }
    mesh.check()?;
    Ok(mesh)
}

/// Vertical wall faces (normals with no z component).
pub fn is_wall(mesh: &Mesh, t: usize) -> bool {
    let n = mesh.normal(t);
    n[2].abs() <= 1e-12 * norm(n)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HeightStat {
    #[default]
    Median,
    Mean,
    Max,
}

impl HeightStat {
    pub fn apply(self, values: &mut [f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            HeightStat::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            HeightStat::Mean => values.iter().sum::<f64>() / values.len() as f64,
            HeightStat::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrusion {
    pub model: CityModel,
    /// Buildings whose attributed top did not clear the base.
    pub dropped: usize,
}

/// One prism per polygon: top height is `stat` over the elevation of the
/// polygon's labeled component.
pub fn extrude_lod1(polys: &[FootprintPolygon], e: &Raster, labels: &Labels, base: f64, stat: HeightStat) -> Result<Extrusion> {
    let (h, w) = e.grid.dims2("extrude_lod1")?;
    if (h, w) != (labels.height, labels.width) {
        return Err(Error::shape("extrude_lod1", e.grid.shape(), &[labels.height, labels.width]));
    }
    let mut per_label: Vec<Vec<f64>> = vec![Vec::new(); labels.count as usize + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        let v = e.grid.data()[i];
        if l != 0 && !e.is_nodata(v) {
            per_label[l as usize].push(v);
        }
    }
    let mut model = CityModel::default();
    let mut dropped = 0;
    for p in polys {
        let values = per_label
            .get_mut(p.component as usize)
            .filter(|v| !v.is_empty())
            .ok_or(Error::EmptyComponent { component: p.component })?;
        let top = stat.apply(values).expect("non-empty");
        if top > base {
            model.buildings.push(Building {
                id: p.component,
                footprint: p.clone(),
                base,
                top,
            });
        } else {
            dropped += 1;
        }
    }
    Ok(Extrusion { model, dropped })
}

/// Ground-truth prism of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Prism {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub height: f64,
    pub footprint: FootprintPolygon,
}

impl Prism {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.row..self.row + self.rows).contains(&r) && (self.col..self.col + self.cols).contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub dsm: Raster,
    pub mask: BuildingMask,
    pub prisms: Vec<Prism>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_prisms: usize,
    /// Prism heights above the flat ground, metres (rounded to centimetres).
    pub height_range: (f64, f64),
    /// Footprint side lengths in pixels, inclusive.
    pub size_range: (usize, usize),
    /// Minimum number of ground pixels between two prisms.
    pub gap: usize,
    pub geo: Geotransform,
    pub max_attempts: usize,
}

impl SceneSpec {
    pub fn new(seed: u64, extent: (usize, usize), n_prisms: usize, height_range: (f64, f64)) -> Self {
        let (height, width) = extent;
        let side = (height.min(width) / 6).max(6);
        Self {
            seed,
            height,
            width,
            n_prisms,
            height_range,
            size_range: (5.min(side), side),
            gap: 2,
            geo: Geotransform {
                origin_x: 1000.0,
                origin_y: 2000.0,
                pixel_size_x: 0.5,
                pixel_size_y: 0.5,
            },
            max_attempts: 10_000,
        }
    }
}

/// Axis-aligned prisms stamped on flat zero ground, separated by at least
/// `gap` pixels. Same spec, same scene, bit for bit.
pub fn make_synthetic_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let (h, w) = (spec.height, spec.width);
    let (smin, smax) = spec.size_range;
    let (hmin, hmax) = spec.height_range;
    if h == 0 || w == 0 || smin == 0 || smin > smax || smax > h.min(w) {
        return Err(Error::invalid("make_synthetic_scene", "footprint sizes do not fit the extent"));
    }
    if !(hmin > 0.0 && hmax >= hmin) {
        return Err(Error::invalid("make_synthetic_scene", "height range must be positive"));
    }
    spec.geo.check()?;
    let mut rng = seeded(spec.seed);
    let mut prisms: Vec<Prism> = Vec::new();
    for index in 0..spec.n_prisms {
        let mut placed = false;
        for _ in 0..spec.max_attempts {
            let rows = rng.gen_range(smin..=smax);
            let cols = rng.gen_range(smin..=smax);
            let row = rng.gen_range(0..=h - rows);
            let col = rng.gen_range(0..=w - cols);
            let g = spec.gap;
            let clear = prisms.iter().all(|p| {
                row >= p.row + p.rows + g || p.row >= row + rows + g || col >= p.col + p.cols + g || p.col >= col + cols + g
            });
            if !clear {
                continue;
            }
            let height = libm::round(uniform(&mut rng, hmin, hmax) * 100.0) / 100.0;
            let (r0, c0, r1, c1) = (row as f64, col as f64, (row + rows) as f64, (col + cols) as f64);
            let ring = vec![
                spec.geo.corner(r1, c0),
                spec.geo.corner(r1, c1),
                spec.geo.corner(r0, c1),
                spec.geo.corner(r0, c0),
            ];
            debug_assert!(signed_area(&ring) > 0.0);
            prisms.push(Prism {
                row,
                col,
                rows,
                cols,
                height,
                footprint: FootprintPolygon {
                    ring,
                    component: index as u32 + 1,
                },
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::PlacementFailed {
                index,
                attempts: spec.max_attempts,
            });
        }
    }
    let mut dsm = Grid::zeros(&[h, w]);
    for p in &prisms {
        for r in p.row..p.row + p.rows {
            for c in p.col..p.col + p.cols {
                dsm.data_mut()[r * w + c] = p.height;
            }
        }
    }
    let mask = BuildingMask::from_fn(h, w, |r, c| prisms.iter().any(|p| p.contains(r, c)));
    Ok(SyntheticScene {
        dsm: Raster::new(dsm)?.with_geo(spec.geo),
        mask,
        prisms,
    })
}

/// Pseudo-aerial RGB rendering of a scene in `[0, 1]`: roof brightness
/// rises with height, ground carries seeded texture, and a shadow darkens
/// ground just south-east of tall pixels.
pub fn render_image(scene: &SyntheticScene, seed: u64) -> Grid {
    let (h, w) = (scene.dsm.height(), scene.dsm.width());
    let hmax = scene.prisms.iter().map(|p| p.height).fold(1.0, f64::max);
    let mut rng = seeded(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise: Vec<f64> = (0..h * w * 3).map(|_| 0.03 * normal(&mut rng)).collect();
    let z = |r: usize, c: usize| scene.dsm.grid.at2(r, c);
    Grid::from_fn3(h, w, 3, |r, c, ch| {
        let n = noise[(r * w + c) * 3 + ch];
        let v = if scene.mask.is_set(r, c) {
            let t = z(r, c) / hmax;
            [0.35 + 0.6 * t, 0.3 + 0.5 * t, 0.25 + 0.3 * t][ch]
        } else {
            let shade = if r > 0 && c > 0 && z(r - 1, c - 1) > z(r, c) { 0.5 } else { 1.0 };
            [0.3, 0.45, 0.25][ch] * shade
        };
        (v + n).clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{connected_components, extract_contours, Connectivity};

    #[test]
    fn mask_elevation_examples() {
        let e = Raster::new(Grid::from_rows(&[&[3.0, 5.0], &[2.0, 7.0]]).unwrap()).unwrap();
        let m = BuildingMask::new(Grid::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(mask_elevation(&e, &m).unwrap().grid.data(), &[3.0, 0.0, 0.0, 7.0]);
        assert_eq!(mask_elevation(&e, &BuildingMask::from_fn(2, 2, |_, _| true)).unwrap(), e);
        assert!(mask_elevation(&e, &BuildingMask::empty(2, 2)).unwrap().grid.data().iter().all(|&v| v == 0.0));
        let nd = Raster::new(Grid::from_rows(&[&[-1.0, 5.0]]).unwrap()).unwrap().with_nodata(Some(-1.0));
        let out = mask_elevation(&nd, &BuildingMask::empty(1, 2)).unwrap();
        assert_eq!(out.grid.data(), &[-1.0, 0.0]);
        assert!(mask_elevation(&e, &BuildingMask::empty(3, 2)).is_err());
    }

    #[test]
    fn point_mapping_uses_pixel_centres() {
        let mut g = Grid::zeros(&[30, 30]);
        g.data_mut()[20 * 30 + 10] = 4.2;
        let geo = Geotransform::new(1000.0, 2000.0, 0.09, 0.09).unwrap();
        let pc = to_point_cloud(&Raster::new(g).unwrap(), Some(&geo), None, true).unwrap();
        assert_eq!(pc.len(), 1);
        let [x, y, z] = pc.points[0];
        assert!((x - 1000.945).abs() < 1e-9 && (y - 1998.155).abs() < 1e-9 && z == 4.2);

        let empty = to_point_cloud(&Raster::new(Grid::zeros(&[4, 4])).unwrap(), Some(&geo), None, true).unwrap();
        assert!(empty.is_empty());
        assert!(to_point_cloud(&Raster::new(Grid::zeros(&[4, 4])).unwrap(), None, None, true).is_err());
    }

    #[test]
    fn colours_follow_points() {
        let e = Raster::new(Grid::from_rows(&[&[1.0, 0.0], &[2.0, 3.0]]).unwrap())
            .unwrap()
            .with_geo(Geotransform::unit());
        let img = Raster::new(Grid::from_fn3(2, 2, 3, |r, c, ch| (r * 100 + c * 10 + ch) as f64)).unwrap();
        let pc = to_point_cloud(&e, None, Some(&img), true).unwrap();
        assert_eq!(pc.colors.unwrap(), vec![[0, 1, 2], [100, 101, 102], [110, 111, 112]]);
    }

    #[test]
    fn mesh_counts() {
        let e = Raster::new(Grid::full(&[3, 3], 2.0)).unwrap().with_geo(Geotransform::unit());
        let all = BuildingMask::from_fn(3, 3, |_, _| true);
        let mesh = heightfield_mesh(&e, &all, None, 0.0).unwrap();
        let roof = (0..mesh.triangles.len()).filter(|&t| !is_wall(&mesh, t)).count();
        assert_eq!(roof, 8);
        assert!((0..mesh.triangles.len()).filter(|&t| !is_wall(&mesh, t)).all(|t| mesh.normal(t)[2] > 0.0));
        let empty = heightfield_mesh(&e, &BuildingMask::empty(3, 3), None, 0.0).unwrap();
        assert!(empty.triangles.is_empty() && empty.vertices.is_empty());
    }

    #[test]
    fn flat_block_wall_area() {
        let h = 3.7;
        let geo = Geotransform::new(10.0, 20.0, 0.5, 0.5).unwrap();
        let m = BuildingMask::from_fn(4, 4, |r, c| (1..3).contains(&r) && (1..3).contains(&c));
        let mut g = Grid::zeros(&[4, 4]);
        for r in 1..3 {
            for c in 1..3 {
                g.data_mut()[r * 4 + c] = h;
            }
        }
        let mesh = heightfield_mesh(&Raster::new(g).unwrap(), &m, Some(&geo), 0.0).unwrap();
        let wall: f64 = (0..mesh.triangles.len()).filter(|&t| is_wall(&mesh, t)).map(|t| mesh.triangle_area(t)).sum();
        let perimeter = 4.0 * 0.5;
        assert!((wall - perimeter * h).abs() < 1e-9);
        // walls face away from the block centre
        let centre = geo.corner(2.0, 2.0);
        for t in (0..mesh.triangles.len()).filter(|&t| is_wall(&mesh, t)) {
            let n = mesh.normal(t);
            let v = mesh.vertices[mesh.triangles[t][0] as usize];
            assert!(n[0] * (v[0] - centre.0) + n[1] * (v[1] - centre.1) > 0.0);
        }
    }

    #[test]
    fn height_stats() {
        let mut v = vec![5.0, 9.0, 5.0];
        assert_eq!(HeightStat::Max.apply(&mut v), Some(9.0));
        assert_eq!(HeightStat::Median.apply(&mut v), Some(5.0));
        assert_eq!(HeightStat::Mean.apply(&mut [1.0, 2.0]), Some(1.5));
        assert_eq!(HeightStat::Median.apply(&mut [1.0, 2.0, 4.0, 3.0]), Some(2.5));
        assert_eq!(HeightStat::Median.apply(&mut []), None);
    }

    #[test]
    fn extrusion_of_a_block() {
        let m = BuildingMask::from_fn(12, 12, |r, c| (1..11).contains(&r) && (1..11).contains(&c));
        let e = Raster::new(m.grid().scale(6.0)).unwrap();
        let labels = connected_components(&m, Connectivity::Eight);
        let polys = extract_contours(&m, &Geotransform::unit(), 20);
        let ex = extrude_lod1(&polys, &e, &labels, 0.0, HeightStat::Median).unwrap();
        assert_eq!(ex.model.buildings.len(), 1);
        assert_eq!(ex.model.buildings[0].top, 6.0);
        assert_eq!(ex.model.buildings[0].volume(), 600.0);
        assert!(extrude_lod1(&[], &e, &labels, 0.0, HeightStat::Median).unwrap().model.buildings.is_empty());

        let low = extrude_lod1(&polys, &e, &labels, 10.0, HeightStat::Median).unwrap();
        assert_eq!((low.model.buildings.len(), low.dropped), (0, 1));

        let mut stray = polys[0].clone();
        stray.component = 7;
        assert!(matches!(
            extrude_lod1(&[stray], &e, &labels, 0.0, HeightStat::Median),
            Err(Error::EmptyComponent { component: 7 })
        ));
    }

    #[test]
    fn scene_basics() {
        let spec = SceneSpec::new(3, (64, 64), 0, (3.0, 9.0));
        let s = make_synthetic_scene(&spec).unwrap();
        assert_eq!(s.mask.count(), 0);
        assert!(s.dsm.grid.data().iter().all(|&v| v == 0.0));

        let spec = SceneSpec::new(3, (64, 64), 4, (3.0, 9.0));
        let a = make_synthetic_scene(&spec).unwrap();
        let b = make_synthetic_scene(&spec).unwrap();
        assert_eq!(a, b);
        for p in &a.prisms {
            assert!(a.dsm.grid.at2(p.row, p.col) == p.height);
            assert!((p.footprint.area() - (p.rows * p.cols) as f64 * 0.25).abs() < 1e-12);
        }

        let mut crowded = SceneSpec::new(1, (16, 16), 50, (3.0, 9.0));
        crowded.max_attempts = 50;
        assert!(matches!(make_synthetic_scene(&crowded), Err(Error::PlacementFailed { .. })));
    }
}
