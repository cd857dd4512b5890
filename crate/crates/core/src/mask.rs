//! Building masks: binarization, component labeling, footprint contours
//! and ring simplification.
//!
//! Contours follow pixel edges (each pixel is a unit cell), walking the
//! corner lattice marching-squares style and emitting a vertex only where
//! the boundary turns. A single pixel therefore yields its own unit square
//! and a solid `n×m` block a rectangle of area `n·m` pixels. Only exterior
//! rings are produced; courtyards are dropped.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::Geotransform;

pub const DEFAULT_MIN_AREA: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingMask {
    grid: Grid,
}

impl BuildingMask {
    pub fn new(grid: Grid) -> Result<Self> {
        grid.dims2("BuildingMask")?;
        if grid.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("BuildingMask", "values must be 0 or 1"));
        }
        Ok(Self { grid })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..h * w).map(|i| if f(i / w, i % w) { 1.0 } else { 0.0 }).collect();
        Self {
            grid: Grid::new(vec![h, w], data).expect("shape and data agree"),
        }
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self::from_fn(h, w, |_, _| false)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.grid.shape()[1]
    }

    #[inline]
    pub fn is_set(&self, r: usize, c: usize) -> bool {
        self.grid.at2(r, c) != 0.0
    }

    pub fn count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn as_bools(&self) -> Vec<bool> {
        self.grid.data().iter().map(|&v| v != 0.0).collect()
    }
}

/// 1 where the label equals `class_id`, else 0.
pub fn binarize(labels: &Grid, class_id: f64) -> Result<BuildingMask> {
    let (h, w) = labels.dims2("binarize")?;
    Ok(BuildingMask::from_fn(h, w, |r, c| labels.at2(r, c) == class_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

/// Component labels: 0 is background, components are numbered `1..=count`
/// in raster-scan order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl Labels {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.width + c]
    }

    /// Pixel count per label (index 0 is background).
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count as usize + 1];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }
}

pub fn connected_components(m: &BuildingMask, connectivity: Connectivity) -> Labels {
    let (h, w) = (m.height(), m.width());
    let mut labels = vec![0u32; h * w];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if labels[start] != 0 || !m.is_set(start / w, start % w) {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let q = nr as usize * w + nc as usize;
                if labels[q] == 0 && m.is_set(nr as usize, nc as usize) {
                    labels[q] = count;
                    queue.push_back(q);
                }
            }
        }
    }
    Labels {
        height: h,
        width: w,
        labels,
        count,
    }
}

/// Exterior ring of one building in world coordinates, counter-clockwise,
/// stored open (the closing edge back to the first vertex is implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintPolygon {
    pub ring: Vec<(f64, f64)>,
    pub component: u32,
}

impl FootprintPolygon {
    pub fn area(&self) -> f64 {
        signed_area(&self.ring)
    }

    pub fn perimeter(&self) -> f64 {
        edges(&self.ring).map(|(a, b)| libm::hypot(b.0 - a.0, b.1 - a.1)).sum()
    }

    /// Closed, simple, counter-clockwise, non-zero area.
    pub fn check(&self) -> Result<()> {
        let reason = if self.ring.len() < 3 {
            "fewer than 3 vertices"
        } else if self.ring.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            "non-finite vertex"
        } else if !(self.area() > 0.0) {
            "ring is not counter-clockwise with positive area"
        } else if !is_simple(&self.ring) {
            "ring self-intersects"
        } else {
            return Ok(());
        };
        Err(Error::Invariant {
            what: "FootprintPolygon",
            reason: reason.into(),
        })
    }
}

pub fn edges(ring: &[(f64, f64)]) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

/// Shoelace area; positive for counter-clockwise rings. Coordinates are
/// taken relative to the first vertex so large map offsets cost no precision.
pub fn signed_area(ring: &[(f64, f64)]) -> f64 {
    let Some(&(ox, oy)) = ring.first() else {
        return 0.0;
    };
    0.5 * edges(ring)
        .map(|(a, b)| (a.0 - ox) * (b.1 - oy) - (b.0 - ox) * (a.1 - oy))
        .sum::<f64>()
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_touch(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// No two non-adjacent edges touch and no vertex repeats.
pub fn is_simple(ring: &[(f64, f64)]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if ring[i] == ring[j] {
                return false;
            }
        }
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // adjacent edges may only share their common vertex
                let (c, d) = (ring[j], ring[(j + 1) % n]);
                let (shared, far_self, far_other) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(far_self, shared, far_other) == 0.0 {
                    // collinear: must not fold back over each other
                    let back = (far_self.0 - shared.0) * (far_other.0 - shared.0)
                        + (far_self.1 - shared.1) * (far_other.1 - shared.1);
                    if back > 0.0 {
                        return false;
                    }
                }
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Local bitmap around one component, one pixel of padding on every side.
struct Patch {
    r0: isize,
    c0: isize,
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl Patch {
    #[inline]
    fn inside(&self, r: isize, c: isize) -> bool {
        let (lr, lc) = (r - self.r0, c - self.c0);
        lr >= 0 && lc >= 0 && (lr as usize) < self.h && (lc as usize) < self.w && self.bits[lr as usize * self.w + lc as usize]
    }

    fn set(&mut self, r: isize, c: isize) {
        let (lr, lc) = ((r - self.r0) as usize, (c - self.c0) as usize);
        self.bits[lr * self.w + lc] = true;
    }

    /// Fill one pixel of every diagonal-only contact so the region becomes
    /// 4-connected and its boundary never pinches at a vertex.
    fn bridge_diagonals(&mut self) {
        loop {
            let mut changed = false;
            for vr in self.r0 + 1..self.r0 + self.h as isize {
                for vc in self.c0 + 1..self.c0 + self.w as isize {
                    let nw = self.inside(vr - 1, vc - 1);
                    let ne = self.inside(vr - 1, vc);
                    let sw = self.inside(vr, vc - 1);
                    let se = self.inside(vr, vc);
                    if nw && se && !ne && !sw {
                        self.set(vr - 1, vc);
                        changed = true;
                    } else if ne && sw && !nw && !se {
                        self.set(vr, vc);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Heading {
    E,
    S,
    W,
    N,
}

impl Heading {
    fn step(self) -> (isize, isize) {
        match self {
            Heading::E => (0, 1),
            Heading::S => (1, 0),
            Heading::W => (0, -1),
            Heading::N => (-1, 0),
        }
    }

    fn left(self) -> Self {
        match self {
            Heading::E => Heading::N,
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
        }
    }

    fn right(self) -> Self {
        match self {
            Heading::E => Heading::S,
            Heading::S => Heading::W,
            Heading::W => Heading::N,
            Heading::N => Heading::E,
        }
    }

    /// Pixels ahead-left and ahead-right of corner `(vr, vc)`.
    fn ahead(self, vr: isize, vc: isize) -> ((isize, isize), (isize, isize)) {
        let (nw, ne, sw, se) = ((vr - 1, vc - 1), (vr - 1, vc), (vr, vc - 1), (vr, vc));
        match self {
            Heading::E => (ne, se),
            Heading::S => (se, sw),
            Heading::W => (sw, nw),
            Heading::N => (nw, ne),
        }
    }
}

/// Outer boundary as pixel-corner `(row, col)` turning points, walking with
/// the region on the right (clockwise on screen).
fn trace_outer(p: &Patch, start: (isize, isize)) -> Vec<(isize, isize)> {
    let mut out = vec![start];
    let mut v = start;
    let mut d = Heading::E;
    loop {
        let (dr, dc) = d.step();
        v = (v.0 + dr, v.1 + dc);
        let (al, ar) = d.ahead(v.0, v.1);
        let nd = if p.inside(al.0, al.1) {
            d.left()
        } else if p.inside(ar.0, ar.1) {
            d
        } else {
            d.right()
        };
        if v == start {
            break;
        }
        if nd != d {
            out.push(v);
        }
        d = nd;
    }
    out
}

/// Footprint of every component with at least `min_area` pixels, using
/// 8-connected labels.
pub fn extract_contours(m: &BuildingMask, geo: &Geotransform, min_area: usize) -> Vec<FootprintPolygon> {
    let labels = connected_components(m, Connectivity::Eight);
    extract_labeled_contours(&labels, geo, min_area)
}

pub fn extract_labeled_contours(labels: &Labels, geo: &Geotransform, min_area: usize) -> Vec<FootprintPolygon> {
    let (h, w) = (labels.height, labels.width);
    let n = labels.count as usize;
    // bounding boxes and first pixel per label
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n + 1];
    let mut first = vec![None; n + 1];
    let mut size = vec![0usize; n + 1];
    for r in 0..h {
        for c in 0..w {
            let l = labels.at(r, c) as usize;
            if l == 0 {
                continue;
            }
            let b = &mut bbox[l];
            *b = (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c));
            first[l].get_or_insert((r, c));
            size[l] += 1;
        }
    }
    let mut out = Vec::new();
    for l in 1..=n {
        if size[l] < min_area.max(1) {
            continue;
        }
        let (rmin, cmin, rmax, cmax) = bbox[l];
        let (r0, c0) = (rmin as isize - 1, cmin as isize - 1);
        let (ph, pw) = (rmax - rmin + 3, cmax - cmin + 3);
        let mut bits = vec![false; ph * pw];
        for r in rmin..=rmax {
            for c in cmin..=cmax {
                if labels.at(r, c) as usize == l {
                    bits[(r + 1 - rmin) * pw + (c + 1 - cmin)] = true;
                }
            }
        }
        let mut patch = Patch {
            r0,
            c0,
            h: ph,
            w: pw,
            bits,
        };
        patch.bridge_diagonals();
        // bridging fills to the right of or below an existing pixel, so the
        // raster-first pixel is unchanged
        let (fr, fc) = first[l].expect("non-empty component");
        let corners = trace_outer(&patch, (fr as isize, fc as isize));
        let mut ring: Vec<(f64, f64)> = corners
            .iter()
            .map(|&(r, c)| geo.corner(r as f64, c as f64))
            .collect();
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        out.push(FootprintPolygon {
            ring,
            component: l as u32,
        });
    }
    out
}

/// Pixels whose centres fall inside the ring (even-odd rule).
pub fn rasterize(p: &FootprintPolygon, geo: &Geotransform, h: usize, w: usize) -> BuildingMask {
    BuildingMask::from_fn(h, w, |r, c| {
        let (x, y) = geo.pixel_center(r, c);
        let mut inside = false;
        for (a, b) in edges(&p.ring) {
            if (a.1 > y) != (b.1 > y) {
                let xi = a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0);
                if x < xi {
                    inside = !inside;
                }
            }
        }
        inside
    })
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    libm::hypot(p.0 - (a.0 + t * dx), p.1 - (a.1 + t * dy))
}

/// Distance from `p` to the closed ring's boundary.
pub fn distance_to_ring(p: (f64, f64), ring: &[(f64, f64)]) -> f64 {
    edges(ring)
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn douglas_peucker(pts: &[(f64, f64)], tol: f64, keep: &mut [bool], lo: usize, hi: usize) {
    if hi <= lo + 1 {
        return;
    }
    let (mut far, mut dmax) = (lo, -1.0);
    for i in lo + 1..hi {
        let d = point_segment_distance(pts[i], pts[lo], pts[hi]);
        if d > dmax {
            dmax = d;
            far = i;
        }
    }
    if dmax > tol {
        keep[far] = true;
        douglas_peucker(pts, tol, keep, lo, far);
        douglas_peucker(pts, tol, keep, far, hi);
    }
}

fn simplify_once(ring: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    let n = ring.len();
    // split the closed ring at vertex 0 and the vertex farthest from it
    let split = (1..n)
        .max_by(|&a, &b| {
            let da = libm::hypot(ring[a].0 - ring[0].0, ring[a].1 - ring[0].1);
            let db = libm::hypot(ring[b].0 - ring[0].0, ring[b].1 - ring[0].1);
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut pts: Vec<(f64, f64)> = ring.to_vec();
    pts.push(ring[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[split] = true;
    douglas_peucker(&pts, tol, &mut keep, 0, split);
    douglas_peucker(&pts, tol, &mut keep, split, n);
    (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect()
}

/// Douglas–Peucker on the closed ring. Every dropped vertex lies within
/// `tolerance` of the result. If simplification would make the ring
/// self-intersect, the tolerance is halved until it does not.
pub fn simplify(p: &FootprintPolygon, tolerance: f64) -> Result<FootprintPolygon> {
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("simplify", "tolerance must be >= 0"));
    }
    if tolerance == 0.0 {
        return Ok(p.clone());
    }
    let was_simple = is_simple(&p.ring);
    let mut tol = tolerance;
    loop {
        let ring = simplify_once(&p.ring, tol);
        let mut distinct = ring.clone();
        distinct.dedup();
        if distinct.len() < 3 || signed_area(&ring) == 0.0 {
            return Err(Error::DegeneratePolygon {
                vertices: distinct.len(),
            });
        }
        if !was_simple || is_simple(&ring) {
            return Ok(FootprintPolygon {
                ring,
                component: p.component,
            });
        }
        tol *= 0.5;
        if tol < 1e-12 * tolerance {
            return Ok(p.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BuildingMask {
        let h = rows.len();
        let w = rows[0].len();
        BuildingMask::from_fn(h, w, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn binarize_examples() {
        let bg = Grid::full(&[3, 3], 0.0);
        assert_eq!(binarize(&bg, 1.0).unwrap().count(), 0);
        let all = Grid::full(&[3, 3], 6.0);
        assert_eq!(binarize(&all, 6.0).unwrap().count(), 9);
        let checker = Grid::new(vec![2, 2], vec![6.0, 2.0, 2.0, 6.0]).unwrap();
        assert_eq!(binarize(&checker, 6.0).unwrap().grid().data(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(BuildingMask::new(Grid::full(&[1, 1], 0.5)).is_err());
    }

    #[test]
    fn component_examples() {
        assert_eq!(connected_components(&BuildingMask::empty(4, 4), Connectivity::Eight).count, 0);
        let two = mask(&["#...", "...#"]);
        assert_eq!(connected_components(&two, Connectivity::Four).count, 2);
        let diag = mask(&["#.", ".#"]);
        assert_eq!(connected_components(&diag, Connectivity::Eight).count, 1);
        assert_eq!(connected_components(&diag, Connectivity::Four).count, 2);
        let order = mask(&["..#", "#..", "..."]);
        let l = connected_components(&order, Connectivity::Four);
        assert_eq!((l.at(0, 2), l.at(1, 0)), (1, 2));
    }

    #[test]
    fn single_pixel_square() {
        let m = mask(&["....", "..#.", "...."]);
        let polys = extract_contours(&m, &Geotransform::unit(), 1);
        assert_eq!(polys.len(), 1);
        let p = &polys[0];
        assert_eq!(p.ring.len(), 4);
        assert!((p.area() - 1.0).abs() < 1e-15);
        // centre of pixel (1, 2) is (2.5, -1.5)
        let cx = p.ring.iter().map(|v| v.0).sum::<f64>() / 4.0;
        let cy = p.ring.iter().map(|v| v.1).sum::<f64>() / 4.0;
        assert_eq!((cx, cy), (2.5, -1.5));
        p.check().unwrap();
    }

    #[test]
    fn block_area_exact() {
        let m = BuildingMask::from_fn(14, 14, |r, c| (2..12).contains(&r) && (3..13).contains(&c));
        let polys = extract_contours(&m, &Geotransform::unit(), DEFAULT_MIN_AREA);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].ring.len(), 4);
        assert_eq!(polys[0].area(), 100.0);
        assert!(extract_contours(&BuildingMask::empty(5, 5), &Geotransform::unit(), 1).is_empty());
    }

    #[test]
    fn min_area_filters_speckle() {
        let m = mask(&["#....", ".....", "..###", "..###"]);
        let polys = extract_contours(&m, &Geotransform::unit(), 2);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].area(), 6.0);
    }

    #[test]
    fn diagonal_contact_stays_simple() {
        let m = mask(&["##...", "##...", "..##.", "..##.", "....#"]);
        let polys = extract_contours(&m, &Geotransform::unit(), 1);
        assert_eq!(polys.len(), 1);
        polys[0].check().unwrap();
    }

    #[test]
    fn courtyard_is_dropped() {
        let m = mask(&["#####", "#...#", "#...#", "#####"]);
        let polys = extract_contours(&m, &Geotransform::unit(), 1);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].area(), 20.0);
    }

    fn staircase_diamond() -> FootprintPolygon {
        // CCW diamond with corners (5,0), (10,5), (5,10), (0,5), edges made
        // of unit steps
        let mut ring = Vec::new();
        let mut p = (0.0, 5.0);
        let legs: [((f64, f64), (f64, f64)); 4] =
            [((1.0, 0.0), (0.0, -1.0)), ((0.0, 1.0), (1.0, 0.0)), ((-1.0, 0.0), (0.0, 1.0)), ((0.0, -1.0), (-1.0, 0.0))];
        // each leg: 5 (a, b) steps
        let firsts = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)];
        for (k, (a, b)) in legs.iter().enumerate() {
            let (s1, s2) = if firsts[k] == *a { (*a, *b) } else { (*b, *a) };
            for _ in 0..5 {
                ring.push(p);
                p = (p.0 + s1.0, p.1 + s1.1);
                ring.push(p);
                p = (p.0 + s2.0, p.1 + s2.1);
            }
        }
        FootprintPolygon { ring, component: 1 }
    }

    #[test]
    fn simplify_examples() {
        let d = staircase_diamond();
        d.check().unwrap();
        assert_eq!(simplify(&d, 0.0).unwrap(), d);
        let s = simplify(&d, 1.5).unwrap();
        assert_eq!(s.ring.len(), 4);
        assert!(is_simple(&s.ring) && signed_area(&s.ring) > 0.0);
        assert!(d.ring.iter().all(|&p| distance_to_ring(p, &s.ring) <= 1.5));

        let with_mid = FootprintPolygon {
            ring: vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 2.0), (0.0, 2.0)],
            component: 3,
        };
        let s = simplify(&with_mid, 1e-9).unwrap();
        assert_eq!(s.ring, vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        assert_eq!(s.component, 3);

        let tri = FootprintPolygon {
            ring: vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.01)],
            component: 1,
        };
        assert!(matches!(simplify(&tri, 1.0), Err(Error::DegeneratePolygon { .. })));
    }

    #[test]
    fn simple_checks() {
        assert!(is_simple(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]));
        assert!(!is_simple(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]));
        assert!(!is_simple(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0)]));
    }
}
