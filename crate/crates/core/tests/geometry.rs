use building3d_core::mask::{connected_components, extract_contours, BuildingMask, Connectivity, DEFAULT_MIN_AREA};
use building3d_core::raster::{gaussian_filter, Raster};
use building3d_core::recon::{
    extrude_lod1, heightfield_mesh, is_wall, make_synthetic_scene, mask_elevation, to_point_cloud, HeightStat,
    SceneSpec, SyntheticScene,
};

fn scene() -> SyntheticScene {
    let mut spec = SceneSpec::new(2024, (256, 256), 10, (3.0, 25.0));
    spec.size_range = (36, 56);
    spec.gap = 6;
    make_synthetic_scene(&spec).unwrap()
}

/// `(recovered top, true height, recovered volume, true volume)` per building.
fn heights(dsm: &Raster, s: &SyntheticScene) -> Vec<(f64, f64, f64, f64)> {
    let e = mask_elevation(dsm, &s.mask).unwrap();
    let labels = connected_components(&s.mask, Connectivity::Eight);
    let polys = extract_contours(&s.mask, dsm.geo.as_ref().unwrap(), DEFAULT_MIN_AREA);
    let model = extrude_lod1(&polys, &e, &labels, 0.0, HeightStat::Median).unwrap().model;
    assert_eq!(model.buildings.len(), s.prisms.len());
    model
        .buildings
        .iter()
        .map(|b| {
            let (r, c) = {
                let i = labels.labels.iter().position(|&l| l == b.id).unwrap();
                (i / labels.width, i % labels.width)
            };
            let truth = s.prisms.iter().find(|p| p.contains(r, c)).unwrap();
            (b.top, truth.height, b.volume(), truth.footprint.area() * truth.height)
        })
        .collect()
}

#[test]
fn clean_scene_recovers_heights_exactly() {
    let s = scene();
    for (got, want, vol, true_vol) in heights(&s.dsm, &s) {
        assert_eq!(got, want);
        assert!((vol - true_vol).abs() < 1e-9 * true_vol);
    }
}

#[test]
fn smoothed_scene_stays_within_five_centimetres() {
    let s = scene();
    let smooth = gaussian_filter(&s.dsm, 2.0).unwrap();
    for (got, want, _, _) in heights(&smooth, &s) {
        assert!((got - want).abs() <= 0.05, "{got} vs {want}");
    }
}

#[test]
fn wall_area_matches_lattice_perimeter() {
    let s = scene();
    let gsd = s.dsm.geo.unwrap().pixel_size_x;
    for p in &s.prisms {
        let m = BuildingMask::from_fn(s.mask.height(), s.mask.width(), |r, c| p.contains(r, c));
        let mesh = heightfield_mesh(&s.dsm, &m, None, 0.0).unwrap();
        let wall: f64 = (0..mesh.triangles.len()).filter(|&t| is_wall(&mesh, t)).map(|t| mesh.triangle_area(t)).sum();
        let perimeter = 2.0 * ((p.rows - 1) + (p.cols - 1)) as f64 * gsd;
        assert!((wall - perimeter * p.height).abs() <= 1e-6 * wall);
    }
}

#[test]
fn walls_close_the_roof_boundary() {
    let s = scene();
    let mesh = heightfield_mesh(&s.dsm, &s.mask, None, 0.0).unwrap();
    mesh.check().unwrap();
    // every undirected edge of a closed-up roof+wall surface minus its
    // bottom rim is used twice: once per adjacent triangle
    let mut edges = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let base = |i: u32| mesh.vertices[i as usize][2] == 0.0;
    for ((a, b), n) in edges {
        if base(a) && base(b) {
            assert_eq!(n, 1);
        } else {
            assert_eq!(n, 2);
        }
    }
}

#[test]
fn one_point_per_building_pixel() {
    let s = scene();
    let e = mask_elevation(&s.dsm, &s.mask).unwrap();
    let pc = to_point_cloud(&e, None, None, true).unwrap();
    assert_eq!(pc.len(), s.mask.count());
}
