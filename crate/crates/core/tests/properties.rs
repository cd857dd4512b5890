use building3d_core::grid::{
    bilinear_resize, conv2d, flatten, layernorm, matmul, relu, softmax_rows, unflatten, Grid, KernelSpec, Shape2D,
};
use building3d_core::mask::{
    binarize, connected_components, extract_contours, is_simple, rasterize, signed_area, simplify, BuildingMask,
    Connectivity,
};
use building3d_core::metrics::{accumulate, evaluate, MetricsAccumulator};
use building3d_core::raster::{fuse_patches, gaussian_filter, plan_tiles, Geotransform, Raster};
use building3d_core::recon::{mask_elevation, to_point_cloud};
use building3d_core::sffde::{berhu_loss, esg_attend, esg_qkv, warp, BerHuConfig, EsgParams, FlowField};
use proptest::prelude::*;

fn grid(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Grid> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Grid::new(shape.clone(), d).unwrap())
}

fn sized(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Grid> {
    (rows, cols).prop_flat_map(move |(r, c)| grid(vec![r, c], lo, hi))
}

fn mask_strategy(max: usize) -> impl Strategy<Value = BuildingMask> {
    (1..max, 1..max).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::bool::weighted(0.45), h * w)
            .prop_map(move |bits| BuildingMask::from_fn(h, w, |r, c| bits[r * w + c]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(a in sized(1..6, 1..9, -500.0, 500.0)) {
        let s = softmax_rows(&a).unwrap();
        let w = a.shape()[1];
        for r in s.data().chunks(w) {
            prop_assert!(r.iter().all(|&v| v >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn flatten_round_trip(g in (1..5usize, 1..5usize, 1..4usize).prop_flat_map(|(h, w, c)| grid(vec![h, w, c], -9.0, 9.0))) {
        let (h, w) = (g.shape()[0], g.shape()[1]);
        prop_assert_eq!(unflatten(&flatten(&g).unwrap(), h, w).unwrap(), g);
    }

    #[test]
    fn matmul_is_associative(a in grid(vec![4, 4], -2.0, 2.0), b in grid(vec![4, 4], -2.0, 2.0), c in grid(vec![4, 4], -2.0, 2.0)) {
        let l = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let r = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in l.data().iter().zip(r.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn resize_is_exact_on_ramps(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
                                h in 2..7usize, w in 2..7usize, oh in 1..15usize, ow in 1..15usize) {
        let g = Grid::from_fn3(h, w, 1, |y, x, _| a * x as f64 + b * y as f64 + c);
        let out = bilinear_resize(&g, Shape2D::new(oh, ow, 1).unwrap()).unwrap();
        let src = |i: usize, n_in: usize, n_out: usize| if n_out == 1 { 0.0 } else { i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64 };
        for y in 0..oh {
            for x in 0..ow {
                let want = a * src(x, w, ow) + b * src(y, h, oh) + c;
                prop_assert!((out.at3(y, x, 0) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_conv_is_bit_exact(g in (1..6usize, 1..6usize, 1..4usize).prop_flat_map(|(h, w, c)| grid(vec![h, w, c], -50.0, 50.0))) {
        let k = KernelSpec::identity(g.shape()[2]);
        prop_assert_eq!(conv2d(&g, &k).unwrap(), g);
    }

    #[test]
    fn relu_is_idempotent(g in sized(1..5, 1..5, -3.0, 3.0)) {
        let once = relu(&g);
        prop_assert_eq!(relu(&once), once);
    }

    #[test]
    fn layernorm_rows_are_standardised(g in sized(1..5, 2..7, -10.0, 10.0)) {
        let d = g.shape()[1];
        let out = layernorm(&g, &vec![1.0; d], &vec![0.0; d], 1e-12).unwrap();
        for (row, src) in out.data().chunks(d).zip(g.data().chunks(d)) {
            let spread = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - src.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations(q in grid(vec![5, 3], -2.0, 2.0), k in grid(vec![5, 3], -2.0, 2.0), v in grid(vec![5, 4], -5.0, 5.0)) {
        let out = esg_attend(&q, &k, &v).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..5).map(|i| v.at2(i, j)).collect();
            let (lo, hi) = (col.iter().cloned().fold(f64::INFINITY, f64::min), col.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            for i in 0..5 {
                prop_assert!(out.at2(i, j) >= lo - 1e-12 && out.at2(i, j) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn attention_is_permutation_equivariant(f in grid(vec![6, 3], -1.0, 1.0), w in grid(vec![3, 9], -1.0, 1.0),
                                            perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
        let part = |o: usize| Grid::new(vec![3, 3], (0..9).map(|i| w.data()[(i / 3) * 9 + o + i % 3]).collect()).unwrap();
        let p = EsgParams::new(part(0), part(3), part(6), 1, Grid::identity(3)).unwrap();
        let (q, k, v) = esg_qkv(&f, &p).unwrap();
        let out = esg_attend(&q, &k, &v).unwrap();
        let fp = Grid::new(vec![6, 3], perm.iter().flat_map(|&i| f.row(i).to_vec()).collect()).unwrap();
        let (q, k, v) = esg_qkv(&fp, &p).unwrap();
        let outp = esg_attend(&q, &k, &v).unwrap();
        for (r, &src) in perm.iter().enumerate() {
            for (a, b) in outp.row(r).iter().zip(out.row(src)) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn zero_flow_warp_is_upsampling(f in (1..5usize, 1..5usize).prop_flat_map(|(h, w)| grid(vec![h, w, 2], -4.0, 4.0)),
                                    sh in 1..4usize, sw in 1..4usize) {
        let (h, w) = (f.shape()[0] * sh, f.shape()[1] * sw);
        let out = Shape2D::new(h, w, 2).unwrap();
        let a = warp(&f, &FlowField::zeros(h, w), out).unwrap();
        let b = bilinear_resize(&f, out).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_stays_in_range(f in grid(vec![3, 3, 1], -4.0, 4.0), s in grid(vec![6, 6, 2], -1.0, 1.0)) {
        // clamp displacements so every sample lands inside the map
        let s = Grid::from_fn3(6, 6, 2, |y, x, c| {
            let p = if c == 0 { x } else { y } as f64;
            (p + s.at3(y, x, c)).clamp(0.0, 5.0) - p
        });
        let up = bilinear_resize(&f, Shape2D::new(6, 6, 1).unwrap()).unwrap();
        let (lo, hi) = (up.data().iter().cloned().fold(f64::INFINITY, f64::min), up.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let out = warp(&f, &FlowField::new(s).unwrap(), Shape2D::new(6, 6, 1).unwrap()).unwrap();
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn berhu_is_nonnegative_and_zero_only_at_equality(p in grid(vec![3, 3], -5.0, 5.0), g in grid(vec![3, 3], -5.0, 5.0)) {
        let cfg = BerHuConfig::default();
        let l = berhu_loss(&p, &g, &cfg, None).unwrap();
        prop_assert!(l > 0.0 || p == g);
        prop_assert_eq!(berhu_loss(&p, &p, &cfg, None).unwrap(), 0.0);
    }

    #[test]
    fn delta_accuracies_nest(p in grid(vec![4, 4], -1.0, 10.0), g in grid(vec![4, 4], 0.1, 10.0)) {
        if let Ok(r) = evaluate(&p, &g, None) {
            prop_assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3);
            prop_assert_eq!(r.n_valid + r.n_excluded, 16);
        }
    }

    #[test]
    fn metrics_scale_as_documented(p in grid(vec![3, 4], 0.5, 9.0), g in grid(vec![3, 4], 0.5, 9.0), k in 0.1..20.0f64) {
        let a = evaluate(&p, &g, None).unwrap();
        let b = evaluate(&p.scale(k), &g.scale(k), None).unwrap();
        prop_assert!((a.rel - b.rel).abs() < 1e-12);
        prop_assert!((a.rmse_log - b.rmse_log).abs() < 1e-9);
        prop_assert!((a.rmse * k - b.rmse).abs() < 1e-9 * b.rmse.max(1.0));
        prop_assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
    }

    #[test]
    fn metrics_ignore_pixel_order(p in grid(vec![1, 12], 0.5, 9.0), g in grid(vec![1, 12], 0.5, 9.0),
                                  perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()) {
        let shuffle = |x: &Grid| Grid::new(vec![1, 12], perm.iter().map(|&i| x.data()[i]).collect()).unwrap();
        prop_assert_eq!(evaluate(&p, &g, None).unwrap(), evaluate(&shuffle(&p), &shuffle(&g), None).unwrap());
    }

    #[test]
    fn split_accumulation_is_exact(p in grid(vec![1, 40], 0.5, 9.0), g in grid(vec![1, 40], 0.5, 9.0), cut in 0..40usize) {
        let whole = accumulate(&p, &g, None).unwrap();
        let mut left = MetricsAccumulator::new();
        let mut right = MetricsAccumulator::new();
        for i in 0..40 {
            if i < cut { left.push(p.data()[i], g.data()[i]) } else { right.push(p.data()[i], g.data()[i]) }
        }
        right.merge(&left);
        prop_assert_eq!(whole.finish(Default::default()).unwrap(), right.finish(Default::default()).unwrap());
    }

    #[test]
    fn tiles_fuse_back_exactly(g in (1..90usize, 1..90usize).prop_flat_map(|(h, w)| grid(vec![h, w], -1e3, 1e3)),
                               tile in 8..40usize, overlap in 0..8usize) {
        let (h, w) = (g.shape()[0], g.shape()[1]);
        let plan = plan_tiles(h, w, tile, overlap).unwrap();
        let fused = fuse_patches(&plan.cut_all(&g).unwrap(), h, w).unwrap();
        let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(fused.grid.data()), bits(g.data()));
    }

    #[test]
    fn tile_plans_cover_and_stay_in_bounds(h in 1..4097usize, w in 1..4097usize, tile in 2..600usize, overlap_frac in 0.0..0.9f64) {
        let overlap = ((tile as f64) * overlap_frac) as usize;
        let plan = plan_tiles(h, w, tile, overlap).unwrap();
        let (th, tw) = (plan.tile_height(), plan.tile_width());
        let mut rows = vec![false; h];
        let mut cols = vec![false; w];
        for &(r, c) in &plan.anchors {
            prop_assert!(r + th <= h && c + tw <= w);
            rows[r..r + th].iter_mut().for_each(|v| *v = true);
            cols[c..c + tw].iter_mut().for_each(|v| *v = true);
        }
        prop_assert!(rows.iter().all(|&v| v) && cols.iter().all(|&v| v));
    }

    #[test]
    fn gaussian_stays_within_input_range(g in sized(1..20, 1..20, -50.0, 50.0), sigma in 0.3..4.0f64) {
        let r = Raster::new(g.clone()).unwrap();
        let out = gaussian_filter(&r, sigma).unwrap();
        let (lo, hi) = (g.data().iter().cloned().fold(f64::INFINITY, f64::min), g.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        prop_assert!(out.grid.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn gaussian_preserves_interior_mass(vals in prop::collection::vec(0.0..10.0f64, 9), sigma in 0.5..2.5f64) {
        let n = 40;
        let mut g = Grid::zeros(&[n, n]);
        for (i, v) in vals.iter().enumerate() {
            g.data_mut()[(19 + i / 3) * n + 19 + i % 3] = *v;
        }
        let out = gaussian_filter(&Raster::new(g.clone()).unwrap(), sigma).unwrap();
        let (a, b): (f64, f64) = (g.data().iter().sum(), out.grid.data().iter().sum());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn binarize_is_binary(labels in sized(1..8, 1..8, 0.0, 4.0), class in 0..4u8) {
        let labels = labels.map(f64::floor);
        let m = binarize(&labels, class as f64).unwrap();
        prop_assert!(m.grid().data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn contours_are_simple_ccw_and_area_faithful(m in mask_strategy(14)) {
        let labels = connected_components(&m, Connectivity::Eight);
        let sizes = labels.sizes();
        for p in extract_contours(&m, &Geotransform::unit(), 1) {
            prop_assert!(is_simple(&p.ring));
            prop_assert!(signed_area(&p.ring) > 0.0);
            let count = sizes[p.component as usize] as f64;
            prop_assert!((p.area() - count).abs() <= p.perimeter() / 2.0);
            let s = simplify(&p, 0.7);
            if let Ok(s) = s {
                prop_assert!(s.ring.len() <= p.ring.len());
                prop_assert!(is_simple(&s.ring));
            }
        }
    }

    #[test]
    fn solid_blocks_rasterize_back(h in 2..9usize, w in 2..9usize, r0 in 0..4usize, c0 in 0..4usize) {
        let (rows, cols) = (h + 6, w + 6);
        let m = BuildingMask::from_fn(rows, cols, |r, c| (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c));
        let geo = Geotransform::new(500.0, 900.0, 0.5, 0.5).unwrap();
        let polys = extract_contours(&m, &geo, 1);
        prop_assert_eq!(polys.len(), 1);
        prop_assert_eq!(rasterize(&polys[0], &geo, rows, cols), m);
    }

    #[test]
    fn masking_is_idempotent(e in sized(1..8, 1..8, 0.0, 30.0), bits in prop::collection::vec(any::<bool>(), 64)) {
        let (h, w) = (e.shape()[0], e.shape()[1]);
        let m = BuildingMask::from_fn(h, w, |r, c| bits[r * w + c]);
        let e = Raster::new(e).unwrap();
        let once = mask_elevation(&e, &m).unwrap();
        prop_assert_eq!(&mask_elevation(&once, &m).unwrap(), &once);
        prop_assert_eq!(mask_elevation(&e, &BuildingMask::from_fn(h, w, |_, _| true)).unwrap(), e);
    }

    #[test]
    fn points_map_back_to_their_pixels(e in sized(1..10, 1..10, 0.0, 5.0), gsd in 0.05..3.0f64) {
        let e = Raster::new(e.map(|v| if v < 2.0 { 0.0 } else { v })).unwrap();
        let geo = Geotransform::new(1234.5, 6789.0, gsd, gsd).unwrap();
        let pc = to_point_cloud(&e, Some(&geo), None, true).unwrap();
        prop_assert_eq!(pc.len(), e.grid.data().iter().filter(|&&v| v != 0.0).count());
        for p in &pc.points {
            let (r, c) = geo.world_to_pixel(p[0], p[1]);
            let (r, c) = (r.floor() as usize, c.floor() as usize);
            prop_assert_eq!(e.grid.at2(r, c), p[2]);
        }
    }
}
