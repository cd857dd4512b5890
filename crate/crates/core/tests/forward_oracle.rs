//! Straight-line reimplementation of the elevation network, written from
//! the operator definitions with nested vectors and no shared helpers,
//! compared against the library forward pass.

use std::collections::HashMap;

use building3d_core::rng::{seeded, uniform};
use building3d_core::sffde::{sffde_forward, SffdeConfig, SffdeParams};
use building3d_core::Grid;

type Map = Vec<Vec<Vec<f64>>>; // [y][x][c]

struct Tensors(HashMap<String, (Vec<usize>, Vec<f64>)>);

impl Tensors {
    fn get(&self, name: &str) -> &(Vec<usize>, Vec<f64>) {
        &self.0[name]
    }
}

fn conv(m: &Map, t: &Tensors, name: &str) -> Map {
    let (shape, w) = t.get(&format!("{name}.weight"));
    let (_, b) = t.get(&format!("{name}.bias"));
    let (kh, kw, cin, cout) = (shape[0], shape[1], shape[2], shape[3]);
    let (h, wd) = (m.len(), m[0].len());
    let mut out = vec![vec![vec![0.0; cout]; wd]; h];
    for y in 0..h {
        for x in 0..wd {
            for co in 0..cout {
                let mut acc = b[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let sy = y as i64 + ky as i64 - (kh / 2) as i64;
                        let sx = x as i64 + kx as i64 - (kw / 2) as i64;
                        if sy < 0 || sx < 0 || sy >= h as i64 || sx >= wd as i64 {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += m[sy as usize][sx as usize][ci] * w[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[y][x][co] = acc;
            }
        }
    }
    out
}

fn relu(m: Map) -> Map {
    m.into_iter()
        .map(|r| r.into_iter().map(|p| p.into_iter().map(|v| v.max(0.0)).collect()).collect())
        .collect()
}

fn pool(m: &Map) -> Map {
    (0..m.len() / 2)
        .map(|y| {
            (0..m[0].len() / 2)
                .map(|x| {
                    (0..m[0][0].len())
                        .map(|c| {
                            let v = [m[2 * y][2 * x][c], m[2 * y][2 * x + 1][c], m[2 * y + 1][2 * x][c], m[2 * y + 1][2 * x + 1][c]];
                            v.into_iter().fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[f64], cols: usize) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..cols).map(|j| row.iter().enumerate().map(|(k, v)| v * b[k * cols + j]).sum()).collect())
        .collect()
}

fn attention(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k.iter().map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum()).collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v[0].len()).map(|c| e.iter().zip(v).map(|(w, vj)| w / z * vj[c]).sum()).collect()
        })
        .collect()
}

/// Align-corners bilinear resize.
fn resize(m: &Map, oh: usize, ow: usize) -> Map {
    let (h, w) = (m.len(), m[0].len());
    let src = |i: usize, n: usize, o: usize| if o == 1 || n == 1 { 0.0 } else { i as f64 * (n - 1) as f64 / (o - 1) as f64 };
    let tent = |d: f64| (1.0 - d.abs()).max(0.0);
    (0..oh)
        .map(|oy| {
            (0..ow)
                .map(|ox| {
                    let (sy, sx) = (src(oy, h, oh), src(ox, w, ow));
                    (0..m[0][0].len())
                        .map(|c| {
                            let mut acc = 0.0;
                            for (y, row) in m.iter().enumerate() {
                                for (x, p) in row.iter().enumerate() {
                                    acc += tent(sy - y as f64) * tent(sx - x as f64) * p[c];
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn oracle(image: &Map, t: &Tensors, cfg: &SffdeConfig) -> Map {
    let x = pool(&relu(conv(image, t, "encoder.conv1")));
    let f_h = pool(&relu(conv(&x, t, "encoder.conv2")));
    let x = pool(&relu(conv(&f_h, t, "encoder.conv3")));
    let f_l = relu(conv(&x, t, "encoder.conv4"));
    let (hl, wl) = (f_l.len(), f_l[0].len());

    let flat: Vec<Vec<f64>> = f_l.iter().flatten().cloned().collect();
    let d = cfg.esg_dim;
    let q = matmul(&flat, &t.get("esg.w_q").1, d);
    let k = matmul(&flat, &t.get("esg.w_k").1, d);
    let v = matmul(&flat, &t.get("esg.w_v").1, d);
    let dh = d / cfg.heads;
    let slice = |m: &[Vec<f64>], h: usize| -> Vec<Vec<f64>> { m.iter().map(|r| r[h * dh..(h + 1) * dh].to_vec()).collect() };
    let mut cat = vec![Vec::new(); flat.len()];
    for h in 0..cfg.heads {
        for (row, o) in cat.iter_mut().zip(attention(&slice(&q, h), &slice(&k, h), &slice(&v, h))) {
            row.extend(o);
        }
    }
    let mixed = matmul(&cat, &t.get("esg.w_out").1, d);
    let fc = matmul(&mixed, &t.get("proj.fc").1, d);
    let (gamma, beta) = (&t.get("proj.gamma").1, &t.get("proj.beta").1);
    let projected: Vec<Vec<f64>> = fc
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / d as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            r.iter().enumerate().map(|(j, v)| ((v - mean) / (var + 1e-5).sqrt() * gamma[j] + beta[j]).max(0.0)).collect()
        })
        .collect();
    let low: Map = projected.chunks(wl).map(|r| r.to_vec()).collect();
    assert_eq!(low.len(), hl);

    let high = conv(&f_h, t, "l2g.map_high");
    let low = conv(&low, t, "l2g.map_low");
    let (hh, wh) = (high.len(), high[0].len());
    let up = resize(&low, hh, wh);
    let fused: Map = up
        .iter()
        .zip(&high)
        .map(|(ru, rh)| ru.iter().zip(rh).map(|(a, b)| a.iter().chain(b).cloned().collect()).collect())
        .collect();
    let flow = conv(&fused, t, "l2g.flow");
    let tent = |d: f64| (1.0 - d.abs()).max(0.0);
    let mut out = high.clone();
    for y in 0..hh {
        for x in 0..wh {
            let (px, py) = (x as f64 + flow[y][x][0], y as f64 + flow[y][x][1]);
            for c in 0..out[0][0].len() {
                let mut acc = 0.0;
                for (i, row) in up.iter().enumerate() {
                    for (j, p) in row.iter().enumerate() {
                        acc += tent(py - i as f64) * tent(px - j as f64) * p[c];
                    }
                }
                out[y][x][c] += acc;
            }
        }
    }
    let coarse = conv(&out, t, "head");
    resize(&coarse, image.len(), image[0].len())
}

fn setup() -> (Grid, SffdeParams, SffdeConfig) {
    let cfg = SffdeConfig {
        in_channels: 3,
        encoder_widths: [4, 6],
        esg_dim: 8,
        heads: 2,
        reg_dim: 4,
        c_fraction: 0.2,
    };
    let mut p = SffdeParams::init(&cfg, 11).unwrap();
    // give the flow head weights so registration actually moves samples
    let mut rng = seeded(12);
    for v in p.l2g.flow.weights.data_mut() {
        *v = uniform(&mut rng, -0.6, 0.6);
    }
    for b in &mut p.l2g.flow.bias {
        *b = uniform(&mut rng, -0.5, 0.5);
    }
    let image = Grid::from_fn3(16, 16, 3, |_, _, _| uniform(&mut rng, 0.0, 1.0));
    (image, p, cfg)
}

#[test]
fn forward_matches_straight_line_oracle() {
    let (image, p, cfg) = setup();
    let got = sffde_forward(&image, &p).unwrap();
    assert_eq!(got.shape(), &[16, 16]);

    let tensors = Tensors(p.tensors().into_iter().map(|(n, g)| (n, (g.shape().to_vec(), g.data().to_vec()))).collect());
    let map: Map = (0..16).map(|y| (0..16).map(|x| (0..3).map(|c| image.at3(y, x, c)).collect()).collect()).collect();
    let want = oracle(&map, &tensors, &cfg);
    let mut worst = 0.0_f64;
    for y in 0..16 {
        for x in 0..16 {
            worst = worst.max((got.at2(y, x) - want[y][x][0]).abs());
        }
    }
    assert!(worst < 1e-10, "max deviation {worst:e}");
}

#[test]
fn forward_matches_recorded_value() {
    let (image, p, _) = setup();
    let out = sffde_forward(&image, &p).unwrap();
    let total: f64 = out.data().iter().sum();
    let corner = out.at2(0, 0);
    assert!((total - GOLDEN_SUM).abs() < 1e-9 * GOLDEN_SUM.abs().max(1.0), "{total:.15e}");
    assert!((corner - GOLDEN_CORNER).abs() < 1e-9, "{corner:.15e}");
    assert_eq!(sffde_forward(&image, &p).unwrap(), out);
}

const GOLDEN_SUM: f64 = 5.388158411204548e1;
const GOLDEN_CORNER: f64 = 3.975262509652872e-2;
