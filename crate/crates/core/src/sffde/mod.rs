//! The elevation network forward pass.
//!
//! `image → encoder → (F_h, F_l)`; `F_l` is flattened and globalized by
//! multi-head ESG plus the feature projection; the registration block warps
//! the globalized map onto `F_h` and adds the two; a 3×3 head predicts one
//! elevation channel which is bilinearly upsampled to the input size.

pub mod encoder;
pub mod esg;
pub mod flow;
pub mod loss;

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub use encoder::{encode, ToyEncoderParams};
pub use esg::{esg_attend, esg_project, esg_qkv, multi_head_esg, EsgParams, EsgProjection};
pub use flow::{gen_flow, l2g_forward, l2g_register, warp, FlowField, L2gParams, L2gTrace, PixelLattice};
pub use loss::{berhu_loss, berhu_loss_at, berhu_threshold, berhu_value, BerHuConfig};

use crate::error::{Error, Result};
use crate::grid::{bilinear_resize, conv2d, flatten, unflatten, Grid, KernelSpec, Shape2D};
use crate::rng::{seeded, uniform, SeededRng};

/// Network hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SffdeConfig {
    pub in_channels: usize,
    /// Encoder widths: `[F_h channels, F_l channels]`.
    pub encoder_widths: [usize; 2],
    /// Width `D` of Q, K, V, the head concatenation and the projection.
    pub esg_dim: usize,
    pub heads: usize,
    /// Common width both resolutions are mapped to before registration.
    pub reg_dim: usize,
    pub c_fraction: f64,
}

impl Default for SffdeConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            encoder_widths: [32, 64],
            esg_dim: 64,
            heads: 8,
            reg_dim: 32,
            c_fraction: 0.2,
        }
    }
}

impl SffdeConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            self.in_channels,
            self.encoder_widths[0],
            self.encoder_widths[1],
            self.esg_dim,
            self.heads,
            self.reg_dim,
        ];
        if positive.contains(&0) {
            return Err(Error::invalid("SffdeConfig", "all widths must be >= 1"));
        }
        if !self.esg_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid("SffdeConfig", "esg_dim must be divisible by heads"));
        }
        BerHuConfig::new(self.c_fraction)?;
        Ok(())
    }

    pub fn berhu(&self) -> BerHuConfig {
        BerHuConfig {
            c_fraction: self.c_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SffdeParams {
    pub config: SffdeConfig,
    pub encoder: ToyEncoderParams,
    pub esg: EsgParams,
    pub projection: EsgProjection,
    pub l2g: L2gParams,
    pub head: KernelSpec,
}

fn uniform_grid(rng: &mut SeededRng, shape: &[usize], bound: f64) -> Grid {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| uniform(rng, -bound, bound)).collect();
    Grid::new(shape.to_vec(), data).expect("shape and data agree")
}

fn init_conv(rng: &mut SeededRng, k: usize, cin: usize, cout: usize, gain: f64) -> KernelSpec {
    let bound = gain * libm::sqrt(1.0 / (k * k * cin) as f64);
    KernelSpec {
        weights: uniform_grid(rng, &[k, k, cin, cout], bound),
        bias: vec![0.0; cout],
    }
}

impl SffdeParams {
    /// Seeded initialisation. Encoder convs use He-uniform bounds, the
    /// attention and mapping weights `1/√fan_in`, and the flow head starts
    /// at zero so registration begins as plain upsampling.
    pub fn init(config: &SffdeConfig, seed: u64) -> Result<Self> {
        config.check()?;
        let mut rng = seeded(seed);
        let [ch, cl] = config.encoder_widths;
        let he = libm::sqrt(6.0);
        let encoder = ToyEncoderParams {
            convs: [
                init_conv(&mut rng, 3, config.in_channels, ch, he),
                init_conv(&mut rng, 3, ch, ch, he),
                init_conv(&mut rng, 3, ch, cl, he),
                init_conv(&mut rng, 3, cl, cl, he),
            ],
        };
        let d = config.esg_dim;
        let bq = 1.0 / libm::sqrt(cl as f64);
        let bd = 1.0 / libm::sqrt(d as f64);
        let esg = EsgParams::new(
            uniform_grid(&mut rng, &[cl, d], bq),
            uniform_grid(&mut rng, &[cl, d], bq),
            uniform_grid(&mut rng, &[cl, d], bq),
            config.heads,
            uniform_grid(&mut rng, &[d, d], bd),
        )?;
        let projection = EsgProjection {
            fc: uniform_grid(&mut rng, &[d, d], bd),
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        };
        let r = config.reg_dim;
        let l2g = L2gParams {
            map_high: init_conv(&mut rng, 1, ch, r, 1.0),
            map_low: init_conv(&mut rng, 1, d, r, 1.0),
            flow: flow::zero_flow_kernel(r),
        };
        let head = init_conv(&mut rng, 3, r, 1, 1.0);
        let p = Self {
            config: config.clone(),
            encoder,
            esg,
            projection,
            l2g,
            head,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let c = &self.config;
        c.check()?;
        self.encoder.check()?;
        self.esg.check()?;
        self.l2g.check()?;
        self.head.check()?;
        let [ch, cl] = c.encoder_widths;
        let d = c.esg_dim;
        let ok = self.encoder.in_channels() == c.in_channels
            && self.encoder.high_channels() == ch
            && self.encoder.low_channels() == cl
            && self.esg.in_channels() == cl
            && self.esg.dim() == d
            && self.esg.heads == c.heads
            && self.projection.fc.shape() == [d, d]
            && self.projection.gamma.len() == d
            && self.projection.beta.len() == d
            && self.l2g.map_high.dims().2 == ch
            && self.l2g.map_low.dims().2 == d
            && self.l2g.dim() == c.reg_dim
            && self.head.dims().2 == c.reg_dim
            && self.head.dims().3 == 1;
        if !ok {
            return Err(Error::invalid("SffdeParams", "tensor shapes disagree with config"));
        }
        Ok(())
    }

    /// Every tensor under a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Grid)> {
        let mut out = Vec::new();
        let mut conv = |name: String, k: &KernelSpec| {
            out.push((alloc::format!("{name}.weight"), k.weights.clone()));
            out.push((alloc::format!("{name}.bias"), vector(&k.bias)));
        };
        for (name, k) in encoder::conv_names("encoder").into_iter().zip(&self.encoder.convs) {
            conv(name, k);
        }
        conv("l2g.map_high".to_string(), &self.l2g.map_high);
        conv("l2g.map_low".to_string(), &self.l2g.map_low);
        conv("l2g.flow".to_string(), &self.l2g.flow);
        conv("head".to_string(), &self.head);
        out.push(("esg.w_q".to_string(), self.esg.w_q.clone()));
        out.push(("esg.w_k".to_string(), self.esg.w_k.clone()));
        out.push(("esg.w_v".to_string(), self.esg.w_v.clone()));
        out.push(("esg.w_out".to_string(), self.esg.w_out.clone()));
        out.push(("proj.fc".to_string(), self.projection.fc.clone()));
        out.push(("proj.gamma".to_string(), vector(&self.projection.gamma)));
        out.push(("proj.beta".to_string(), vector(&self.projection.beta)));
        out
    }

    /// Rebuild from named tensors; `lookup` returns `None` for a missing name.
    pub fn from_tensors(config: &SffdeConfig, mut lookup: impl FnMut(&str) -> Option<Grid>) -> Result<Self> {
        let mut take = |name: &str| -> Result<Grid> {
            lookup(name).ok_or_else(|| Error::invalid("SffdeParams", alloc::format!("missing tensor `{name}`")))
        };
        let mut conv = |name: &str| -> Result<KernelSpec> {
            let w = take(&alloc::format!("{name}.weight"))?;
            let b = take(&alloc::format!("{name}.bias"))?;
            KernelSpec::new(w, b.into_data())
        };
        let names = encoder::conv_names("encoder");
        let encoder = ToyEncoderParams {
            convs: [conv(&names[0])?, conv(&names[1])?, conv(&names[2])?, conv(&names[3])?],
        };
        let l2g = L2gParams {
            map_high: conv("l2g.map_high")?,
            map_low: conv("l2g.map_low")?,
            flow: conv("l2g.flow")?,
        };
        let head = conv("head")?;
        let esg = EsgParams::new(
            take("esg.w_q")?,
            take("esg.w_k")?,
            take("esg.w_v")?,
            config.heads,
            take("esg.w_out")?,
        )?;
        let projection = EsgProjection {
            fc: take("proj.fc")?,
            gamma: take("proj.gamma")?.into_data(),
            beta: take("proj.beta")?.into_data(),
        };
        let p = Self {
            config: config.clone(),
            encoder,
            esg,
            projection,
            l2g,
            head,
        };
        p.check()?;
        Ok(p)
    }
}

fn vector(v: &[f64]) -> Grid {
    Grid::new(vec![v.len()], v.to_vec()).expect("rank-1 grid")
}

/// Features entering the registration block: `F_h` and the globalized
/// `F_l` reshaped back to its raster.
#[derive(Debug, Clone)]
pub struct Features {
    pub high: Grid,
    pub low_global: Grid,
}

pub fn extract_features(image: &Grid, p: &SffdeParams) -> Result<Features> {
    let (high, low) = encode(image, &p.encoder)?;
    let (hl, wl, _) = low.dims3("sffde_forward")?;
    let attended = multi_head_esg(&flatten(&low)?, &p.esg)?;
    let projected = esg_project(&attended, &p.projection)?;
    Ok(Features {
        high,
        low_global: unflatten(&projected, hl, wl)?,
    })
}

/// Head + upsampling from registered features to an `h×w` elevation map.
pub fn predict_from_features(f: &Features, l2g: &L2gParams, head: &KernelSpec, h: usize, w: usize) -> Result<Grid> {
    let registered = l2g_register(&f.high, &f.low_global, l2g)?;
    let coarse = conv2d(&registered, head)?;
    let up = bilinear_resize(&coarse, Shape2D::new(h, w, 1)?)?;
    up.reshape(&[h, w])
}

/// `H×W×C` image to an `H×W` elevation map; `H` and `W` must be multiples
/// of 8.
pub fn sffde_forward(image: &Grid, p: &SffdeParams) -> Result<Grid> {
    let (h, w) = encoder::check_input(image, p.config.in_channels)?;
    let f = extract_features(image, p)?;
    predict_from_features(&f, &p.l2g, &p.head, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SffdeConfig {
        SffdeConfig {
            in_channels: 3,
            encoder_widths: [4, 6],
            esg_dim: 4,
            heads: 2,
            reg_dim: 3,
            c_fraction: 0.2,
        }
    }

    fn image(h: usize, w: usize) -> Grid {
        Grid::from_fn3(h, w, 3, |y, x, c| libm::sin((y * 31 + x * 7 + c * 3) as f64 * 0.1))
    }

    #[test]
    fn forward_shape_and_determinism() {
        let p = SffdeParams::init(&small(), 5).unwrap();
        for (h, w) in [(8, 8), (16, 24), (32, 8)] {
            let a = sffde_forward(&image(h, w), &p).unwrap();
            assert_eq!(a.shape(), &[h, w]);
            assert!(a.all_finite());
            let b = sffde_forward(&image(h, w), &p).unwrap();
            assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                       b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn forward_rejects_bad_sizes() {
        let p = SffdeParams::init(&small(), 5).unwrap();
        assert!(sffde_forward(&image(12, 16), &p).is_err());
        assert!(sffde_forward(&Grid::zeros(&[8, 8, 2]), &p).is_err());
    }

    #[test]
    fn tensors_round_trip() {
        let p = SffdeParams::init(&small(), 9).unwrap();
        let named = p.tensors();
        let q = SffdeParams::from_tensors(&small(), |n| {
            named.iter().find(|(k, _)| k == n).map(|(_, g)| g.clone())
        })
        .unwrap();
        assert_eq!(p, q);
        assert!(SffdeParams::from_tensors(&small(), |_| None).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.heads = 3;
        assert!(c.check().is_err());
        let mut c = small();
        c.c_fraction = 0.0;
        assert!(c.check().is_err());
    }
}
