//! Small convolutional encoder that yields the two feature resolutions the
//! registration block consumes: `F_h` at 1/4 and `F_l` at 1/8 of the input.
//!
//! conv3×3+relu → pool → conv3×3+relu → pool → `F_h` → conv3×3+relu → pool
//! → conv3×3+relu → `F_l`

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{conv2d, max_pool2, relu, Grid, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub convs: [KernelSpec; 4],
}

impl ToyEncoderParams {
    pub fn high_channels(&self) -> usize {
        self.convs[1].dims().3
    }

    pub fn low_channels(&self) -> usize {
        self.convs[3].dims().3
    }

    pub fn in_channels(&self) -> usize {
        self.convs[0].dims().2
    }

    pub fn check(&self) -> Result<()> {
        let mut c = self.in_channels();
        for k in &self.convs {
            k.check()?;
            let (_, _, cin, cout) = k.dims();
            if cin != c {
                return Err(Error::invalid("ToyEncoderParams", "conv chain channel mismatch"));
            }
            c = cout;
        }
        Ok(())
    }
}

pub fn check_input(image: &Grid, in_channels: usize) -> Result<(usize, usize)> {
    let (h, w, c) = image.dims3("sffde_forward")?;
    if c != in_channels {
        return Err(Error::invalid(
            "sffde_forward",
            alloc::format!("expected {in_channels} input channels, got {c}"),
        ));
    }
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::invalid(
            "sffde_forward",
            alloc::format!("input {h}×{w} is not a positive multiple of 8"),
        ));
    }
    Ok((h, w))
}

/// Returns `(F_h, F_l)`.
pub fn encode(image: &Grid, p: &ToyEncoderParams) -> Result<(Grid, Grid)> {
    p.check()?;
    check_input(image, p.in_channels())?;
    let block = |g: &Grid, k: &KernelSpec| conv2d(g, k).map(|o| relu(&o));
    let x = max_pool2(&block(image, &p.convs[0])?)?;
    let f_h = max_pool2(&block(&x, &p.convs[1])?)?;
    let x = max_pool2(&block(&f_h, &p.convs[2])?)?;
    let f_l = block(&x, &p.convs[3])?;
    Ok((f_h, f_l))
}

pub(crate) fn conv_names(prefix: &str) -> Vec<alloc::string::String> {
    (1..=4).map(|i| alloc::format!("{prefix}.conv{i}")).collect()
}
