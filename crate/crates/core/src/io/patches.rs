//! Training patches: a regular grid of windows with seeded jitter on interior origins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Window origins along one axis: `0, stride, 2·stride, …` plus a final window flush with
/// the end. When windows overlap, interior origins move by up to `(patch − stride)/2`.
pub fn axis_origins(len: usize, patch: usize, stride: usize, rng: &mut impl Rng) -> Vec<usize> {
    let last = len - patch;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().expect("0 is always an origin") != last {
        origins.push(last);
    }
    let reach = patch.saturating_sub(stride) / 2;
    if reach > 0 && origins.len() > 2 {
        let n = origins.len();
        for o in &mut origins[1..n - 1] {
            let shift = rng.gen_range(-(reach as i64)..=reach as i64);
            *o = (*o as i64 + shift).clamp(0, last as i64) as usize;
        }
    }
    origins
}

/// Top-left corners `(row, col)` of every patch, row-major.
pub fn patch_windows(
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidConfig("patch and stride must be positive".into()));
    }
    if patch > height.min(width) {
        return Err(Error::PatchTooLarge { patch, height, width });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = axis_origins(height, patch, stride, &mut rng);
    let cols = axis_origins(width, patch, stride, &mut rng);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

pub fn extract_patches(cube: &HsiCube, patch: usize, stride: usize, seed: u64) -> Result<Vec<HsiCube>> {
    patch_windows(cube.height(), cube.width(), patch, stride, seed)?
        .into_iter()
        .map(|(r, c)| cube.crop(r, c, patch, patch))
        .collect()
}
