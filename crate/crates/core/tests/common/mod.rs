//! Independent oracles shared by the integration tests. Nothing here calls
//! the code under test except to build inputs.
#![allow(dead_code)]

use ppad::encoder::{forward, grad_prompts, BatchItem, EncoderDims, FrozenEncoders};
use ppad::imaging::BinaryMask;
use ppad::linalg::Matrix;
use ppad::prompts::{PatchGrid, PositionView, PromptParams, ViewKind};
use ppad::rng::{self, Rng};
use ppad::synth::Label;
use rand::Rng as _;

/// Random mask: blobs of random rectangles, sometimes empty in places.
pub fn random_mask(r: &mut Rng, width: usize, height: usize) -> BinaryMask {
    let density: f64 = r.random_range(0.05..0.95);
    let mut m = BinaryMask::from_fn(width, height, |_, _| r.random::<f64>() < density);
    for _ in 0..r.random_range(0..3) {
        let (x0, y0) = (r.random_range(0..width), r.random_range(0..height));
        let (x1, y1) = (r.random_range(x0..width), r.random_range(y0..height));
        let fill = r.random::<bool>();
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, fill);
            }
        }
    }
    m
}

/// Distance from every mask pixel to the nearest pixel that is not in the
/// mask, where everything beyond the image border counts as outside.
/// Returns squared distances so the comparison is exact.
pub fn brute_force_sq_edt(mask: &BinaryMask) -> Vec<i64> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let outside: Vec<(i64, i64)> = (-1..=h)
        .flat_map(|y| (-1..=w).map(move |x| (x, y)))
        .filter(|&(x, y)| x < 0 || y < 0 || x >= w || y >= h || !mask.get(x as usize, y as usize))
        .collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                out.push(0);
                continue;
            }
            let best = outside.iter().map(|&(ox, oy)| (ox - x).pow(2) + (oy - y).pow(2)).min().unwrap();
            out.push(best);
        }
    }
    out
}

/// Probability that a random abnormal outscores a random normal, ties
/// counting one half.
pub fn pairwise_auc(scores: &[(f64, Label)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1.is_abnormal()).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1.is_abnormal()).map(|s| s.0).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn random_scores(r: &mut Rng, max_len: usize) -> Vec<(f64, Label)> {
    let n = r.random_range(2..=max_len);
    let levels = r.random_range(2..12);
    let mut s: Vec<(f64, Label)> = (0..n)
        .map(|_| {
            let label = if r.random::<bool>() { Label::Abnormal } else { Label::Normal };
            // coarse levels so ties are common
            (r.random_range(0..levels) as f64 / levels as f64, label)
        })
        .collect();
    s[0].1 = Label::Normal;
    s[1].1 = Label::Abnormal;
    s
}

/// A small random problem for gradient checks: `d = f = 8`, a 3×3 patch grid
/// of 2×2 patches, two text-prompt rows.
pub struct GradCase {
    pub enc: FrozenEncoders,
    pub params: PromptParams,
    pub projected: Matrix,
    pub view: PositionView,
    pub label: f64,
}

impl GradCase {
    pub fn random(seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let grid = PatchGrid::new(6, 2).unwrap();
        let dims = EncoderDims { embed_dim: 8, feature_dim: 8, patch_pixels: grid.patch_pixels() };
        let scale = r.random_range(1.0..20.0);
        let enc = FrozenEncoders::seeded(dims, scale, r.random()).unwrap();
        let params = PromptParams::gaussian(2, grid.n_patches(), 8, r.random_range(0.1..1.0), &mut r);
        let projected = Matrix::gaussian(grid.n_patches(), 8, 1.0, &mut r);
        let view = PositionView::new(ViewKind::ALL[r.random_range(0..5)], grid);
        let label = if r.random::<bool>() { 1.0 } else { 0.0 };
        Self { enc, params, projected, view, label }
    }

    pub fn item(&self) -> BatchItem<'_> {
        BatchItem { projected: &self.projected, view: &self.view, label: self.label }
    }

    pub fn loss(&self, params: &PromptParams) -> f64 {
        forward(&self.item(), params, &self.enc).unwrap().1
    }

    /// Max relative error between analytic and central-difference gradients
    /// over every prompt coordinate. Coordinates whose gradients are both
    /// below `floor` are compared on absolute error against `floor`.
    pub fn max_relative_error(&self, step: f64, floor: f64) -> f64 {
        let g = grad_prompts(&self.item(), &self.params, &self.enc).unwrap();
        let mut worst: f64 = 0.0;
        for text in [true, false] {
            let n = if text { self.params.text_prompt.as_slice().len() } else { self.params.image_prompt.as_slice().len() };
            for k in 0..n {
                let bump = |delta: f64| {
                    let mut p = self.params.clone();
                    let m = if text { &mut p.text_prompt } else { &mut p.image_prompt };
                    m.as_mut_slice()[k] += delta;
                    self.loss(&p)
                };
                let numeric = (bump(step) - bump(-step)) / (2.0 * step);
                let analytic = if text { g.text_prompt.as_slice()[k] } else { g.image_prompt.as_slice()[k] };
                let denom = analytic.abs().max(numeric.abs()).max(floor);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        worst
    }
}
