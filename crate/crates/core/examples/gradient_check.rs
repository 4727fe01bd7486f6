//! Compares the analytic prompt gradients with central finite differences on
//! a few small random problems.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use ppad::encoder::{forward, grad_prompts, BatchItem, EncoderDims, FrozenEncoders};
use ppad::linalg::Matrix;
use ppad::prompts::{PatchGrid, PositionView, PromptParams, ViewKind};
use ppad::rng;

fn main() -> ppad::Result<()> {
    let grid = PatchGrid::new(6, 2)?;
    let dims = EncoderDims { embed_dim: 8, feature_dim: 8, patch_pixels: grid.patch_pixels() };
    let h = 1e-5;
    for (i, kind) in ViewKind::ALL.into_iter().enumerate() {
        let mut r = rng::seeded(i as u64);
        let enc = FrozenEncoders::seeded(dims, 10.0, 100 + i as u64)?;
        let params = PromptParams::gaussian(2, grid.n_patches(), 8, 0.5, &mut r);
        let projected = Matrix::gaussian(grid.n_patches(), 8, 1.0, &mut r);
        let view = PositionView::new(kind, grid);
        let item = BatchItem { projected: &projected, view: &view, label: (i % 2) as f64 };
        let g = grad_prompts(&item, &params, &enc)?;

        let mut worst: f64 = 0.0;
        for k in 0..params.image_prompt.as_slice().len() {
            let eval = |d: f64| {
                let mut p = params.clone();
                p.image_prompt.as_mut_slice()[k] += d;
                forward(&item, &p, &enc).map(|(_, l)| l)
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let analytic = g.image_prompt.as_slice()[k];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
        let nonzero = g.image_prompt.as_slice().iter().filter(|v| **v != 0.0).count();
        println!("{kind:<11} loss {:.4}  nonzero image-prompt entries {nonzero:>2}  max rel. error {worst:.1e}", g.loss);
    }
    Ok(())
}
