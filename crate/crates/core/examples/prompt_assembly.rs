//! Shows how each position view assembles its text and image inputs.
//!
//! ```bash
//! cargo run --example prompt_assembly
//! ```

use ppad::prompts::{assemble_image, assemble_text, ClassName, PatchGrid, PositionView, PromptParams};
use ppad::toy::{normal_image, ToyImageParams};
use ppad::trainer::TrainConfig;

fn main() -> ppad::Result<()> {
    let config = TrainConfig::default();
    let grid = PatchGrid::new(config.image_size, config.patch_size)?;
    let enc = config.build_encoders()?;
    let params = PromptParams::zeros(config.text_prompt_len, grid.n_patches(), config.embed_dim);
    let img = normal_image(config.image_size, 0, &ToyImageParams::default())?;

    for view in PositionView::all(grid) {
        let text = assemble_text(&view, ClassName::Pneumonia, &params, &enc.embed_table)?;
        let image = assemble_image(&img, &view, &params, &enc.patch_proj)?;
        let words: Vec<&str> = view.prefix_tokens.iter().map(|t| t.word()).collect();
        println!(
            "{:<11} prefix {:<12} text rows {:>2}  visible patches {:>2}/{}  image rows {}",
            view.kind.to_string(),
            format!("{words:?}"),
            text.assembled.rows(),
            view.visible_patches(),
            grid.n_patches(),
            image.patches.rows(),
        );
        let side = grid.side();
        for r in 0..side {
            let row: String = (0..side).map(|c| if view.patch_mask[r * side + c] { 'E' } else { 'p' }).collect();
            println!("    {row}");
        }
    }
    Ok(())
}
