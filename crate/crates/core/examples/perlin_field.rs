//! Renders Perlin fields at a few lattice resolutions and prints their
//! summary statistics.
//!
//! ```bash
//! cargo run --example perlin_field -- [out_dir]
//! ```

use std::path::PathBuf;

use ppad::imaging::save_image;
use ppad::maskgen::{density_field, perlin_field, MaskParams};

fn main() -> ppad::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "perlin_out".into()));
    std::fs::create_dir_all(&out)?;
    for cells in [1, 2, 4, 8] {
        let field = perlin_field(128, 128, 7, cells)?;
        let mean = field.as_slice().iter().sum::<f64>() / field.as_slice().len() as f64;
        println!("{cells} cells: min {:.3} max {:.3} mean {mean:.3}", field.min_max().0, field.min_max().1);
        save_image(&field, &out.join(format!("perlin_{cells}.pgm")))?;
    }
    // the point-sampling density sharpens the field around its peaks
    let density = density_field(128, 128, 7, &MaskParams::default())?;
    save_image(&density, &out.join("density.pgm"))?;
    println!("wrote fields to {}", out.display());
    Ok(())
}
