//! Inserts one anomaly per gamma weight into a toy image and reports how the
//! masked pixels moved.
//!
//! ```bash
//! cargo run --example anomaly_synthesis -- [out_dir]
//! ```

use std::path::PathBuf;

use ppad::imaging::{save_image, BinaryMask};
use ppad::synth::{insert_anomaly, synthesize, SynthConfig, DEFAULT_WEIGHTS};
use ppad::toy::{normal_image, ToyImageParams};

fn main() -> ppad::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    std::fs::create_dir_all(&out)?;
    let img = normal_image(128, 3, &ToyImageParams::default())?;
    let region = BinaryMask::full(128, 128);
    save_image(&img, &out.join("source.pgm"))?;

    for (i, w) in DEFAULT_WEIGHTS.into_iter().enumerate() {
        let s = insert_anomaly(&img, &region, w, &Default::default(), 40 + i as u64)?;
        let (mut before, mut after) = (0.0, 0.0);
        for (x, y) in s.mask.pixels() {
            before += img.get(x, y);
            after += s.image.get(x, y);
        }
        let n = s.mask.count() as f64;
        println!("w = {w:>6}: {:>5} px, mean intensity {:.3} -> {:.3}", s.mask.count(), before / n, after / n);
        save_image(&s.image, &out.join(format!("synth_w{i}.pgm")))?;
        save_image(&s.mask.to_image(), &out.join(format!("mask_w{i}.pgm")))?;
    }

    // the training-time sampler fires about half the time
    let fired = (0..200)
        .filter(|&seed| {
            let config = SynthConfig { seed, ..SynthConfig::default() };
            synthesize(&img, &region, &config).map(|s| s.weight.is_some()).unwrap_or(false)
        })
        .count();
    println!("synthesize fired on {fired}/200 seeds");
    Ok(())
}
