//! Trains a tiny model, saves the checkpoint, reloads it and checks that the
//! frozen encoders rebuild to the recorded hash.
//!
//! ```bash
//! cargo run --release --example checkpoint_roundtrip
//! ```

use ppad::toy::{normal_images, ToyImageParams};
use ppad::trainer::{train_images, write_loss_log, Checkpoint, TrainConfig};

fn main() -> ppad::Result<()> {
    let config =
        TrainConfig { image_size: 64, patch_size: 16, shots: 8, epochs: 10, ..TrainConfig::default() };
    let shots = normal_images(config.shots, config.image_size, 1, &ToyImageParams::default())?;
    let outcome = train_images(&shots, &config)?;

    let dir = std::env::temp_dir().join("ppad_checkpoint_demo");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tiny.ppad");
    outcome.checkpoint.save(&path)?;
    write_loss_log(&dir.join("tiny.loss.csv"), &outcome.epoch_losses)?;

    let back = Checkpoint::load(&path)?;
    let rebuilt = back.encoders()?;
    println!("{} bytes at {}", std::fs::metadata(&path)?.len(), path.display());
    println!("frozen hash {:016x} (rebuilt {:016x})", back.frozen_hash, rebuilt.content_hash());
    println!("loss {:.4} -> {:.4}", outcome.epoch_losses[0], outcome.epoch_losses.last().unwrap());
    assert_eq!(back, outcome.checkpoint);
    Ok(())
}
