//! End-to-end toy experiment: 64 procedural normals for training, 100 held-out
//! normals plus 100 anomalous copies for testing. Reports AUC before and after
//! prompt training. With an output directory it also writes the dataset as
//! `train/normal`, `test/normal` and `test/abnormal` graymaps.
//!
//! ```bash
//! cargo run --release --example toy_benchmark -- [seed] [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use ppad::inference::Evaluator;
use ppad::synth::Label;
use ppad::toy::ToyBenchmark;
use ppad::trainer::{TrainConfig, Trainer};

fn main() -> ppad::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = TrainConfig { seed, ..TrainConfig::default() };
    let bench = ToyBenchmark::generate(config.shots, 100, config.image_size, seed)?;
    if let Some(dir) = std::env::args().nth(2) {
        bench.write(dir.as_ref())?;
        println!("wrote the dataset to {dir}");
    }

    let items = || {
        bench
            .test_normal
            .iter()
            .map(|i| (i, Label::Normal))
            .chain(bench.test_abnormal.iter().map(|i| (i, Label::Abnormal)))
            .enumerate()
            .map(|(k, (img, l))| (PathBuf::from(format!("test/{k:03}")), img, l))
    };

    let mut trainer = Trainer::new(config.clone())?;
    let before = trainer.checkpoint(0);
    let untrained = Evaluator::from_checkpoint(&before)?.evaluate(items())?;
    println!("untrained: AUC {:.2}  AP {:.2}  ACC {:.2}  F1 {:.2}", untrained.auc, untrained.ap, untrained.acc, untrained.f1);

    let start = Instant::now();
    let losses = trainer.fit(&bench.train, |epoch, loss| {
        if epoch == 1 || epoch % 10 == 0 {
            println!("epoch {epoch:>3}  mean loss {loss:.4}");
        }
    })?;
    println!("trained in {:.1?}", start.elapsed());

    let trained = Evaluator::from_checkpoint(&trainer.checkpoint(losses.len()))?.evaluate(items())?;
    println!("trained:   AUC {:.2}  AP {:.2}  ACC {:.2}  F1 {:.2}", trained.auc, trained.ap, trained.acc, trained.f1);
    Ok(())
}
