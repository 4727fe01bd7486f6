//! Metrics and five-view aggregation on hand-written scores.
//!
//! ```bash
//! cargo run --example evaluation_metrics
//! ```

use ppad::inference::{aggregate, compute_metrics, ViewProbabilities};
use ppad::synth::Label;

fn main() -> ppad::Result<()> {
    let scores = [(0.1, Label::Normal), (0.4, Label::Normal), (0.35, Label::Abnormal), (0.8, Label::Abnormal)];
    let m = compute_metrics(&scores)?;
    println!("AUC {:.1}  AP {:.1}  ACC {:.1}  F1 {:.1}", m.auc, m.ap, m.acc, m.f1);

    for probs in [[0.9, 0.1, 0.1, 0.1, 0.1], [0.8, 0.2, 0.2, 0.2, 0.2], [0.3, 0.4, 0.5, 0.6, 0.7]] {
        println!("{probs:?} -> {:.3}", aggregate(&ViewProbabilities(probs), 0.8));
    }
    Ok(())
}
