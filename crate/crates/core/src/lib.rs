//! Position-guided prompt learning for anomaly detection (PPAD) together with
//! the structure-preserving anomaly synthesizer (SAS), built at desk scale.
//!
//! A small frozen dual encoder stands in for a pretrained vision-language
//! model. Only the text prompt `P_t` and the image prompt `P_i` are trained.
//!
//! Module map:
//!
//! - [`imaging`]: grayscale images, binary masks, graymap/PNG I/O, resizing.
//! - [`maskgen`]: Perlin-weighted point sampling, convex hull, Bézier edges,
//!   scanline fill. Produces the irregular anomaly mask.
//! - [`synth`]: exact Euclidean distance transform, distance-weighted gamma
//!   field and the gamma-corrected synthetic anomaly.
//! - [`prompts`]: the five positional views, tokenizer, text and image prompt
//!   assembly.
//! - [`encoder`]: frozen toy encoders, softmax prediction, BCE and analytic
//!   prompt gradients.
//! - [`trainer`]: few-shot SGD training loop and the binary checkpoint format.
//! - [`inference`]: five-view scoring, threshold aggregation and ACC/AUC/F1/AP.
//! - [`cli`]: the `ppad` executable (`synth`, `train`, `eval`, `viz`).
//! - [`toy`]: procedural "normal" images used by the examples and tests.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod encoder;
mod error;
pub mod imaging;
pub mod inference;
pub mod linalg;
pub mod maskgen;
pub mod prompts;
pub mod rng;
pub mod synth;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
