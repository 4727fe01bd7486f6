//! Procedural stand-ins for normal radiographs: smooth, low-frequency Perlin
//! backgrounds. Used by the examples, the tests and the toy benchmark.

use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::imaging::{save_image, BinaryMask, GrayImage};
use crate::maskgen::{perlin_field, MaskParams};
use crate::rng::{self, derive_seed};
use crate::synth::{insert_anomaly, DEFAULT_WEIGHTS};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ToyImageParams {
    /// Mean intensity.
    pub base: f64,
    /// Peak-to-peak intensity variation of the background.
    pub amplitude: f64,
    /// Perlin lattice cells per side.
    pub grid_cells: usize,
}

impl Default for ToyImageParams {
    fn default() -> Self {
        Self { base: 0.5, amplitude: 0.3, grid_cells: 2 }
    }
}

/// One normal image: `base + amplitude · (perlin − 0.5)`.
pub fn normal_image(size: usize, seed: u64, params: &ToyImageParams) -> Result<GrayImage> {
    let field = perlin_field(size, size, seed, params.grid_cells)?;
    let data = field
        .as_slice()
        .iter()
        .map(|&v| (params.base + params.amplitude * (v - 0.5)).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(size, size, data)
}

pub fn normal_images(count: usize, size: usize, seed: u64, params: &ToyImageParams) -> Result<Vec<GrayImage>> {
    (0..count).map(|i| normal_image(size, derive_seed(seed, i as u64), params)).collect()
}

/// Train normals plus a balanced test set: held-out normals and one
/// anomalous copy of each, with weights drawn from the default set.
#[derive(Clone, Debug)]
pub struct ToyBenchmark {
    pub train: Vec<GrayImage>,
    pub test_normal: Vec<GrayImage>,
    pub test_abnormal: Vec<GrayImage>,
}

impl ToyBenchmark {
    pub fn generate(train: usize, test: usize, size: usize, seed: u64) -> Result<Self> {
        Self::generate_with(train, test, size, seed, &ToyImageParams::default())
    }

    pub fn generate_with(train: usize, test: usize, size: usize, seed: u64, params: &ToyImageParams) -> Result<Self> {
        let train_imgs = normal_images(train, size, derive_seed(seed, 1), params)?;
        let test_normal = normal_images(test, size, derive_seed(seed, 2), params)?;
        let region = BinaryMask::full(size, size);
        let mask_params = MaskParams::default();
        let mut r = rng::derived(seed, 3);
        let test_abnormal = test_normal
            .iter()
            .map(|img| {
                let w = DEFAULT_WEIGHTS[r.random_range(0..DEFAULT_WEIGHTS.len())];
                insert_anomaly(img, &region, w, &mask_params, r.random()).map(|s| s.image)
            })
            .collect::<Result<_>>()?;
        Ok(Self { train: train_imgs, test_normal, test_abnormal })
    }

    /// Writes `<root>/train/normal/`, `<root>/test/normal/` and
    /// `<root>/test/abnormal/` graymaps.
    pub fn write(&self, root: &Path) -> Result<()> {
        let dirs = [
            ("train/normal", &self.train),
            ("test/normal", &self.test_normal),
            ("test/abnormal", &self.test_abnormal),
        ];
        for (dir, imgs) in dirs {
            let dir = root.join(dir);
            fs::create_dir_all(&dir)?;
            for (i, img) in imgs.iter().enumerate() {
                save_image(img, &dir.join(format!("{i:04}.pgm")))?;
            }
        }
        Ok(())
    }
}
