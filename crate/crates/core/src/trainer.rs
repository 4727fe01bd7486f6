//! Few-shot prompt training.
//!
//! Each step draws one of the five views uniformly, inserts a synthetic
//! anomaly inside that view's region with probability `apply_probability`,
//! and takes one plain SGD step on `P_t` and `P_i` against the BCE loss. The
//! frozen encoders never change.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::encoder::{grad_prompts, BatchItem, EncoderDims, FrozenEncoders, DEFAULT_LOGIT_SCALE};
use crate::imaging::{load_image, DatasetListing, GrayImage};
use crate::linalg::Matrix;
use crate::maskgen::MaskParams;
use crate::prompts::{project_patches, PatchGrid, PositionView, PromptParams, ViewKind, PROMPT_INIT_SIGMA};
use crate::rng::{self, derive_seed, Rng};
use crate::synth::{synthesize, Label, SynthConfig};
use crate::{Error, Result};

const STREAM_INIT: u64 = 1;
const STREAM_SHOTS: u64 = 2;
const STREAM_STEPS: u64 = 3;
const STREAM_SHUFFLE: u64 = 0x5348_5546;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub shots: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub eta: f64,
    pub seed: u64,
    /// Seed of the frozen "pretrained" weights.
    pub encoder_seed: u64,
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub text_prompt_len: usize,
    pub logit_scale: f64,
    pub prompt_init_sigma: f64,
    /// `synth.seed` is ignored; per-step seeds come from `seed`.
    pub synth: SynthConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            shots: 64,
            epochs: 100,
            learning_rate: 0.05,
            eta: 0.8,
            seed: 0,
            encoder_seed: 2024,
            image_size: 224,
            patch_size: 32,
            embed_dim: 64,
            feature_dim: 64,
            text_prompt_len: 4,
            logit_scale: DEFAULT_LOGIT_SCALE,
            prompt_init_sigma: PROMPT_INIT_SIGMA,
            synth: SynthConfig::default(),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in serialization order.
pub const CONFIG_KEYS: [&str; 22] = [
    "shots",
    "epochs",
    "learning_rate",
    "eta",
    "seed",
    "encoder_seed",
    "image_size",
    "patch_size",
    "embed_dim",
    "feature_dim",
    "text_prompt_len",
    "logit_scale",
    "prompt_init_sigma",
    "weight_choices",
    "apply_probability",
    "num_points",
    "bezier_probability",
    "control_offset_fraction",
    "area_min",
    "area_max",
    "perlin_cells",
    "density_exponent",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.shots == 0 {
            return bad("shots must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} (need 0 < eta < 1)", self.eta));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if !(self.prompt_init_sigma.is_finite() && self.prompt_init_sigma >= 0.0) {
            return bad(format!("prompt_init_sigma = {}", self.prompt_init_sigma));
        }
        if self.embed_dim == 0 || self.feature_dim == 0 {
            return bad("embed_dim and feature_dim must be >= 1".into());
        }
        PatchGrid::new(self.image_size, self.patch_size)?;
        self.synth.validate()
    }

    pub fn grid(&self) -> Result<PatchGrid> {
        PatchGrid::new(self.image_size, self.patch_size)
    }

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            embed_dim: self.embed_dim,
            feature_dim: self.feature_dim,
            patch_pixels: self.patch_size * self.patch_size,
        }
    }

    pub fn build_encoders(&self) -> Result<FrozenEncoders> {
        FrozenEncoders::seeded(self.encoder_dims(), self.logit_scale, self.encoder_seed)
    }

    /// Updates one setting from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.synth.mask;
        match key {
            "shots" => self.shots = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "encoder_seed" => self.encoder_seed = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "text_prompt_len" => self.text_prompt_len = parse(key, value)?,
            "logit_scale" => self.logit_scale = parse(key, value)?,
            "prompt_init_sigma" => self.prompt_init_sigma = parse(key, value)?,
            "weight_choices" => {
                self.synth.weight_choices =
                    value.split(',').map(|v| parse(key, v)).collect::<Result<Vec<f64>>>()?
            }
            "apply_probability" => self.synth.apply_probability = parse(key, value)?,
            "num_points" => m.num_points = parse(key, value)?,
            "bezier_probability" => m.bezier_probability = parse(key, value)?,
            "control_offset_fraction" => m.control_offset_fraction = parse(key, value)?,
            "area_min" => m.area_bounds.0 = parse(key, value)?,
            "area_max" => m.area_bounds.1 = parse(key, value)?,
            "perlin_cells" => m.grid_cells = parse(key, value)?,
            "density_exponent" => m.density_exponent = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in [`CONFIG_KEYS`] order. Floats use Rust's
    /// shortest round-trip formatting, so `set` restores them exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let m: &MaskParams = &self.synth.mask;
        let weights = self.synth.weight_choices.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(",");
        let values = [
            self.shots.to_string(),
            self.epochs.to_string(),
            format!("{:?}", self.learning_rate),
            format!("{:?}", self.eta),
            self.seed.to_string(),
            self.encoder_seed.to_string(),
            self.image_size.to_string(),
            self.patch_size.to_string(),
            self.embed_dim.to_string(),
            self.feature_dim.to_string(),
            self.text_prompt_len.to_string(),
            format!("{:?}", self.logit_scale),
            format!("{:?}", self.prompt_init_sigma),
            weights,
            format!("{:?}", self.synth.apply_probability),
            m.num_points.to_string(),
            format!("{:?}", m.bezier_probability),
            format!("{:?}", m.control_offset_fraction),
            format!("{:?}", m.area_bounds.0),
            format!("{:?}", m.area_bounds.1),
            m.grid_cells.to_string(),
            format!("{:?}", m.density_exponent),
        ];
        CONFIG_KEYS.iter().copied().zip(values).collect()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies a `key = value` document (with `#` comments) on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }
}

/// `k` distinct entries drawn uniformly without replacement.
pub fn sample_shots<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<T>> {
    if items.len() < k {
        return Err(Error::NotEnoughImages { requested: k, available: items.len() });
    }
    let mut r = rng::seeded(seed);
    Ok(items.choose_multiple(&mut r, k).cloned().collect())
}

/// One fully drawn training example; replaying it is deterministic.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub view: ViewKind,
    pub label: Label,
    pub projected: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub view: ViewKind,
    pub label: Label,
}

/// Training state: the frozen encoders, the five views and the prompts.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    encoders: FrozenEncoders,
    views: Vec<PositionView>,
    params: PromptParams,
}

impl Trainer {
    /// Frozen weights from `encoder_seed`, prompts `N(0, σ²)` from `seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let encoders = config.build_encoders()?;
        let grid = config.grid()?;
        let mut r = rng::derived(config.seed, STREAM_INIT);
        let params = PromptParams::gaussian(
            config.text_prompt_len,
            grid.n_patches(),
            config.embed_dim,
            config.prompt_init_sigma,
            &mut r,
        );
        Ok(Self { views: PositionView::all(grid), config, encoders, params })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn encoders(&self) -> &FrozenEncoders {
        &self.encoders
    }

    pub fn views(&self) -> &[PositionView] {
        &self.views
    }

    pub fn params(&self) -> &PromptParams {
        &self.params
    }

    pub fn set_params(&mut self, params: PromptParams) {
        self.params = params;
    }

    pub fn view(&self, kind: ViewKind) -> &PositionView {
        &self.views[ViewKind::ALL.iter().position(|&k| k == kind).expect("known view")]
    }

    /// Draws the view and the synthesis for one step.
    pub fn draw_sample(&self, img: &GrayImage, r: &mut Rng) -> Result<TrainSample> {
        let view = ViewKind::ALL[r.random_range(0..ViewKind::ALL.len())];
        let synth = SynthConfig { seed: r.random(), ..self.config.synth.clone() };
        let out = synthesize(img, &self.view(view).region_mask, &synth)?;
        let projected = project_patches(&out.image, self.views[0].grid, &self.encoders.patch_proj)?;
        Ok(TrainSample { view, label: out.label, projected })
    }

    /// Loss of `sample` under the current prompts.
    pub fn loss(&self, sample: &TrainSample) -> Result<f64> {
        Ok(grad_prompts(&self.batch_item(sample), &self.params, &self.encoders)?.loss)
    }

    fn batch_item<'a>(&'a self, sample: &'a TrainSample) -> BatchItem<'a> {
        BatchItem { projected: &sample.projected, view: self.view(sample.view), label: sample.label.as_f64() }
    }

    /// One SGD update on `sample`; returns the pre-update loss.
    pub fn sgd_step(&mut self, sample: &TrainSample) -> Result<f64> {
        let grads = grad_prompts(&self.batch_item(sample), &self.params, &self.encoders)?;
        let lr = self.config.learning_rate;
        self.params.text_prompt.add_scaled(-lr, &grads.text_prompt);
        self.params.image_prompt.add_scaled(-lr, &grads.image_prompt);
        Ok(grads.loss)
    }

    pub fn train_step(&mut self, img: &GrayImage, r: &mut Rng) -> Result<StepOutcome> {
        let sample = self.draw_sample(img, r)?;
        let loss = self.sgd_step(&sample)?;
        Ok(StepOutcome { loss, view: sample.view, label: sample.label })
    }

    /// Runs `epochs` passes over `shots`, reshuffled every epoch. Calls
    /// `on_epoch(epoch, mean_loss)` after each pass (epochs count from 1).
    pub fn fit(&mut self, shots: &[GrayImage], mut on_epoch: impl FnMut(usize, f64)) -> Result<Vec<f64>> {
        if shots.is_empty() {
            return Err(Error::NotEnoughImages { requested: 1, available: 0 });
        }
        let mut step_rng = rng::derived(self.config.seed, STREAM_STEPS);
        let mut means = Vec::with_capacity(self.config.epochs);
        let mut order: Vec<usize> = (0..shots.len()).collect();
        for epoch in 1..=self.config.epochs {
            order.sort_unstable();
            order.shuffle(&mut rng::derived(derive_seed(self.config.seed, STREAM_SHUFFLE), epoch as u64));
            let mut total = 0.0;
            for &i in &order {
                total += self.train_step(&shots[i], &mut step_rng)?.loss;
            }
            let mean = total / shots.len() as f64;
            on_epoch(epoch, mean);
            means.push(mean);
        }
        Ok(means)
    }

    pub fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            frozen_hash: self.encoders.content_hash(),
            config: self.config.clone(),
            epoch,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean loss of every epoch, in order.
    pub epoch_losses: Vec<f64>,
    /// Hash of the frozen weights before the first step.
    pub initial_hash: u64,
}

/// Trains on already-loaded shots.
pub fn train_images(shots: &[GrayImage], config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    let initial_hash = trainer.encoders().content_hash();
    let epoch_losses = trainer.fit(shots, |_, _| {})?;
    let checkpoint = trainer.checkpoint(config.epochs);
    if checkpoint.frozen_hash != initial_hash {
        return Err(Error::FrozenHashMismatch { expected: initial_hash, found: checkpoint.frozen_hash });
    }
    Ok(TrainOutcome { checkpoint, epoch_losses, initial_hash })
}

/// Samples `shots` normals from `<root>/normal`, loads them at
/// `image_size` and trains.
pub fn train(dataset_root: &Path, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let listing = DatasetListing::scan(dataset_root)?;
    let paths = sample_shots(&listing.normal, config.shots, derive_seed(config.seed, STREAM_SHOTS))?;
    let images = paths.iter().map(|p| load_image(p, config.image_size)).collect::<Result<Vec<_>>>()?;
    train_images(&images, config)
}

/// CSV `epoch,mean_loss` with a header row.
pub fn write_loss_log(path: &Path, losses: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,mean_loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(f, "{},{:?}", i + 1, l)?;
    }
    Ok(())
}

const MAGIC: &[u8; 4] = b"PPAD";
const VERSION: u32 = 1;

/// Trained prompts plus the configuration and encoder hash that produced
/// them.
///
/// Binary layout, all integers little-endian:
///
/// ```text
/// "PPAD"            4 bytes
/// version           u32 (= 1)
/// frozen_hash       u64
/// epoch             u64
/// config_len        u32, then config_len bytes of UTF-8 `key = value` lines
/// tensor_count      u32 (= 2: text prompt, image prompt)
/// per tensor:       rank u32, rank × u64 dims, product(dims) × f64
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PromptParams,
    pub frozen_hash: u64,
    pub config: TrainConfig,
    pub epoch: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::InvalidCheckpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rank = self.u32()?;
        if rank != 2 {
            return Err(Error::InvalidCheckpoint(format!("tensor rank {rank}, expected 2")));
        }
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::InvalidCheckpoint("tensor larger than file".into()))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

fn write_matrix(out: &mut Vec<u8>, m: &Matrix) {
    out.extend(2u32.to_le_bytes());
    out.extend((m.rows() as u64).to_le_bytes());
    out.extend((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend(v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend(self.frozen_hash.to_le_bytes());
        out.extend((self.epoch as u64).to_le_bytes());
        let config = self.config.to_text();
        out.extend((config.len() as u32).to_le_bytes());
        out.extend(config.as_bytes());
        out.extend(2u32.to_le_bytes());
        write_matrix(&mut out, &self.params.text_prompt);
        write_matrix(&mut out, &self.params.image_prompt);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::InvalidCheckpoint(format!("unsupported version {version}")));
        }
        let frozen_hash = r.u64()?;
        let epoch = r.u64()? as usize;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::InvalidCheckpoint("config block is not UTF-8".into()))?;
        let config = TrainConfig::from_text(text)?;
        let count = r.u32()?;
        if count != 2 {
            return Err(Error::InvalidCheckpoint(format!("{count} tensors, expected 2")));
        }
        let text_prompt = r.matrix()?;
        let image_prompt = r.matrix()?;
        if r.pos != bytes.len() {
            return Err(Error::InvalidCheckpoint("trailing bytes".into()));
        }
        let n_patches = config.grid()?.n_patches();
        if text_prompt.shape() != (config.text_prompt_len, config.embed_dim)
            || image_prompt.shape() != (n_patches, config.embed_dim)
        {
            return Err(Error::InvalidCheckpoint("prompt shapes disagree with the config".into()));
        }
        Ok(Self { params: PromptParams { text_prompt, image_prompt }, frozen_hash, config, epoch })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the frozen encoders and checks them against the stored hash.
    pub fn encoders(&self) -> Result<FrozenEncoders> {
        let enc = self.config.build_encoders()?;
        let found = enc.content_hash();
        if found != self.frozen_hash {
            return Err(Error::FrozenHashMismatch { expected: self.frozen_hash, found });
        }
        Ok(enc)
    }
}
