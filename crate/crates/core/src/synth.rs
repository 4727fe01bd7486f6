//! Structure-preserving anomaly synthesis.
//!
//! A mask pixel `x` at distance `D(x)` from the mask complement receives the
//! exponent `γ(x) = 1 + D(x) / max D · w`; every other pixel keeps `γ = 1`.
//! The anomaly is the per-pixel power map `I(x)^γ(x)`, which is monotone in
//! intensity and fades to the identity at the mask boundary.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::imaging::{check_dims, BinaryMask, GrayImage};
use crate::maskgen::{generate_mask, MaskParams, MaskSpec};
use crate::rng;
use crate::{Error, Result};

/// Gamma weights drawn during training.
pub const DEFAULT_WEIGHTS: [f64; 4] = [-0.999, -0.99, 2.0, 3.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Normal => 0.0,
            Label::Abnormal => 1.0,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

/// Euclidean distance of every pixel to the nearest pixel outside the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DistanceMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Exact squared distance transform of a 1-D sampled function (lower
/// envelope of parabolas rooted at the finite samples).
fn edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        while let Some(&v) = sites.last() {
            let vf = v as f64;
            let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * qf - 2.0 * vf);
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
        if sites.is_empty() {
            sites.push(q);
            bounds.push(f64::NEG_INFINITY);
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let v = sites[k];
        let d = qf - v as f64;
        *o = d * d + f[v];
    }
}

/// Exact Euclidean distance from each mask pixel to the nearest non-mask
/// pixel, zero outside the mask. The image is treated as surrounded by
/// non-mask pixels, so a mask touching the border gets distance 1 there.
pub fn distance_transform(mask: &BinaryMask) -> Result<DistanceMap> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = mask.dims();
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                grid[(y + 1) * pw + x + 1] = f64::INFINITY;
            }
        }
    }

    let (mut sites, mut bounds) = (Vec::new(), Vec::new());
    let mut line = vec![0.0; pw.max(ph)];
    let mut out = vec![0.0; pw.max(ph)];
    for x in 0..pw {
        for y in 0..ph {
            line[y] = grid[y * pw + x];
        }
        edt_1d(&line[..ph], &mut out[..ph], &mut sites, &mut bounds);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        line[..pw].copy_from_slice(row);
        edt_1d(&line[..pw], &mut out[..pw], &mut sites, &mut bounds);
        row.copy_from_slice(&out[..pw]);
    }

    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                data[y * w + x] = grid[(y + 1) * pw + x + 1].sqrt();
            }
        }
    }
    Ok(DistanceMap { width: w, height: h, data })
}

/// Per-pixel gamma exponents.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaField {
    width: usize,
    height: usize,
    gamma: Vec<f64>,
}

impl GammaField {
    pub fn identity(width: usize, height: usize) -> Self {
        Self { width, height, gamma: vec![1.0; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.gamma[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    /// Display rendering: `γ = 1` maps to 0.5, the largest deviation from 1
    /// maps to 0 or 1.
    pub fn to_display(&self) -> GrayImage {
        let spread = self.gamma.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
        let data = self
            .gamma
            .iter()
            .map(|&g| if spread > 0.0 { 0.5 + (g - 1.0) / (2.0 * spread) } else { 0.5 })
            .collect();
        GrayImage::new(self.width, self.height, data).expect("display values lie in [0, 1]")
    }
}

pub fn validate_weight(w: f64) -> Result<()> {
    if w.is_finite() && w > -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidWeight(w))
    }
}

/// `γ = 1 + D / max D · w` inside the mask, `1` elsewhere.
pub fn gamma_field(mask: &BinaryMask, w: f64) -> Result<GammaField> {
    validate_weight(w)?;
    let dist = distance_transform(mask)?;
    let dmax = dist.max();
    let gamma = dist
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(&d, &inside)| if inside { 1.0 + d / dmax * w } else { 1.0 })
        .collect();
    let (width, height) = mask.dims();
    Ok(GammaField { width, height, gamma })
}

/// `out(x) = img(x)^γ(x)` with `0^γ = 0`. Pixels with `γ = 1` are copied.
pub fn apply_gamma(img: &GrayImage, field: &GammaField) -> Result<GrayImage> {
    check_dims(img.dims(), field.dims())?;
    let data = img
        .as_slice()
        .iter()
        .zip(&field.gamma)
        .map(|(&v, &g)| {
            if g == 1.0 {
                v
            } else if v == 0.0 {
                0.0
            } else {
                v.powf(g).min(1.0)
            }
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub weight_choices: Vec<f64>,
    pub apply_probability: f64,
    pub mask: MaskParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            weight_choices: DEFAULT_WEIGHTS.to_vec(),
            apply_probability: 0.5,
            mask: MaskParams::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weight_choices.is_empty() {
            return Err(Error::InvalidConfig("weight_choices is empty".into()));
        }
        for &w in &self.weight_choices {
            validate_weight(w)?;
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::InvalidConfig(format!(
                "apply_probability = {}",
                self.apply_probability
            )));
        }
        self.mask.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub image: GrayImage,
    /// Empty when no anomaly was inserted.
    pub mask: BinaryMask,
    pub label: Label,
    /// Gamma weight used, if an anomaly was inserted.
    pub weight: Option<f64>,
}

/// With probability `apply_probability`, inserts one anomaly inside `region`
/// using a weight drawn uniformly from `weight_choices`.
pub fn synthesize(img: &GrayImage, region: &BinaryMask, config: &SynthConfig) -> Result<Synthesis> {
    config.validate()?;
    check_dims(img.dims(), region.dims())?;
    if region.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = rng::derived(config.seed, 0);
    let fire = rng.random::<f64>() < config.apply_probability;
    let w = config.weight_choices[rng.random_range(0..config.weight_choices.len())];
    let mask_seed: u64 = rng.random();
    if !fire {
        return Ok(Synthesis {
            image: img.clone(),
            mask: BinaryMask::empty(img.width(), img.height()),
            label: Label::Normal,
            weight: None,
        });
    }
    insert_anomaly(img, region, w, &config.mask, mask_seed)
}

/// Unconditionally inserts one anomaly with weight `w`.
pub fn insert_anomaly(
    img: &GrayImage,
    region: &BinaryMask,
    w: f64,
    params: &MaskParams,
    mask_seed: u64,
) -> Result<Synthesis> {
    validate_weight(w)?;
    let spec = MaskSpec::new(region.clone(), mask_seed).with_params(params.clone());
    let mask = generate_mask(&spec)?;
    let field = gamma_field(&mask, w)?;
    let image = apply_gamma(img, &field)?;
    Ok(Synthesis { image, mask, label: Label::Abnormal, weight: Some(w) })
}
