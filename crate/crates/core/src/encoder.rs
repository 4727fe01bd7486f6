//! Frozen toy dual encoder, prediction, loss and exact prompt gradients.
//!
//! Both towers share one shape: mean-pool the input rows, apply a linear
//! head, L2-normalize. The abnormality probability is the second entry of a
//! softmax over `scale · cos(image, text_c)` for the two class texts.

use sha2::{Digest, Sha256};

use crate::linalg::{axpy, dot, norm, Matrix};
use crate::prompts::{
    assemble_from_projected, assemble_text, ClassName, PatchEmbeddings, PositionView, PromptParams,
    TokenEmbeddings, VOCAB_SIZE,
};
use crate::rng;
use crate::{Error, Result};

/// Probability clamp before taking logs.
pub const PROB_EPS: f64 = 1e-7;
pub const DEFAULT_LOGIT_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    /// Token/patch embedding width `d`.
    pub embed_dim: usize,
    /// Output feature width `f`.
    pub feature_dim: usize,
    pub patch_pixels: usize,
}

/// Fixed-weight stand-in for a pretrained vision-language model.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenEncoders {
    pub embed_table: Matrix,
    /// `d × patch_pixels`
    pub patch_proj: Matrix,
    /// `f × d`
    pub text_head: Matrix,
    /// `f × d`
    pub image_head: Matrix,
    pub logit_scale: f64,
}

impl FrozenEncoders {
    /// Every weight is i.i.d. `N(0, 1/d)`.
    pub fn seeded(dims: EncoderDims, logit_scale: f64, seed: u64) -> Result<Self> {
        if dims.embed_dim == 0 || dims.feature_dim == 0 || dims.patch_pixels == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(logit_scale.is_finite() && logit_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("logit_scale = {logit_scale} (must be > 0)")));
        }
        let sigma = 1.0 / (dims.embed_dim as f64).sqrt();
        let mut r = rng::seeded(seed);
        let (d, f) = (dims.embed_dim, dims.feature_dim);
        Ok(Self {
            embed_table: Matrix::gaussian(VOCAB_SIZE, d, sigma, &mut r),
            patch_proj: Matrix::gaussian(d, dims.patch_pixels, sigma, &mut r),
            text_head: Matrix::gaussian(f, d, sigma, &mut r),
            image_head: Matrix::gaussian(f, d, sigma, &mut r),
            logit_scale,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_table.cols()
    }

    /// First 8 bytes (little-endian) of SHA-256 over every shape and weight.
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for m in [&self.embed_table, &self.patch_proj, &self.text_head, &self.image_head] {
            h.update((m.rows() as u64).to_le_bytes());
            h.update((m.cols() as u64).to_le_bytes());
            for v in m.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        h.update(self.logit_scale.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Unit-norm feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Normalizes `v`. A zero vector stays zero.
    pub fn normalized(v: Vec<f64>) -> Self {
        let n = norm(&v);
        if n == 0.0 {
            return Self(v);
        }
        Self(v.into_iter().map(|x| x / n).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

fn encode_rows(rows: &Matrix, head: &Matrix) -> Result<FeatureVector> {
    let pooled = rows.mean_row().ok_or(Error::EmptyInput)?;
    if pooled.len() != head.cols() {
        return Err(Error::DimensionMismatch(format!(
            "rows of width {} for a head expecting {}",
            pooled.len(),
            head.cols()
        )));
    }
    Ok(FeatureVector::normalized(head.matvec(&pooled)))
}

pub fn encode_text(tokens: &TokenEmbeddings, enc: &FrozenEncoders) -> Result<FeatureVector> {
    encode_rows(&tokens.assembled, &enc.text_head)
}

pub fn encode_image(patches: &PatchEmbeddings, enc: &FrozenEncoders) -> Result<FeatureVector> {
    encode_rows(&patches.patches, &enc.image_head)
}

/// `p(normal), p(abnormal)` from the two-way softmax. The pair sums to 1.
pub fn predict_pair(img: &FeatureVector, normal: &FeatureVector, pneu: &FeatureVector, scale: f64) -> (f64, f64) {
    let p = predict(img, normal, pneu, scale);
    (1.0 - p, p)
}

/// Abnormality probability: softmax over `scale · cos` with the pneumonia
/// text as the second class.
pub fn predict(img: &FeatureVector, normal: &FeatureVector, pneu: &FeatureVector, scale: f64) -> f64 {
    let margin = scale * (img.cosine(pneu) - img.cosine(normal));
    sigmoid(margin)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with `p` clamped to `[ε, 1 − ε]`.
pub fn bce_loss(p: f64, label: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// One training/evaluation input: the frozen projection of every patch of
/// the (possibly synthesized) image, the view, and the target.
#[derive(Clone, Copy, Debug)]
pub struct BatchItem<'a> {
    pub projected: &'a Matrix,
    pub view: &'a PositionView,
    /// 1.0 for an inserted anomaly, 0.0 otherwise.
    pub label: f64,
}

/// Features of one view: image plus both class texts.
#[derive(Clone, Debug)]
pub struct ViewFeatures {
    pub image: FeatureVector,
    pub normal: FeatureVector,
    pub pneumonia: FeatureVector,
}

pub fn view_features(
    projected: &Matrix,
    view: &PositionView,
    params: &PromptParams,
    enc: &FrozenEncoders,
) -> Result<ViewFeatures> {
    let patches = assemble_from_projected(projected, view, params)?;
    let normal = assemble_text(view, ClassName::Normal, params, &enc.embed_table)?;
    let pneu = assemble_text(view, ClassName::Pneumonia, params, &enc.embed_table)?;
    Ok(ViewFeatures {
        image: encode_image(&patches, enc)?,
        normal: encode_text(&normal, enc)?,
        pneumonia: encode_text(&pneu, enc)?,
    })
}

pub fn forward(item: &BatchItem<'_>, params: &PromptParams, enc: &FrozenEncoders) -> Result<(f64, f64)> {
    let f = view_features(item.projected, item.view, params, enc)?;
    let p = predict(&f.image, &f.normal, &f.pneumonia, enc.logit_scale);
    Ok((p, bce_loss(p, item.label)))
}

/// Loss, probability and gradients with the shapes of `P_t` and `P_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptGrads {
    pub loss: f64,
    pub prob: f64,
    pub text_prompt: Matrix,
    pub image_prompt: Matrix,
}

/// Backward through `u = y / |y|`: `(du − u (u·du)) / |y|`.
fn normalize_backward(unit: &[f64], raw_norm: f64, upstream: &[f64]) -> Vec<f64> {
    if raw_norm == 0.0 {
        return vec![0.0; unit.len()];
    }
    let proj = dot(unit, upstream);
    unit.iter().zip(upstream).map(|(u, g)| (g - u * proj) / raw_norm).collect()
}

struct Tower {
    raw_norm: f64,
    unit: Vec<f64>,
    rows: usize,
}

fn tower(rows: &Matrix, head: &Matrix) -> Result<Tower> {
    let pooled = rows.mean_row().ok_or(Error::EmptyInput)?;
    let raw = head.matvec(&pooled);
    let raw_norm = norm(&raw);
    let unit = FeatureVector::normalized(raw).0;
    Ok(Tower { raw_norm, unit, rows: rows.rows() })
}

/// Exact gradient of the BCE loss with respect to the prompts. Rows of `P_i`
/// whose patch is visible in the view get exactly zero.
pub fn grad_prompts(item: &BatchItem<'_>, params: &PromptParams, enc: &FrozenEncoders) -> Result<PromptGrads> {
    let view = item.view;
    let patches = assemble_from_projected(item.projected, view, params)?;
    let text_n = assemble_text(view, ClassName::Normal, params, &enc.embed_table)?;
    let text_p = assemble_text(view, ClassName::Pneumonia, params, &enc.embed_table)?;

    let img = tower(&patches.patches, &enc.image_head)?;
    let tn = tower(&text_n.assembled, &enc.text_head)?;
    let tp = tower(&text_p.assembled, &enc.text_head)?;

    let scale = enc.logit_scale;
    let margin = scale * (dot(&img.unit, &tp.unit) - dot(&img.unit, &tn.unit));
    let prob = sigmoid(margin);
    let loss = bce_loss(prob, item.label);

    let mut grads = PromptGrads {
        loss,
        prob,
        text_prompt: Matrix::zeros(params.text_prompt.rows(), params.text_prompt.cols()),
        image_prompt: Matrix::zeros(params.image_prompt.rows(), params.image_prompt.cols()),
    };
    // the clamp is flat outside [ε, 1 − ε]
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prob) {
        return Ok(grads);
    }
    let d_margin = prob - item.label;
    let d_cos_p = scale * d_margin;
    let d_cos_n = -scale * d_margin;

    // image tower
    let mut d_img_unit = vec![0.0; img.unit.len()];
    axpy(d_cos_p, &tp.unit, &mut d_img_unit);
    axpy(d_cos_n, &tn.unit, &mut d_img_unit);
    let d_img_raw = normalize_backward(&img.unit, img.raw_norm, &d_img_unit);
    let d_img_pooled = enc.image_head.matvec_t(&d_img_raw);
    let inv_patches = 1.0 / img.rows as f64;
    for (p, &visible) in view.patch_mask.iter().enumerate() {
        if !visible {
            axpy(inv_patches, &d_img_pooled, grads.image_prompt.row_mut(p));
        }
    }

    // text towers: every P_t row enters each mean once
    let mut d_text_row = vec![0.0; params.dim()];
    for (t, d_cos) in [(&tn, d_cos_n), (&tp, d_cos_p)] {
        let upstream: Vec<f64> = img.unit.iter().map(|u| u * d_cos).collect();
        let d_raw = normalize_backward(&t.unit, t.raw_norm, &upstream);
        let d_pooled = enc.text_head.matvec_t(&d_raw);
        axpy(1.0 / t.rows as f64, &d_pooled, &mut d_text_row);
    }
    for r in 0..grads.text_prompt.rows() {
        grads.text_prompt.row_mut(r).copy_from_slice(&d_text_row);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{PatchGrid, ViewKind};

    fn unit(v: &[f64]) -> FeatureVector {
        FeatureVector::normalized(v.to_vec())
    }

    #[test]
    fn symmetric_or_zero_scale_is_half() {
        let img = unit(&[1.0, 0.0]);
        let a = unit(&[0.0, 1.0]);
        let b = unit(&[0.0, -1.0]);
        assert_eq!(predict(&img, &a, &b, 10.0), 0.5);
        assert_eq!(predict(&img, &unit(&[0.3, 0.9]), &unit(&[-0.9, 0.2]), 0.0), 0.5);
    }

    #[test]
    fn worked_softmax_value() {
        // cos(img, normal) = 0.2, cos(img, pneu) = 0.6
        let img = unit(&[1.0, 0.0]);
        let n = unit(&[0.2, (1.0f64 - 0.04).sqrt()]);
        let p = unit(&[0.6, 0.8]);
        let prob = predict(&img, &n, &p, 10.0);
        let expected = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((prob - expected).abs() < 1e-12);
        assert!((prob - 0.9820).abs() < 1e-4);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let near = bce_loss(1.0, 1.0);
        assert!(near > 0.0 && (near - 1e-7).abs() < 1e-12);
        let p = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((bce_loss(p, 1.0) - 0.0182).abs() < 1e-4);
    }

    #[test]
    fn encode_pools_then_normalizes() {
        let enc = FrozenEncoders {
            embed_table: Matrix::zeros(VOCAB_SIZE, 2),
            patch_proj: Matrix::zeros(2, 1),
            text_head: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            image_head: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            logit_scale: 1.0,
        };
        let one = PatchEmbeddings { patches: Matrix::from_vec(1, 2, vec![3.0, 4.0]), grid: (1, 1) };
        assert_eq!(encode_image(&one, &enc).unwrap().as_slice(), &[0.6, 0.8]);
        let rows = Matrix::from_vec(2, 2, vec![1.0, 2.0, 5.0, 0.0]);
        let doubled = Matrix::vstack(&[&rows, &rows]).unwrap();
        let a = encode_image(&PatchEmbeddings { patches: rows, grid: (1, 2) }, &enc).unwrap();
        let b = encode_image(&PatchEmbeddings { patches: doubled, grid: (2, 2) }, &enc).unwrap();
        assert_eq!(a, b);
        let none = PatchEmbeddings { patches: Matrix::zeros(0, 2), grid: (0, 0) };
        assert!(matches!(encode_image(&none, &enc), Err(Error::EmptyInput)));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let dims = EncoderDims { embed_dim: 4, feature_dim: 3, patch_pixels: 4 };
        let a = FrozenEncoders::seeded(dims, 10.0, 1).unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        let v = &mut b.text_head.as_mut_slice()[0];
        *v = f64::from_bits(v.to_bits() ^ 1);
        assert_ne!(a.content_hash(), b.content_hash());
        assert!(FrozenEncoders::seeded(dims, 0.0, 1).is_err());
    }

    #[test]
    fn entire_view_never_touches_image_prompt() {
        let dims = EncoderDims { embed_dim: 4, feature_dim: 4, patch_pixels: 4 };
        let enc = FrozenEncoders::seeded(dims, 10.0, 5).unwrap();
        let grid = PatchGrid::new(6, 2).unwrap();
        let view = PositionView::new(ViewKind::Entire, grid);
        let mut r = rng::seeded(8);
        let params = PromptParams::gaussian(2, 9, 4, 0.5, &mut r);
        let projected = Matrix::gaussian(9, 4, 1.0, &mut r);
        let item = BatchItem { projected: &projected, view: &view, label: 1.0 };
        let g = grad_prompts(&item, &params, &enc).unwrap();
        assert!(g.image_prompt.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.text_prompt.as_slice().iter().any(|&v| v != 0.0));
    }
}
