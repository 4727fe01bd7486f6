//! Position-guided prompts.
//!
//! Each of the five views pairs a text prefix with a binary region mask.
//! Text input is `E_pos ⊕ P_t ⊕ E_cls` (row concatenation); image input keeps
//! the projected patch `E_i[p]` where the patch lies entirely inside the view
//! region and substitutes the learnable prompt row `P_i[p]` everywhere else.

use std::fmt;

use crate::imaging::{check_dims, BinaryMask, GrayImage};
use crate::linalg::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Default prompt initialization scale.
pub const PROMPT_INIT_SIGMA: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Left,
    Right,
    Upper,
    Lower,
    Lung,
    Normal,
    Pneumonia,
    Pad,
    Empty,
}

impl Token {
    pub const VOCAB: [Token; 9] = [
        Token::Left,
        Token::Right,
        Token::Upper,
        Token::Lower,
        Token::Lung,
        Token::Normal,
        Token::Pneumonia,
        Token::Pad,
        Token::Empty,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn word(self) -> &'static str {
        match self {
            Token::Left => "left",
            Token::Right => "right",
            Token::Upper => "upper",
            Token::Lower => "lower",
            Token::Lung => "lung",
            Token::Normal => "normal",
            Token::Pneumonia => "pneumonia",
            Token::Pad => "<pad>",
            Token::Empty => "<empty>",
        }
    }

    pub fn from_word(word: &str) -> Option<Token> {
        Token::VOCAB.into_iter().find(|t| t.word() == word)
    }
}

pub const VOCAB_SIZE: usize = Token::VOCAB.len();

/// Whitespace-separated lookup. The empty string becomes a single `<empty>`.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let tokens: Vec<Token> = text
        .split_whitespace()
        .map(|w| Token::from_word(w).ok_or_else(|| Error::UnknownWord(w.to_string())))
        .collect::<Result<_>>()?;
    if tokens.is_empty() {
        return Ok(vec![Token::Empty]);
    }
    Ok(tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViewKind {
    LeftLung,
    RightLung,
    UpperLung,
    LowerLung,
    Entire,
}

impl ViewKind {
    /// Canonical order used for five-view probabilities.
    pub const ALL: [ViewKind; 5] =
        [ViewKind::LeftLung, ViewKind::RightLung, ViewKind::UpperLung, ViewKind::LowerLung, ViewKind::Entire];

    pub fn prefix(self) -> &'static str {
        match self {
            ViewKind::LeftLung => "left lung",
            ViewKind::RightLung => "right lung",
            ViewKind::UpperLung => "upper lung",
            ViewKind::LowerLung => "lower lung",
            ViewKind::Entire => "",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewKind::LeftLung => "left_lung",
            ViewKind::RightLung => "right_lung",
            ViewKind::UpperLung => "upper_lung",
            ViewKind::LowerLung => "lower_lung",
            ViewKind::Entire => "entire",
        }
    }

    /// Image-side halves: "left" is the left half of the image
    /// (columns `[0, W/2)`), "upper" is rows `[0, H/2)`.
    pub fn contains(self, x: usize, y: usize, width: usize, height: usize) -> bool {
        match self {
            ViewKind::LeftLung => x < width / 2,
            ViewKind::RightLung => x >= width / 2,
            ViewKind::UpperLung => y < height / 2,
            ViewKind::LowerLung => y >= height / 2,
            ViewKind::Entire => true,
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Patch tiling of a square image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub image_size: usize,
    pub patch_size: usize,
}

impl PatchGrid {
    pub fn new(image_size: usize, patch_size: usize) -> Result<Self> {
        if image_size == 0 || patch_size == 0 {
            return Err(Error::ZeroDimension);
        }
        if !image_size.is_multiple_of(patch_size) {
            return Err(Error::DimensionMismatch(format!(
                "image side {image_size} is not a multiple of patch side {patch_size}"
            )));
        }
        Ok(Self { image_size, patch_size })
    }

    /// Patches per row (and per column).
    pub fn side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        self.side() * self.side()
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Pixels of patch `p` in row-major order within the patch.
    pub fn patch_values(&self, img: &GrayImage, p: usize) -> Vec<f64> {
        let (pr, pc) = (p / self.side(), p % self.side());
        let (x0, y0) = (pc * self.patch_size, pr * self.patch_size);
        let mut out = Vec::with_capacity(self.patch_pixels());
        for y in y0..y0 + self.patch_size {
            for x in x0..x0 + self.patch_size {
                out.push(img.get(x, y));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionView {
    pub kind: ViewKind,
    pub region_mask: BinaryMask,
    /// `patch_mask[p]` is set iff every pixel of patch `p` is inside the region.
    pub patch_mask: Vec<bool>,
    pub prefix_tokens: Vec<Token>,
    pub grid: PatchGrid,
}

impl PositionView {
    pub fn new(kind: ViewKind, grid: PatchGrid) -> Self {
        let n = grid.image_size;
        let region_mask = BinaryMask::from_fn(n, n, |x, y| kind.contains(x, y, n, n));
        let ps = grid.patch_size;
        let patch_mask = (0..grid.n_patches())
            .map(|p| {
                let (x0, y0) = ((p % grid.side()) * ps, (p / grid.side()) * ps);
                (y0..y0 + ps).all(|y| (x0..x0 + ps).all(|x| region_mask.get(x, y)))
            })
            .collect();
        let prefix_tokens = tokenize(kind.prefix()).expect("view prefixes use the fixed vocabulary");
        Self { kind, region_mask, patch_mask, prefix_tokens, grid }
    }

    /// The five views in canonical order.
    pub fn all(grid: PatchGrid) -> Vec<PositionView> {
        ViewKind::ALL.iter().map(|&k| PositionView::new(k, grid)).collect()
    }

    pub fn visible_patches(&self) -> usize {
        self.patch_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassName {
    Normal,
    Pneumonia,
}

impl ClassName {
    pub fn token(self) -> Token {
        match self {
            ClassName::Normal => Token::Normal,
            ClassName::Pneumonia => Token::Pneumonia,
        }
    }
}

/// The trainable state: text prompt `P_t` (`L_t × d`) and image prompt
/// `P_i` (`n_patches × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct PromptParams {
    pub text_prompt: Matrix,
    pub image_prompt: Matrix,
}

impl PromptParams {
    pub fn zeros(text_len: usize, n_patches: usize, dim: usize) -> Self {
        Self { text_prompt: Matrix::zeros(text_len, dim), image_prompt: Matrix::zeros(n_patches, dim) }
    }

    pub fn gaussian(text_len: usize, n_patches: usize, dim: usize, sigma: f64, rng: &mut Rng) -> Self {
        Self {
            text_prompt: Matrix::gaussian(text_len, dim, sigma, rng),
            image_prompt: Matrix::gaussian(n_patches, dim, sigma, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.image_prompt.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.text_prompt.all_finite() && self.image_prompt.all_finite()
    }
}

/// `E_pos`, `E_cls` and their concatenation with `P_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenEmbeddings {
    pub pos: Matrix,
    pub cls: Matrix,
    pub assembled: Matrix,
}

pub fn embed_tokens(tokens: &[Token], embed_table: &Matrix) -> Matrix {
    let d = embed_table.cols();
    let mut data = Vec::with_capacity(tokens.len() * d);
    for t in tokens {
        data.extend_from_slice(embed_table.row(t.id()));
    }
    Matrix::from_vec(tokens.len(), d, data)
}

pub fn assemble_text(
    view: &PositionView,
    class: ClassName,
    params: &PromptParams,
    embed_table: &Matrix,
) -> Result<TokenEmbeddings> {
    if embed_table.rows() != VOCAB_SIZE {
        return Err(Error::DimensionMismatch(format!(
            "embedding table has {} rows, vocabulary has {VOCAB_SIZE}",
            embed_table.rows()
        )));
    }
    let pos = embed_tokens(&view.prefix_tokens, embed_table);
    let cls = embed_tokens(&[class.token()], embed_table);
    let assembled = Matrix::vstack(&[&pos, &params.text_prompt, &cls]).ok_or_else(|| {
        Error::DimensionMismatch(format!(
            "text prompt width {} vs embedding width {}",
            params.text_prompt.cols(),
            embed_table.cols()
        ))
    })?;
    Ok(TokenEmbeddings { pos, cls, assembled })
}

/// Image-side input: one row per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbeddings {
    pub patches: Matrix,
    /// `(rows, cols)` of the patch grid.
    pub grid: (usize, usize),
}

/// Projects every patch of `img` with `patch_proj` (`d × patch_pixels`).
pub fn project_patches(img: &GrayImage, grid: PatchGrid, patch_proj: &Matrix) -> Result<Matrix> {
    check_dims(img.dims(), (grid.image_size, grid.image_size))?;
    if patch_proj.cols() != grid.patch_pixels() {
        return Err(Error::DimensionMismatch(format!(
            "patch projection expects {} pixels, patches have {}",
            patch_proj.cols(),
            grid.patch_pixels()
        )));
    }
    let d = patch_proj.rows();
    let mut data = Vec::with_capacity(grid.n_patches() * d);
    for p in 0..grid.n_patches() {
        data.extend(patch_proj.matvec(&grid.patch_values(img, p)));
    }
    Ok(Matrix::from_vec(grid.n_patches(), d, data))
}

fn check_image_prompt(view: &PositionView, params: &PromptParams, d: usize) -> Result<()> {
    if params.image_prompt.shape() != (view.grid.n_patches(), d) {
        return Err(Error::DimensionMismatch(format!(
            "image prompt is {:?}, expected ({}, {d})",
            params.image_prompt.shape(),
            view.grid.n_patches()
        )));
    }
    Ok(())
}

/// `E_image = E_i ⊙ M + P_i ⊙ (1 − M)`, with `E_i` projected from the
/// view-masked image.
pub fn assemble_image(
    img: &GrayImage,
    view: &PositionView,
    params: &PromptParams,
    patch_proj: &Matrix,
) -> Result<PatchEmbeddings> {
    let masked = img.masked(&view.region_mask)?;
    let projected = project_patches(&masked, view.grid, patch_proj)?;
    assemble_from_projected(&projected, view, params)
}

/// Same as [`assemble_image`] given the projection of the unmasked image.
/// Rows kept from `E_i` belong to patches entirely inside the region, which
/// masking leaves untouched, so the result is identical.
pub fn assemble_from_projected(
    projected: &Matrix,
    view: &PositionView,
    params: &PromptParams,
) -> Result<PatchEmbeddings> {
    let d = projected.cols();
    check_image_prompt(view, params, d)?;
    if projected.rows() != view.grid.n_patches() {
        return Err(Error::DimensionMismatch(format!(
            "{} projected patches for a {}-patch grid",
            projected.rows(),
            view.grid.n_patches()
        )));
    }
    let mut patches = Matrix::zeros(projected.rows(), d);
    for (p, &keep) in view.patch_mask.iter().enumerate() {
        let src = if keep { projected.row(p) } else { params.image_prompt.row(p) };
        patches.row_mut(p).copy_from_slice(src);
    }
    let side = view.grid.side();
    Ok(PatchEmbeddings { patches, grid: (side, side) })
}
