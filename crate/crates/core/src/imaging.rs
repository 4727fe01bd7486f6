//! Grayscale images, binary masks and their on-disk formats.
//!
//! The canonical file format is the 8-bit binary portable graymap (`P5`).
//! PNG is accepted on input. Intensities live in `[0, 1]`; bytes map to
//! intensities by `b / 255` and back by round-half-up of `i * 255`.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Default working resolution (side length, pixels).
pub const DEFAULT_IMAGE_SIZE: usize = 224;

/// Row-major grid of intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    /// Validates the length and the `[0, 1]` range of `data`.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} intensities for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::DimensionMismatch(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "intensity outside [0, 1]");
        Self { width, height, data: vec![value; width * height] }
    }

    /// Builds an image from `f(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<GrayImage> {
        check_dims(self.dims(), mask.dims())?;
        let data = self
            .data
            .iter()
            .zip(mask.as_slice())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(GrayImage { width: self.width, height: self.height, data })
    }

    /// Bilinear resampling with pixel-center alignment. Equal sizes are an
    /// exact identity.
    pub fn resize(&self, width: usize, height: usize) -> Result<GrayImage> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                data.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
        Ok(GrayImage { width, height, data })
    }

    /// Round-half-up quantization to bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| intensity_to_byte(v)).collect()
    }
}

pub fn intensity_to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn byte_to_intensity(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Row-major grid of `{0, 1}` values.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Pixel coordinates `(x, y)` of set pixels in row-major order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(BinaryMask { width: self.width, height: self.height, data })
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect();
        Ok(BinaryMask { width: self.width, height: self.height, data })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Number of 4-connected components.
    pub fn component_count(&self) -> usize {
        self.components().len()
    }

    /// Keeps only the largest 4-connected component. Ties go to the component
    /// whose first pixel comes first in row-major order.
    pub fn largest_component(&self) -> BinaryMask {
        let comps = self.components();
        let mut out = BinaryMask::empty(self.width, self.height);
        let mut best: Option<&Vec<usize>> = None;
        for c in &comps {
            if best.is_none_or(|b| c.len() > b.len()) {
                best = Some(c);
            }
        }
        if let Some(b) = best {
            for &i in b {
                out.data[i] = true;
            }
        }
        out
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut comps = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if !self.data[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// 1.0 for set pixels, 0.0 elsewhere.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Decodes a graymap or PNG file without resizing.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_image(&bytes)
}

/// Decodes and resamples to a `target_size × target_size` image.
pub fn load_image(path: &Path, target_size: usize) -> Result<GrayImage> {
    read_image(path)?.resize(target_size, target_size)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(Error::UnsupportedFormat("expected a P5 graymap or a PNG".into()))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedFormat("malformed graymap header".into()))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("graymap maxval {maxval} (8-bit only)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::UnsupportedFormat("malformed graymap header".into()));
    }
    pos += 1;
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::UnsupportedFormat("truncated graymap raster".into()))?;
    let data = if maxval == 255 {
        raster.iter().map(|&b| byte_to_intensity(b)).collect()
    } else {
        raster.iter().map(|&b| (b as f64 / maxval as f64).min(1.0)).collect()
    };
    Ok(GrayImage { width, height, data })
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    let data = match decoded {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(byte_to_intensity).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / (3.0 * 255.0))
            .collect(),
    };
    Ok(GrayImage { width, height, data })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

/// Writes an 8-bit binary graymap.
pub fn save_image(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("pgm" | "png")
    )
}

/// Sorted `.pgm`/`.png` files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && is_image_path(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// `<root>/normal/*` and `<root>/abnormal/*` listings.
#[derive(Clone, Debug, Default)]
pub struct DatasetListing {
    pub normal: Vec<PathBuf>,
    pub abnormal: Vec<PathBuf>,
}

impl DatasetListing {
    /// `abnormal/` may be absent (training data); `normal/` must exist.
    pub fn scan(root: &Path) -> Result<Self> {
        let normal = list_images(&root.join("normal"))?;
        let abnormal_dir = root.join("abnormal");
        let abnormal = if abnormal_dir.is_dir() { list_images(&abnormal_dir)? } else { Vec::new() };
        Ok(Self { normal, abnormal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(width: usize, height: usize, raster: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{width} {height}\n255\n").into_bytes();
        v.extend_from_slice(raster);
        v
    }

    #[test]
    fn decodes_endpoints() {
        let img = decode_image(&pgm(2, 2, &[0, 255, 255, 0])).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let img = decode_image(&pgm(1, 1, &[128])).unwrap();
        assert_eq!(img.as_slice(), &[128.0 / 255.0]);
    }

    #[test]
    fn constant_downsample_stays_constant() {
        let img = decode_image(&pgm(4, 4, &[64; 16])).unwrap().resize(2, 2).unwrap();
        // direct computation: every bilinear tap reads 64/255, weights sum to 1
        for &v in img.as_slice() {
            assert!((v - 64.0 / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff".to_vec();
        assert_eq!(decode_image(&bytes).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_unknown_and_truncated() {
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(
            decode_image(&pgm(3, 3, &[1, 2])),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode_image(b"P5\n0 3\n255\n"), Err(Error::ZeroDimension)));
    }

    #[test]
    fn quantization_rounds_half_up() {
        let img = GrayImage::new(3, 1, vec![0.0, 1.0, 0.5]).unwrap();
        assert_eq!(img.to_bytes(), vec![0, 255, 128]);
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_image(Path::new("/definitely/not/here.pgm"), 4).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }

    #[test]
    fn png_rgb_is_channel_averaged() {
        let mut buf = Vec::new();
        let rgb = image::RgbImage::from_raw(2, 1, vec![255, 0, 0, 30, 60, 90]).unwrap();
        rgb.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png).unwrap();
        let img = decode_image(&buf).unwrap();
        assert!((img.get(0, 0) - 85.0 / 255.0).abs() < 1e-15);
        assert!((img.get(1, 0) - 60.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn largest_component_picks_biggest_blob() {
        let mask = BinaryMask::from_fn(6, 3, |x, y| (x < 2 && y == 0) || (x >= 3 && y >= 1));
        assert_eq!(mask.component_count(), 2);
        let big = mask.largest_component();
        assert_eq!(big.count(), 6);
        assert!(big.get(5, 2) && !big.get(0, 0));
    }

    #[test]
    fn diagonal_pixels_are_not_4_connected() {
        let mask = BinaryMask::from_fn(2, 2, |x, y| x == y);
        assert_eq!(mask.component_count(), 2);
    }
}
