//! Grayscale images, block matrices and quality metrics.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Real-valued grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::BadShape(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                row: i / width,
                col: i % width,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| f(p)).collect(),
        )
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, top: usize, left: usize, width: usize, height: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::BadShape(format!(
                "crop {width}x{height}+{left}+{top} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut px = Vec::with_capacity(width * height);
        for r in top..top + height {
            px.extend_from_slice(
                &self.pixels[r * self.width + left..r * self.width + left + width],
            );
        }
        Self::new(width, height, px)
    }
}

/// Non-overlapping `b x b` blocks as columns of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedImage {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    /// `b^2 x N`, blocks in raster order, each vectorised column-major.
    pub y: Mat,
    pub removed_mean: f64,
}

impl BlockedImage {
    pub fn blocks_across(&self) -> usize {
        self.width / self.block
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    /// Same geometry and mean with a new block matrix.
    pub fn with_blocks(&self, y: Mat) -> Result<Self> {
        if y.shape() != self.y.shape() {
            return Err(Error::ShapeMismatch(format!(
                "block matrix {:?} vs {:?}",
                y.shape(),
                self.y.shape()
            )));
        }
        Ok(Self { y, ..self.clone() })
    }
}

pub fn to_blocks(img: &GrayImage, b: usize, subtract_mean: bool) -> Result<BlockedImage> {
    if b == 0 || img.width % b != 0 || img.height % b != 0 {
        return Err(Error::BadShape(format!(
            "{}x{} image is not divisible into {b}x{b} blocks",
            img.width, img.height
        )));
    }
    let mean = if subtract_mean { img.mean() } else { 0.0 };
    let across = img.width / b;
    let down = img.height / b;
    let mut y = Mat::zeros(b * b, across * down);
    for br in 0..down {
        for bc in 0..across {
            let col = br * across + bc;
            for c in 0..b {
                for r in 0..b {
                    y[(c * b + r, col)] = img.get(br * b + r, bc * b + c) - mean;
                }
            }
        }
    }
    Ok(BlockedImage {
        width: img.width,
        height: img.height,
        block: b,
        y,
        removed_mean: mean,
    })
}

pub fn from_blocks(blk: &BlockedImage) -> Result<GrayImage> {
    let b = blk.block;
    if b == 0 || blk.width % b != 0 || blk.height % b != 0 {
        return Err(Error::BadShape(format!(
            "{}x{} with block {b}",
            blk.width, blk.height
        )));
    }
    let across = blk.width / b;
    let down = blk.height / b;
    if blk.y.shape() != (b * b, across * down) {
        return Err(Error::BadShape(format!(
            "block matrix {:?} does not fit a {}x{} image",
            blk.y.shape(),
            blk.width,
            blk.height
        )));
    }
    let mut px = vec![0.0; blk.width * blk.height];
    for br in 0..down {
        for bc in 0..across {
            let col = br * across + bc;
            for c in 0..b {
                for r in 0..b {
                    px[(br * b + r) * blk.width + bc * b + c] =
                        blk.y[(c * b + r, col)] + blk.removed_mean;
                }
            }
        }
    }
    GrayImage::new(blk.width, blk.height, px)
}

/// Training matrix of every image's mean-removed blocks, side by side.
pub fn stack_blocks(images: &[GrayImage], b: usize) -> Result<Mat> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images given".into()));
    }
    let blocks = images
        .iter()
        .map(|img| to_blocks(img, b, true).map(|blk| blk.y))
        .collect::<Result<Vec<_>>>()?;
    let total = blocks.iter().map(|y| y.ncols()).sum();
    let mut out = Mat::zeros(b * b, total);
    let mut at = 0;
    for y in blocks {
        out.columns_mut(at, y.ncols()).copy_from(&y);
        at += y.ncols();
    }
    Ok(out)
}

fn same_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::BadShape(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for peak 255; `f64::INFINITY` for
/// identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a, b)?;
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Mean SSIM over every 8x8 window (stride 1, uniform weights).
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a, b)?;
    let w = SSIM_WINDOW;
    if a.width < w || a.height < w {
        return Err(Error::BadShape(format!(
            "SSIM needs at least {w}x{w}, got {}x{}",
            a.width, a.height
        )));
    }
    let count = (w * w) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for top in 0..=a.height - w {
        for left in 0..=a.width - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in top..top + w {
                for c in left..left + w {
                    let x = a.get(r, c);
                    let y = b.get(r, c);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let ma = sa / count;
            let mb = sb / count;
            let va = (saa / count - ma * ma).max(0.0);
            let vb = (sbb / count - mb * mb).max(0.0);
            let cov = sab / count - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, &encode_pgm(img))
}

/// Binary P5 with maxval 255; pixels clamped to `[0, 255]` and rounded
/// half away from zero.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|p| p.clamp(0.0, 255.0).round() as u8));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |offset: usize, message: &str| Error::MalformedFile {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad(0, "expected P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        if pos == start {
            return Err(bad(pos, "expected whitespace"));
        }
        let digits = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits {
            return Err(bad(pos, "expected a decimal number"));
        }
        let text =
            std::str::from_utf8(&bytes[digits..pos]).map_err(|_| bad(digits, "bad digits"))?;
        *field = text
            .parse()
            .map_err(|_| bad(digits, "number out of range"))?;
        if k < 2 && *field == 0 {
            return Err(bad(digits, "zero image dimension"));
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad(pos, "only maxval 255 is supported"));
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad(pos, "expected a single whitespace before the raster")),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| bad(pos, "image too large"))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(bad(bytes.len(), "raster is truncated"));
    }
    if raster.len() > need {
        return Err(bad(pos + need, "trailing bytes after raster"));
    }
    GrayImage::new(width, height, raster.iter().map(|&v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_blocks_keep_image_order() {
        let a = GrayImage::filled(4, 4, 10.0).unwrap();
        let px: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let b = GrayImage::new(4, 4, px).unwrap();
        let y = stack_blocks(&[a, b.clone()], 2).unwrap();
        assert_eq!(y.shape(), (4, 8));
        assert!(y.columns(0, 4).iter().all(|v| *v == 0.0));
        assert_eq!(y.columns(4, 4), to_blocks(&b, 2, true).unwrap().y);
        assert!(stack_blocks(&[], 2).is_err());
    }

    #[test]
    fn column_major_within_block() {
        let img = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let blk = to_blocks(&img, 2, false).unwrap();
        assert_eq!(blk.y.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(from_blocks(&blk).unwrap(), img);
    }

    #[test]
    fn raster_order_of_blocks() {
        let px: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let img = GrayImage::new(4, 4, px).unwrap();
        let blk = to_blocks(&img, 2, false).unwrap();
        // second block is the top-right one
        assert_eq!(blk.y.column(1).as_slice(), &[2.0, 6.0, 3.0, 7.0]);
        assert_eq!(blk.y.column(2).as_slice(), &[8.0, 12.0, 9.0, 13.0]);
    }

    #[test]
    fn constant_image_mean() {
        let img = GrayImage::filled(8, 8, 37.5).unwrap();
        let blk = to_blocks(&img, 4, true).unwrap();
        assert_eq!(blk.removed_mean, 37.5);
        assert!(blk.y.iter().all(|v| *v == 0.0));
        assert_eq!(from_blocks(&blk).unwrap(), img);
    }

    #[test]
    fn indivisible_rejected() {
        let img = GrayImage::filled(6, 8, 1.0).unwrap();
        assert!(matches!(to_blocks(&img, 4, false), Err(Error::BadShape(_))));
    }

    #[test]
    fn psnr_closed_forms() {
        let a = GrayImage::filled(4, 4, 10.0).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = a.map(|p| p + 1.0).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-12);
        let z = GrayImage::filled(4, 4, 0.0).unwrap();
        let w = GrayImage::filled(4, 4, 255.0).unwrap();
        assert!(psnr(&z, &w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_closed_forms() {
        let a = GrayImage::filled(8, 8, 100.0).unwrap();
        let b = GrayImage::filled(8, 8, 110.0).unwrap();
        let c1 = (0.01f64 * 255.0).powi(2);
        let expect = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.995477).abs() < 1e-6);

        let px: Vec<f64> = (0..144).map(|i| ((i * 37) % 256) as f64).collect();
        let g = GrayImage::new(12, 12, px).unwrap();
        assert!((ssim(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        let inv = g.map(|p| 255.0 - p).unwrap();
        assert!(ssim(&g, &inv).unwrap() < 1.0);
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let img = GrayImage::new(1, 1, vec![128.0]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);

        let with_comment = b"P5\n# a comment\n2 1\n255\n\x01\x02";
        let img = decode_pgm(with_comment).unwrap();
        assert_eq!(img.pixels(), &[1.0, 2.0]);

        let maxval = b"P5\n1 1\n65535\n\x00\x01";
        assert!(matches!(
            decode_pgm(maxval),
            Err(Error::MalformedFile { .. })
        ));
        let short = b"P5\n2 2\n255\n\x00";
        assert!(matches!(
            decode_pgm(short),
            Err(Error::MalformedFile { offset: 12, .. })
        ));
        assert!(matches!(
            decode_pgm(b"P2\n"),
            Err(Error::MalformedFile { offset: 0, .. })
        ));
    }

    #[test]
    fn encode_clamps_and_rounds() {
        let img = GrayImage::new(4, 1, vec![-3.0, 2.5, 254.5, 300.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 3, 255, 255]);
    }
}
