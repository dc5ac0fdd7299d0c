//! Block-wise denoising, inpainting and rate-distortion pipelines.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::imaging::{from_blocks, psnr, ssim, to_blocks, BlockedImage, GrayImage};
use crate::matrix::{Mat, Vector};
use crate::sparse::{BpdnOperator, BpdnOptions};

/// Tolerance used for the BPDN solves of every pipeline.
pub const PIPELINE_BPDN_TOL: f64 = 1e-6;

/// Default data-fit radius of the inpainting solves.
pub const INPAINT_EPS: f64 = 0.01;

/// Candidate data-fit radii scanned when picking the denoising `eps`.
pub fn denoise_eps_grid() -> Vec<f64> {
    (1..=12).map(|i| 2.0 * i as f64).collect()
}

/// Quantizer steps `0.5, 1, 2, ..., 128`.
pub fn default_quant_steps() -> Vec<f64> {
    (0..9).map(|i| 0.5 * f64::powi(2.0, i)).collect()
}

pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = img
        .pixels()
        .iter()
        .map(|p| p + normal.sample(&mut rng))
        .collect();
    GrayImage::new(img.width(), img.height(), px)
}

/// Observed-pixel selection, one flag per entry of the block matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    /// `observed[col * b^2 + r]` flags row `r` of block column `col`.
    observed: Vec<bool>,
}

impl Mask {
    pub fn all_observed(width: usize, height: usize, block: usize) -> Result<Self> {
        let blocks = block_count(width, height, block)?;
        Ok(Self {
            width,
            height,
            block,
            observed: vec![true; blocks * block * block],
        })
    }

    pub fn block_len(&self) -> usize {
        self.block * self.block
    }

    pub fn blocks(&self) -> usize {
        self.observed.len() / self.block_len()
    }

    pub fn block_flags(&self, col: usize) -> &[bool] {
        let l = self.block_len();
        &self.observed[col * l..(col + 1) * l]
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observed.iter().filter(|o| **o).count() as f64 / self.observed.len() as f64
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        let b = self.block;
        let across = self.width / b;
        let blk = (row / b) * across + col / b;
        self.observed[blk * self.block_len() + (col % b) * b + row % b]
    }

    /// Missing pixels set to zero.
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::BadShape(format!(
                "{}x{} image vs {}x{} mask",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        let mut px = img.pixels().to_vec();
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.is_observed(r, c) {
                    px[r * self.width + c] = 0.0;
                }
            }
        }
        GrayImage::new(self.width, self.height, px)
    }
}

fn block_count(width: usize, height: usize, block: usize) -> Result<usize> {
    if block == 0 || width % block != 0 || height % block != 0 {
        return Err(Error::BadShape(format!(
            "{width}x{height} is not divisible into {block}x{block} blocks"
        )));
    }
    Ok((width / block) * (height / block))
}

/// Exactly `round(fraction * b^2)` missing pixels per block.
pub fn random_mask(
    width: usize,
    height: usize,
    block: usize,
    missing_fraction: f64,
    seed: u64,
) -> Result<Mask> {
    if !(0.0..=0.99).contains(&missing_fraction) {
        return Err(Error::InvalidArgument(format!(
            "missing fraction must lie in [0, 0.99], got {missing_fraction}"
        )));
    }
    let mut mask = Mask::all_observed(width, height, block)?;
    let l = mask.block_len();
    let missing = (missing_fraction * l as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for col in 0..mask.blocks() {
        for r in sample(&mut rng, l, missing) {
            mask.observed[col * l + r] = false;
        }
    }
    Ok(mask)
}

/// Blocks of `img` with `mean` removed from every pixel.
pub fn blocks_about(img: &GrayImage, b: usize, mean: f64) -> Result<BlockedImage> {
    let mut blk = to_blocks(img, b, false)?;
    blk.y.add_scalar_mut(-mean);
    blk.removed_mean = mean;
    Ok(blk)
}

fn check_pair(blk: &BlockedImage, psi: &Dictionary, phi: &Dictionary) -> Result<()> {
    if psi.mat().shape() != phi.mat().shape() {
        return Err(Error::ShapeMismatch(format!(
            "synthesis {:?} vs analysis {:?}",
            psi.mat().shape(),
            phi.mat().shape()
        )));
    }
    check_dict(blk, psi)
}

fn check_dict(blk: &BlockedImage, psi: &Dictionary) -> Result<()> {
    if psi.n() != blk.y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "dictionary has {} rows, blocks have {}",
            psi.n(),
            blk.y.nrows()
        )));
    }
    Ok(())
}

fn collect_columns(rows: usize, cols: Vec<Result<Vector>>) -> Result<Mat> {
    let mut out = Mat::zeros(rows, cols.len());
    for (i, c) in cols.into_iter().enumerate() {
        out.set_column(i, &c?);
    }
    Ok(out)
}

/// Per block: `w = argmin ||w||_1 s.t. ||phi^T y - phi^T psi w|| <= eps`,
/// output `psi w`.
pub fn denoise(
    noisy: &BlockedImage,
    psi: &Dictionary,
    phi: &Dictionary,
    eps: f64,
) -> Result<BlockedImage> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    check_pair(noisy, psi, phi)?;
    // phi^T = Q R with orthonormal Q, so ||phi^T v|| = ||R v||.
    let r = phi.mat().transpose().qr().r();
    let op = BpdnOperator::new(&r * psi.mat())?;
    let z = &r * &noisy.y;
    let opts = BpdnOptions {
        tol: PIPELINE_BPDN_TOL,
        ..BpdnOptions::default()
    };
    let cols: Vec<Result<Vector>> = (0..z.ncols())
        .into_par_iter()
        .map(|i| {
            op.solve(&z.column(i).into_owned(), eps, &opts)
                .map(|s| psi.mat() * s.w)
                .map_err(|e| Error::Block {
                    block: i,
                    source: Box::new(e),
                })
        })
        .collect();
    noisy.with_blocks(collect_columns(noisy.y.nrows(), cols)?)
}

/// Outcome of a denoising run with the data-fit radius picked on a grid.
#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub image: GrayImage,
    pub psnr: f64,
    pub ssim: f64,
    pub eps: f64,
}

/// Denoises `noisy` for every `eps` in `grid` and keeps the one with the
/// best PSNR against `clean`. Ties keep the smaller `eps`.
pub fn denoise_best_eps(
    clean: &GrayImage,
    noisy: &GrayImage,
    block: usize,
    psi: &Dictionary,
    phi: &Dictionary,
    grid: &[f64],
) -> Result<DenoiseResult> {
    let blk = to_blocks(noisy, block, true)?;
    let mut best: Option<(GrayImage, f64, f64)> = None;
    for &eps in grid {
        let img = from_blocks(&denoise(&blk, psi, phi, eps)?)?;
        let p = psnr(clean, &img)?;
        if best.as_ref().map_or(true, |b| p > b.1) {
            best = Some((img, p, eps));
        }
    }
    let (image, psnr, eps) = best.ok_or_else(|| Error::InvalidArgument("empty eps grid".into()))?;
    let ssim = ssim(clean, &image)?;
    Ok(DenoiseResult {
        image,
        psnr,
        ssim,
        eps,
    })
}

/// Per block: `w = argmin ||w||_1 s.t. ||Q y - Q psi w|| <= eps` with `Q`
/// selecting observed rows, output `psi w`.
pub fn inpaint(
    observed: &BlockedImage,
    mask: &Mask,
    psi: &Dictionary,
    eps: f64,
) -> Result<BlockedImage> {
    check_dict(observed, psi)?;
    if mask.block != observed.block
        || mask.width != observed.width
        || mask.height != observed.height
    {
        return Err(Error::ShapeMismatch(
            "mask geometry differs from the blocked image".into(),
        ));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be >= 0, got {eps}"
        )));
    }
    let opts = BpdnOptions {
        tol: PIPELINE_BPDN_TOL,
        ..BpdnOptions::default()
    };
    let cols: Vec<Result<Vector>> = (0..observed.len())
        .into_par_iter()
        .map(|i| {
            let rows: Vec<usize> = mask
                .block_flags(i)
                .iter()
                .enumerate()
                .filter(|(_, o)| **o)
                .map(|(r, _)| r)
                .collect();
            if rows.is_empty() {
                return Err(Error::EmptyBlockMask { block: i });
            }
            let qpsi = psi.mat().select_rows(rows.iter());
            let qy = Vector::from_iterator(rows.len(), rows.iter().map(|&r| observed.y[(r, i)]));
            BpdnOperator::new(qpsi)
                .and_then(|op| op.solve(&qy, eps, &opts))
                .map(|s| psi.mat() * s.w)
                .map_err(|e| Error::Block {
                    block: i,
                    source: Box::new(e),
                })
        })
        .collect();
    observed.with_blocks(collect_columns(observed.y.nrows(), cols)?)
}

/// Inpaints `observed` (missing pixels ignored) about the mean of the
/// observed pixels and scores the result against `clean`.
pub fn inpaint_image(
    clean: &GrayImage,
    observed: &GrayImage,
    mask: &Mask,
    psi: &Dictionary,
    eps: f64,
) -> Result<(GrayImage, f64, f64)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..observed.height() {
        for c in 0..observed.width() {
            if mask.is_observed(r, c) {
                sum += observed.get(r, c);
                count += 1;
            }
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    let blk = blocks_about(observed, mask.block, mean)?;
    let img = from_blocks(&inpaint(&blk, mask, psi, eps)?)?;
    let p = psnr(clean, &img)?;
    let s = ssim(clean, &img)?;
    Ok((img, p, s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bits_per_pixel: f64,
    pub psnr_db: f64,
    pub quant_step: f64,
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Bit-plane entropy of an integer coefficient set, in bits.
///
/// Every magnitude plane costs `count * H2(ones fraction)`; the sign plane
/// is charged only for nonzero coefficients.
pub fn bitplane_bits(q: &[i64]) -> f64 {
    let count = q.len() as f64;
    let max = q.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    let planes = 64 - max.leading_zeros();
    let mut bits = 0.0;
    for plane in 0..planes {
        let ones = q
            .iter()
            .filter(|v| (v.unsigned_abs() >> plane) & 1 == 1)
            .count() as f64;
        bits += count * binary_entropy(ones / count);
    }
    let nonzero = q.iter().filter(|v| **v != 0).count() as f64;
    if nonzero > 0.0 {
        let negative = q.iter().filter(|v| **v < 0).count() as f64;
        bits += nonzero * binary_entropy(negative / nonzero);
    }
    bits
}

/// Rate-distortion points for mid-tread quantisation of `phi^T y` at each
/// step.
pub fn compress_rd(
    y: &BlockedImage,
    psi: &Dictionary,
    phi: &Dictionary,
    steps: &[f64],
) -> Result<Vec<RdPoint>> {
    check_pair(y, psi, phi)?;
    if let Some(bad) = steps.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "quantizer steps must be positive, got {bad}"
        )));
    }
    let original = from_blocks(y)?;
    let pixels = (y.width * y.height) as f64;
    let z = phi.mat().transpose() * &y.y;
    steps
        .iter()
        .map(|&step| {
            let q: Vec<i64> = z.iter().map(|v| (v / step).round() as i64).collect();
            let zq = Mat::from_iterator(z.nrows(), z.ncols(), q.iter().map(|&v| v as f64 * step));
            let restored = from_blocks(&y.with_blocks(psi.mat() * zq)?)?;
            Ok(RdPoint {
                bits_per_pixel: bitplane_bits(&q) / pixels,
                psnr_db: psnr(&original, &restored)?,
                quant_step: step,
            })
        })
        .collect()
}

/// PSNR of a rate-distortion curve at `bpp`, interpolated linearly between
/// neighbouring points; `None` outside the sampled rate range.
pub fn psnr_at_rate(curve: &[RdPoint], bpp: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve
        .iter()
        .map(|p| (p.bits_per_pixel, p.psnr_db))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pts.windows(2) {
        let ((r0, p0), (r1, p1)) = (w[0], w[1]);
        if r0 <= bpp && bpp <= r1 {
            if r1 == r0 {
                return Some(p0.max(p1));
            }
            return Some(p0 + (p1 - p0) * (bpp - r0) / (r1 - r0));
        }
    }
    None
}

/// Whether `a` reaches at least the PSNR of `b` at every rate sampled
/// uniformly on the part of `[lo, hi]` both curves cover. `None` when they
/// share no rate in that range.
pub fn rd_dominates(
    a: &[RdPoint],
    b: &[RdPoint],
    lo: f64,
    hi: f64,
    samples: usize,
) -> Option<bool> {
    let range = |c: &[RdPoint]| {
        let rates = c.iter().map(|p| p.bits_per_pixel);
        (
            rates.clone().fold(f64::INFINITY, f64::min),
            rates.fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (alo, ahi) = range(a);
    let (blo, bhi) = range(b);
    let from = lo.max(alo).max(blo);
    let to = hi.min(ahi).min(bhi);
    if !(from <= to) {
        return None;
    }
    let samples = samples.max(2);
    Some((0..samples).all(|i| {
        let r = from + (to - from) * i as f64 / (samples - 1) as f64;
        match (psnr_at_rate(a, r), psnr_at_rate(b, r)) {
            (Some(pa), Some(pb)) => pa >= pb,
            _ => true,
        }
    }))
}

/// Decomposition followed by reconstruction: `psi phi^T Y`.
#[derive(Debug, Clone)]
pub struct Roundtrip {
    pub image: GrayImage,
    pub psnr: f64,
    /// `||out - in||_F / ||in||_F` over pixels.
    pub relative_error: f64,
}

pub fn reconstruct_roundtrip(
    img: &GrayImage,
    block: usize,
    psi: &Dictionary,
    phi: &Dictionary,
) -> Result<Roundtrip> {
    let blk = to_blocks(img, block, true)?;
    check_pair(&blk, psi, phi)?;
    let coeffs = phi.mat().transpose() * &blk.y;
    let out = from_blocks(&blk.with_blocks(psi.mat() * coeffs)?)?;
    let psnr = psnr(img, &out)?;
    let num: f64 = img
        .pixels()
        .iter()
        .zip(out.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = img.pixels().iter().map(|a| a * a).sum();
    let relative_error = if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    };
    Ok(Roundtrip {
        image: out,
        psnr,
        relative_error,
    })
}

/// One row of a denoising or inpainting table.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationRow {
    pub image: String,
    pub sigma_or_fraction: f64,
    pub dictionary: String,
    pub psnr: f64,
    pub ssim: f64,
    pub eps_used: f64,
}

pub const RESTORATION_CSV_HEADER: &str = "image,sigma_or_fraction,dictionary,psnr,ssim,eps_used";
pub const RD_CSV_HEADER: &str = "quant_step,bpp,psnr";

pub fn restoration_csv(rows: &[RestorationRow]) -> String {
    let mut out = format!("{RESTORATION_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{}\n",
            r.image, r.sigma_or_fraction, r.dictionary, r.psnr, r.ssim, r.eps_used
        ));
    }
    out
}

pub fn rd_csv(points: &[RdPoint]) -> String {
    let mut out = format!("{RD_CSV_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            p.quant_step, p.bits_per_pixel, p.psnr_db
        ));
    }
    out
}
