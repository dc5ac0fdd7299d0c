use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pksvd::applications::{
    add_gaussian_noise, compress_rd, denoise, denoise_best_eps, denoise_eps_grid, inpaint_image,
    random_mask, rd_csv, reconstruct_roundtrip, restoration_csv, RestorationRow,
};
use pksvd::frames::{canonical_dual, frame_bounds, overcomplete_dct, Dictionary};
use pksvd::imaging::{encode_pgm, from_blocks, psnr, read_pgm, ssim, stack_blocks, to_blocks};
use pksvd::io::{encode_matrix, read_dictionary, write_atomic, DICTIONARY_MAGIC};
use pksvd::ksvd::{init_from_columns, ksvd_train, KsvdConfig};
use pksvd::matrix::{frobenius_sq, Mat};
use pksvd::parseval::{pksvd_train, PkvConfig};
use pksvd::sparse::ZERO_THRESHOLD;
use pksvd::theory::{projection_residuals, run_suite, theory_csv, SuiteConfig};

use crate::config::{Init, Method, RunConfig};

/// Files produced by a command, written together once it has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    pub report: String,
}

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(&self) -> Result<()> {
        for (path, bytes) in &self.files {
            write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// `base` with its extension replaced by `suffix`.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    base.with_file_name(format!("{stem}{suffix}"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn image_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn load_dict(path: &Path) -> Result<Dictionary> {
    read_dictionary(path).with_context(|| format!("reading dictionary {}", path.display()))
}

fn load_image(path: &Path) -> Result<pksvd::imaging::GrayImage> {
    read_pgm(path).with_context(|| format!("reading image {}", path.display()))
}

fn support_histogram(codes: &Mat) -> Vec<usize> {
    let mut hist = vec![0; codes.nrows() + 1];
    for col in codes.column_iter() {
        hist[col.iter().filter(|v| v.abs() > ZERO_THRESHOLD).count()] += 1;
    }
    hist
}

fn describe_bounds(out: &mut String, label: &str, d: &Dictionary) -> Result<()> {
    let b = frame_bounds(d)?;
    writeln!(
        out,
        "{label}: {}x{} frame bounds A={:e} B={:e} B/A={:e}",
        d.n(),
        d.m(),
        b.lower,
        b.upper,
        b.ratio()
    )?;
    Ok(())
}

pub fn train(cfg: &RunConfig, images: &[PathBuf]) -> Result<Outputs> {
    if images.is_empty() {
        bail!("train needs at least one input image");
    }
    let out_path = cfg.require_out()?.clone();
    let imgs = images
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let y = stack_blocks(&imgs, cfg.block_size)?;
    let init = match cfg.init {
        Init::Data => init_from_columns(&y, cfg.m, cfg.seed)?,
        Init::Dct => overcomplete_dct(cfg.n(), cfg.m)?,
    };
    let kcfg = KsvdConfig {
        atoms: cfg.m,
        sparsity: cfg.k,
        iters: cfg.ksvd_iters,
        seed: cfg.seed,
    };
    let ksvd = ksvd_train(&y, &kcfg, &init)?;

    let mut out = Outputs::default();
    let trace_path = cfg
        .trace
        .clone()
        .unwrap_or_else(|| sibling(&out_path, ".trace.csv"));
    let mut summary = String::new();
    writeln!(summary, "training blocks: {}", y.ncols())?;
    let codes = match cfg.method {
        Method::Ksvd => {
            let mut csv = String::from("iter,objective\n");
            for (i, v) in ksvd.objective.iter().enumerate() {
                writeln!(csv, "{i},{v:e}")?;
            }
            describe_bounds(&mut summary, "ksvd psi", &ksvd.dictionary)?;
            out.add(
                &out_path,
                encode_matrix(DICTIONARY_MAGIC, ksvd.dictionary.mat()),
            );
            out.add(&trace_path, csv.into_bytes());
            ksvd.codes
        }
        Method::Parseval => {
            let pcfg = PkvConfig {
                rho1: cfg.rho1,
                rho2: cfg.rho2,
                rho3: cfg.rho3,
                max_iters: cfg.max_iters,
                x_sweeps: cfg.x_sweeps,
                sparsity: cfg.k,
                method: cfg.sylvester,
            };
            let trained = pksvd_train(&y, &pcfg, &ksvd.dictionary, &ksvd.codes)
                .map_err(pksvd::Error::from)?;
            let dual_path = cfg
                .dual
                .clone()
                .unwrap_or_else(|| sibling(&out_path, ".dual.pk"));
            describe_bounds(&mut summary, "parseval psi", &trained.psi)?;
            if let Some(last) = trained.trace.last() {
                writeln!(
                    summary,
                    "log10 ||psi phi^T - I||_F^2 = {:e}\nlog10 ||psi - phi||_F^2 = {:e}",
                    last.log10_psiphit_minus_i, last.log10_psi_minus_phi
                )?;
            }
            out.add(
                &out_path,
                encode_matrix(DICTIONARY_MAGIC, trained.psi.mat()),
            );
            out.add(
                &dual_path,
                encode_matrix(DICTIONARY_MAGIC, trained.phi.mat()),
            );
            out.add(&trace_path, trained.trace.to_csv().into_bytes());
            trained.codes
        }
    };
    writeln!(summary, "support histogram (nonzeros: columns)")?;
    for (k, c) in support_histogram(&codes).iter().enumerate() {
        if *c > 0 {
            writeln!(summary, "  {k}: {c}")?;
        }
    }
    out.add(
        sibling(&out_path, ".summary.txt"),
        summary.clone().into_bytes(),
    );
    out.report = summary;
    Ok(out)
}

pub fn verify(cfg: &RunConfig, dict: &Path, dual: Option<&Path>) -> Result<Outputs> {
    let psi = load_dict(dict)?;
    let mut report = String::new();
    describe_bounds(&mut report, "psi", &psi)?;
    let n = psi.n();
    let parseval = (psi.frame_operator() - Mat::identity(n, n)).norm();
    writeln!(report, "||psi psi^T - I||_F = {parseval:e}")?;
    let canonical = projection_residuals(&psi, &canonical_dual(&psi)?)?;
    writeln!(
        report,
        "canonical kernel: idempotence {:e} symmetry {:e} rank defect {}",
        canonical.idempotence, canonical.symmetry, canonical.rank_defect
    )?;
    if let Some(path) = dual {
        let phi = load_dict(path)?;
        if phi.mat().shape() != psi.mat().shape() {
            bail!(
                "dual shape {:?} does not match dictionary shape {:?}",
                phi.mat().shape(),
                psi.mat().shape()
            );
        }
        let prod = psi.mat() * phi.mat().transpose();
        writeln!(
            report,
            "||psi phi^T - I||_F^2 = {:e}",
            frobenius_sq(&(prod - Mat::identity(n, n)))
        )?;
        writeln!(
            report,
            "||psi - phi||_F^2 = {:e}",
            frobenius_sq(&(psi.mat() - phi.mat()))
        )?;
        let pair = projection_residuals(&psi, &phi)?;
        writeln!(
            report,
            "pair kernel: idempotence {:e} symmetry {:e} rank defect {}",
            pair.idempotence, pair.symmetry, pair.rank_defect
        )?;
    }
    let mut out = Outputs::default();
    if let Some(path) = &cfg.out {
        out.add(path, report.clone().into_bytes());
    }
    out.report = report;
    Ok(out)
}

fn pair(cfg: &RunConfig) -> Result<(Dictionary, Dictionary)> {
    let psi = load_dict(cfg.require_dict()?)?;
    let phi = match &cfg.dual {
        Some(p) => load_dict(p)?,
        None => canonical_dual(&psi)?,
    };
    Ok((psi, phi))
}

pub fn reconstruct(cfg: &RunConfig, image: &Path) -> Result<Outputs> {
    let img = load_image(image)?;
    let (psi, phi) = pair(cfg)?;
    let rt = reconstruct_roundtrip(&img, cfg.block_size, &psi, &phi)?;
    let mut out = Outputs::default();
    out.add(cfg.require_out()?, encode_pgm(&rt.image));
    out.report = format!(
        "psnr {:.6} dB, relative error {:e}\n",
        rt.psnr, rt.relative_error
    );
    Ok(out)
}

fn dictionary_label(cfg: &RunConfig) -> Result<String> {
    Ok(match &cfg.label {
        Some(l) => l.clone(),
        None => image_label(cfg.require_dict()?),
    })
}

pub fn denoise_cmd(cfg: &RunConfig, image: &Path) -> Result<Outputs> {
    let clean = load_image(image)?;
    let (psi, phi) = pair(cfg)?;
    let prefix = cfg.require_out_prefix()?;
    let noisy = add_gaussian_noise(&clean, cfg.sigma, cfg.seed)?;
    let (restored, eps) = match cfg.eps {
        Some(eps) => {
            let blk = to_blocks(&noisy, cfg.block_size, true)?;
            (from_blocks(&denoise(&blk, &psi, &phi, eps)?)?, eps)
        }
        None => {
            let best = denoise_best_eps(
                &clean,
                &noisy,
                cfg.block_size,
                &psi,
                &phi,
                &denoise_eps_grid(),
            )?;
            (best.image, best.eps)
        }
    };
    let row = RestorationRow {
        image: image_label(image),
        sigma_or_fraction: cfg.sigma,
        dictionary: dictionary_label(cfg)?,
        psnr: psnr(&clean, &restored)?,
        ssim: ssim(&clean, &restored)?,
        eps_used: eps,
    };
    let mut out = Outputs::default();
    out.add(with_suffix(prefix, ".noisy.pgm"), encode_pgm(&noisy));
    out.add(with_suffix(prefix, ".denoised.pgm"), encode_pgm(&restored));
    let csv = restoration_csv(std::slice::from_ref(&row));
    out.add(with_suffix(prefix, ".csv"), csv.clone().into_bytes());
    out.report = csv;
    Ok(out)
}

pub fn inpaint_cmd(cfg: &RunConfig, image: &Path) -> Result<Outputs> {
    let clean = load_image(image)?;
    let psi = load_dict(cfg.require_dict()?)?;
    let prefix = cfg.require_out_prefix()?;
    let mask = random_mask(
        clean.width(),
        clean.height(),
        cfg.block_size,
        cfg.fraction,
        cfg.seed,
    )?;
    let observed = mask.apply(&clean)?;
    let (restored, p, s) = inpaint_image(&clean, &observed, &mask, &psi, cfg.inpaint_eps)?;
    let row = RestorationRow {
        image: image_label(image),
        sigma_or_fraction: cfg.fraction,
        dictionary: dictionary_label(cfg)?,
        psnr: p,
        ssim: s,
        eps_used: cfg.inpaint_eps,
    };
    let mut out = Outputs::default();
    out.add(with_suffix(prefix, ".masked.pgm"), encode_pgm(&observed));
    out.add(with_suffix(prefix, ".inpainted.pgm"), encode_pgm(&restored));
    let csv = restoration_csv(std::slice::from_ref(&row));
    out.add(with_suffix(prefix, ".csv"), csv.clone().into_bytes());
    out.report = csv;
    Ok(out)
}

pub fn compress_cmd(cfg: &RunConfig, image: &Path) -> Result<Outputs> {
    let img = load_image(image)?;
    let (psi, phi) = pair(cfg)?;
    let prefix = cfg.require_out_prefix()?;
    let blk = to_blocks(&img, cfg.block_size, true)?;
    let points = compress_rd(&blk, &psi, &phi, &cfg.steps)?;
    let csv = rd_csv(&points);
    let mut out = Outputs::default();
    out.add(with_suffix(prefix, ".rd.csv"), csv.clone().into_bytes());
    out.report = csv;
    Ok(out)
}

pub fn theory_cmd(cfg: &RunConfig) -> Result<Outputs> {
    let report = run_suite(&SuiteConfig::default(), cfg.seed)?;
    let mut out = Outputs::default();
    out.add(cfg.require_out()?, theory_csv(&report.records).into_bytes());
    out.report = report.summary();
    Ok(out)
}
