mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{check_key, parse_pairs, RunConfig};

/// Parseval K-SVD dictionary training and image recovery experiments.
#[derive(Debug, Parser)]
#[command(name = "pksvd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a dictionary (and its dual) from the blocks of PGM images.
    Train {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Report frame bounds and constraint residuals of dictionary files.
    Verify {
        #[arg(id = "dict_file", value_name = "DICT")]
        dict: Option<PathBuf>,
        #[arg(id = "dual_file", value_name = "DUAL")]
        dual: Option<PathBuf>,
    },
    /// Decompose an image with the analysis operator and resynthesise it.
    Reconstruct { image: PathBuf },
    /// Add seeded Gaussian noise to an image and denoise it block-wise.
    Denoise { image: PathBuf },
    /// Remove a seeded random fraction of pixels per block and restore them.
    Inpaint { image: PathBuf },
    /// Rate-distortion points of bit-plane coded frame coefficients.
    Compress { image: PathBuf },
    /// Run the frame-theory checks and write their CSV report.
    Theory,
}

/// Config keys as flags; each overrides the value from `--config`.
#[derive(Debug, Args)]
struct ConfigFlags {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, alias = "block_size")]
    block_size: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    rho1: Option<String>,
    #[arg(long, global = true)]
    rho2: Option<String>,
    #[arg(long, global = true)]
    rho3: Option<String>,
    #[arg(long, global = true, alias = "max_iters")]
    max_iters: Option<String>,
    #[arg(long, global = true, alias = "x_sweeps")]
    x_sweeps: Option<String>,
    #[arg(long, global = true, alias = "ksvd_iters")]
    ksvd_iters: Option<String>,
    /// schur or kron.
    #[arg(long, global = true)]
    sylvester: Option<String>,
    /// Initial dictionary: data or dct.
    #[arg(long, global = true)]
    init: Option<String>,
    /// ksvd or parseval.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Denoising radius, or `auto` to scan 2, 4, ..., 24.
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    fraction: Option<String>,
    #[arg(long, global = true, alias = "inpaint_eps")]
    inpaint_eps: Option<String>,
    /// Comma-separated quantizer steps.
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    label: Option<String>,
    #[arg(long, global = true)]
    dict: Option<String>,
    #[arg(long, global = true)]
    dual: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    trace: Option<String>,
    #[arg(long, global = true, alias = "out_prefix")]
    out_prefix: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
            check_key(k.trim())?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let named = [
            ("block_size", &self.block_size),
            ("n", &self.n),
            ("m", &self.m),
            ("k", &self.k),
            ("rho1", &self.rho1),
            ("rho2", &self.rho2),
            ("rho3", &self.rho3),
            ("max_iters", &self.max_iters),
            ("x_sweeps", &self.x_sweeps),
            ("ksvd_iters", &self.ksvd_iters),
            ("sylvester", &self.sylvester),
            ("init", &self.init),
            ("method", &self.method),
            ("seed", &self.seed),
            ("sigma", &self.sigma),
            ("eps", &self.eps),
            ("fraction", &self.fraction),
            ("inpaint_eps", &self.inpaint_eps),
            ("steps", &self.steps),
            ("label", &self.label),
            ("dict", &self.dict),
            ("dual", &self.dual),
            ("out", &self.out),
            ("trace", &self.trace),
            ("out_prefix", &self.out_prefix),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        Ok(map)
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_pairs(&text).with_context(|| format!("in config {}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    let flags = cli.flags.pairs()?;
    let mut cfg = RunConfig::from_pairs([&file, &flags])?;

    let outputs = match &cli.command {
        Command::Train { images } => commands::train(&cfg, images)?,
        Command::Verify { dict, dual } => {
            if let Some(d) = dict {
                cfg.dict = Some(d.clone());
            }
            if let Some(d) = dual {
                cfg.dual = Some(d.clone());
            }
            let dict = cfg.require_dict()?.clone();
            commands::verify(&cfg, &dict, cfg.dual.as_deref())?
        }
        Command::Reconstruct { image } => commands::reconstruct(&cfg, image)?,
        Command::Denoise { image } => commands::denoise_cmd(&cfg, image)?,
        Command::Inpaint { image } => commands::inpaint_cmd(&cfg, image)?,
        Command::Compress { image } => commands::compress_cmd(&cfg, image)?,
        Command::Theory => commands::theory_cmd(&cfg)?,
    };
    outputs.commit()?;
    print!("{}", outputs.report);
    for p in outputs.paths() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
