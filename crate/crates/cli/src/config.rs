//! Flat `key = value` run configuration. Flags override file values.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pksvd::applications::default_quant_steps;
use pksvd::matrix::SylvesterMethod;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

pub const KEYS: &[&str] = &[
    "block_size",
    "n",
    "m",
    "k",
    "rho1",
    "rho2",
    "rho3",
    "max_iters",
    "x_sweeps",
    "ksvd_iters",
    "sylvester",
    "init",
    "method",
    "seed",
    "sigma",
    "eps",
    "fraction",
    "inpaint_eps",
    "steps",
    "label",
    "dict",
    "dual",
    "out",
    "trace",
    "out_prefix",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ksvd,
    Parseval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Data,
    Dct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub block_size: usize,
    pub m: usize,
    pub k: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub max_iters: usize,
    pub x_sweeps: usize,
    pub ksvd_iters: usize,
    pub sylvester: SylvesterMethod,
    pub init: Init,
    pub method: Method,
    pub seed: u64,
    pub sigma: f64,
    /// Denoising radius; `None` scans the candidate grid.
    pub eps: Option<f64>,
    pub fraction: f64,
    pub inpaint_eps: f64,
    pub steps: Vec<f64>,
    pub label: Option<String>,
    pub dict: Option<PathBuf>,
    pub dual: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub out_prefix: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            m: 32,
            k: 16,
            rho1: 0.1,
            rho2: 1e11,
            rho3: 1e11,
            max_iters: 50,
            x_sweeps: 20,
            ksvd_iters: 20,
            sylvester: SylvesterMethod::Schur,
            init: Init::Data,
            method: Method::Parseval,
            seed: 0,
            sigma: 20.0,
            eps: None,
            fraction: 0.5,
            inpaint_eps: 0.01,
            steps: default_quant_steps(),
            label: None,
            dict: None,
            dual: None,
            out: None,
            trace: None,
            out_prefix: None,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        check_key(key)?;
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn check_key(key: &str) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey(key.to_string()))
    }
}

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, value, "must be positive"))
    }
}

fn count(key: &str, value: &str) -> Result<usize, ConfigError> {
    let v: usize = parse(key, value)?;
    if v == 0 {
        return Err(bad(key, value, "must be at least 1"));
    }
    Ok(v)
}

impl RunConfig {
    /// Applies `pairs` in order over the defaults, then checks consistency.
    pub fn from_pairs<'a>(
        layers: impl IntoIterator<Item = &'a BTreeMap<String, String>>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut n = None;
        for pairs in layers {
            for (key, value) in pairs {
                let (key, value) = (key.as_str(), value.as_str());
                match key {
                    "block_size" => cfg.block_size = count(key, value)?,
                    "n" => n = Some(count(key, value)?),
                    "m" => cfg.m = count(key, value)?,
                    "k" => cfg.k = count(key, value)?,
                    "rho1" => cfg.rho1 = positive(key, value)?,
                    "rho2" => cfg.rho2 = positive(key, value)?,
                    "rho3" => cfg.rho3 = positive(key, value)?,
                    "max_iters" => cfg.max_iters = count(key, value)?,
                    "x_sweeps" => cfg.x_sweeps = count(key, value)?,
                    "ksvd_iters" => cfg.ksvd_iters = parse(key, value)?,
                    "sylvester" => {
                        cfg.sylvester = match value {
                            "schur" => SylvesterMethod::Schur,
                            "kron" => SylvesterMethod::Kron,
                            _ => return Err(bad(key, value, "expected schur or kron")),
                        }
                    }
                    "init" => {
                        cfg.init = match value {
                            "data" => Init::Data,
                            "dct" => Init::Dct,
                            _ => return Err(bad(key, value, "expected data or dct")),
                        }
                    }
                    "method" => {
                        cfg.method = match value {
                            "ksvd" => Method::Ksvd,
                            "parseval" => Method::Parseval,
                            _ => return Err(bad(key, value, "expected ksvd or parseval")),
                        }
                    }
                    "seed" => cfg.seed = parse(key, value)?,
                    "sigma" => {
                        let v: f64 = parse(key, value)?;
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(bad(key, value, "must be >= 0"));
                        }
                        cfg.sigma = v;
                    }
                    "eps" => {
                        cfg.eps = if value == "auto" {
                            None
                        } else {
                            Some(positive(key, value)?)
                        }
                    }
                    "fraction" => {
                        let v: f64 = parse(key, value)?;
                        if !(0.0..=0.99).contains(&v) {
                            return Err(bad(key, value, "must lie in [0, 0.99]"));
                        }
                        cfg.fraction = v;
                    }
                    "inpaint_eps" => {
                        let v: f64 = parse(key, value)?;
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(bad(key, value, "must be >= 0"));
                        }
                        cfg.inpaint_eps = v;
                    }
                    "steps" => {
                        cfg.steps = value
                            .split(',')
                            .map(|s| positive(key, s.trim()))
                            .collect::<Result<_, _>>()?;
                    }
                    "label" => cfg.label = Some(value.to_string()),
                    "dict" => cfg.dict = Some(value.into()),
                    "dual" => cfg.dual = Some(value.into()),
                    "out" => cfg.out = Some(value.into()),
                    "trace" => cfg.trace = Some(value.into()),
                    "out_prefix" => cfg.out_prefix = Some(value.into()),
                    other => return Err(ConfigError::UnknownKey(other.to_string())),
                }
            }
        }
        let n_blocks = cfg.block_size * cfg.block_size;
        if let Some(n) = n {
            if n != n_blocks {
                return Err(bad(
                    "n",
                    &n.to_string(),
                    format!("block_size {} implies n = {n_blocks}", cfg.block_size),
                ));
            }
        }
        if cfg.m < n_blocks {
            return Err(bad(
                "m",
                &cfg.m.to_string(),
                format!("must be >= n = {n_blocks}"),
            ));
        }
        if cfg.k > n_blocks {
            return Err(bad(
                "k",
                &cfg.k.to_string(),
                format!("must be <= n = {n_blocks}"),
            ));
        }
        Ok(cfg)
    }

    pub fn n(&self) -> usize {
        self.block_size * self.block_size
    }

    pub fn require_out(&self) -> Result<&PathBuf, ConfigError> {
        self.out.as_ref().ok_or(ConfigError::Missing("out"))
    }

    pub fn require_dict(&self) -> Result<&PathBuf, ConfigError> {
        self.dict.as_ref().ok_or(ConfigError::Missing("dict"))
    }

    pub fn require_out_prefix(&self) -> Result<&PathBuf, ConfigError> {
        self.out_prefix
            .as_ref()
            .ok_or(ConfigError::Missing("out_prefix"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> BTreeMap<String, String> {
        parse_pairs(text).unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let file = pairs("# desk run\nrho2 = 1e9\nseed=3\nsteps = 1, 2,4\n");
        let flags = pairs("seed = 7");
        let cfg = RunConfig::from_pairs([&file, &flags]).unwrap();
        assert_eq!(cfg.rho2, 1e9);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.steps, vec![1.0, 2.0, 4.0]);
        assert_eq!(cfg.block_size, 4);
        assert_eq!(cfg.n(), 16);
    }

    #[test]
    fn unknown_keys_and_syntax_rejected() {
        assert_eq!(
            parse_pairs("rho4 = 1"),
            Err(ConfigError::UnknownKey("rho4".into()))
        );
        assert_eq!(parse_pairs("seed 3"), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!(parse_pairs(" = 3"), Err(ConfigError::Syntax { line: 1 }));
    }

    #[test]
    fn values_validated() {
        for text in [
            "rho1 = -1",
            "block_size = 0",
            "fraction = 1.0",
            "method = pca",
            "n = 64",
            "m = 8",
            "k = 17",
            "steps = 1,0",
            "seed = x",
        ] {
            assert!(
                RunConfig::from_pairs([&pairs(text)]).is_err(),
                "{text} accepted"
            );
        }
        let cfg =
            RunConfig::from_pairs([&pairs("block_size = 8\nn = 64\nm = 256\nk = 64")]).unwrap();
        assert_eq!(cfg.n(), 64);
        assert_eq!(
            RunConfig::from_pairs([&pairs("eps = auto")]).unwrap().eps,
            None
        );
    }

    #[test]
    fn missing_paths_reported() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.require_out(), Err(ConfigError::Missing("out")));
        assert_eq!(cfg.require_dict(), Err(ConfigError::Missing("dict")));
    }
}
