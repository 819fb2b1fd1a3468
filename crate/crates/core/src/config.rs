//! Flat `key = value` configuration. Lines starting with `#` are comments;
//! unknown keys and unparsable values are errors naming the key. The
//! `PARTGEN_DATA_DIR` environment variable overrides `data_dir`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::Category;

pub const DATA_DIR_ENV: &str = "PARTGEN_DATA_DIR";

/// Size and training budget of one stage's transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub scene_dir: PathBuf,
    pub seed: u64,
    pub grid: usize,
    pub patch: usize,
    pub token_budget: usize,
    pub kmax: usize,
    pub steps: usize,
    pub cfg_scale: f64,
    pub nms_iou: f64,
    pub validity_iou: f64,
    pub corpus_size: usize,
    pub categories: Vec<Category>,
    pub codec_steps: usize,
    pub layout: StageConfig,
    pub coarse: StageConfig,
    pub refine: StageConfig,
    /// Probability of perturbing part boxes in a stage-2 training example.
    pub augment_prob: f64,
    pub eval_points: usize,
    pub eval_tau: f64,
    pub server_addr: String,
    /// Sampling jobs allowed to run at once.
    pub server_workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            scene_dir: "scenes".into(),
            seed: 0,
            grid: 64,
            patch: 4,
            token_budget: 64,
            kmax: 30,
            steps: 50,
            cfg_scale: 3.5,
            nms_iou: 0.7,
            validity_iou: 0.85,
            corpus_size: 100,
            categories: Category::ALL.to_vec(),
            codec_steps: 3000,
            layout: StageConfig {
                depth: 4,
                width: 64,
                heads: 4,
                train_steps: 2000,
                batch: 1,
                lr: 1e-3,
                warmup: 100,
            },
            coarse: StageConfig {
                depth: 8,
                width: 128,
                heads: 4,
                train_steps: 2000,
                batch: 1,
                lr: 1e-3,
                warmup: 100,
            },
            refine: StageConfig {
                depth: 8,
                width: 128,
                heads: 4,
                train_steps: 2000,
                batch: 1,
                lr: 1e-3,
                warmup: 100,
            },
            augment_prob: 0.5,
            eval_points: 4096,
            eval_tau: 0.1,
            server_addr: "127.0.0.1:8080".into(),
            server_workers: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

impl StageConfig {
    fn set(&mut self, key: &str, field: &str, value: &str) -> Result<bool> {
        match field {
            "depth" => self.depth = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "train_steps" => self.train_steps = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Config {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let known = match key {
            "data_dir" => {
                self.data_dir = value.into();
                true
            }
            "checkpoint_dir" => {
                self.checkpoint_dir = value.into();
                true
            }
            "scene_dir" => {
                self.scene_dir = value.into();
                true
            }
            "seed" => {
                self.seed = parse(key, value)?;
                true
            }
            "grid" => {
                self.grid = parse(key, value)?;
                true
            }
            "patch" => {
                self.patch = parse(key, value)?;
                true
            }
            "token_budget" => {
                self.token_budget = parse(key, value)?;
                true
            }
            "kmax" => {
                self.kmax = parse(key, value)?;
                true
            }
            "steps" => {
                self.steps = parse(key, value)?;
                true
            }
            "cfg_scale" => {
                self.cfg_scale = parse(key, value)?;
                true
            }
            "nms_iou" => {
                self.nms_iou = parse(key, value)?;
                true
            }
            "validity_iou" => {
                self.validity_iou = parse(key, value)?;
                true
            }
            "corpus.size" => {
                self.corpus_size = parse(key, value)?;
                true
            }
            "corpus.categories" => {
                self.categories = value
                    .split(',')
                    .map(|c| parse::<Category>(key, c.trim()))
                    .collect::<Result<_>>()?;
                true
            }
            "codec.steps" => {
                self.codec_steps = parse(key, value)?;
                true
            }
            "augment_prob" => {
                self.augment_prob = parse(key, value)?;
                true
            }
            "eval.points" => {
                self.eval_points = parse(key, value)?;
                true
            }
            "eval.tau" => {
                self.eval_tau = parse(key, value)?;
                true
            }
            "server.addr" => {
                self.server_addr = value.to_string();
                true
            }
            "server.workers" => {
                self.server_workers = parse(key, value)?;
                true
            }
            _ => match key.split_once('.') {
                Some(("layout", f)) => self.layout.set(key, f, value)?,
                Some(("coarse", f)) => self.coarse.set(key, f, value)?,
                Some(("refine", f)) => self.refine.set(key, f, value)?,
                _ => false,
            },
        };
        if !known {
            return Err(Error::Config {
                key: key.to_string(),
                message: "unknown key".into(),
            });
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", no + 1),
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file and applies the environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Config::parse(&text)?;
        c.apply_env();
        Ok(c)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            self.data_dir = dir.into();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if !self.grid.is_power_of_two() {
            return bad("grid", "must be a power of two");
        }
        if self.patch == 0 || self.grid % self.patch != 0 {
            return bad("patch", "must divide grid");
        }
        if self.kmax == 0 {
            return bad("kmax", "must be positive");
        }
        if self.steps == 0 {
            return bad("steps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return bad("nms_iou", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.augment_prob) {
            return bad("augment_prob", "must lie in [0, 1]");
        }
        if self.categories.is_empty() {
            return bad("corpus.categories", "needs at least one category");
        }
        for (name, s) in [("layout", &self.layout), ("coarse", &self.coarse), ("refine", &self.refine)] {
            if s.depth == 0 || s.depth % 2 != 0 {
                return bad(&format!("{name}.depth"), "must be a positive even number");
            }
            if s.heads == 0 || s.width % s.heads != 0 {
                return bad(&format!("{name}.heads"), "must divide the width");
            }
            if s.batch == 0 {
                return bad(&format!("{name}.batch"), "must be positive");
            }
        }
        Ok(())
    }

    /// The canonical `key = value` rendering, also used for report hashes.
    pub fn to_text(&self) -> String {
        let cats: Vec<&str> = self.categories.iter().map(|c| c.name()).collect();
        let mut out = format!(
            "data_dir = {}\ncheckpoint_dir = {}\nscene_dir = {}\nseed = {}\ngrid = {}\npatch = {}\n\
             token_budget = {}\nkmax = {}\nsteps = {}\ncfg_scale = {}\nnms_iou = {}\nvalidity_iou = {}\n\
             corpus.size = {}\ncorpus.categories = {}\ncodec.steps = {}\naugment_prob = {}\n",
            self.data_dir.display(),
            self.checkpoint_dir.display(),
            self.scene_dir.display(),
            self.seed,
            self.grid,
            self.patch,
            self.token_budget,
            self.kmax,
            self.steps,
            self.cfg_scale,
            self.nms_iou,
            self.validity_iou,
            self.corpus_size,
            cats.join(","),
            self.codec_steps,
            self.augment_prob,
        );
        for (name, s) in [("layout", &self.layout), ("coarse", &self.coarse), ("refine", &self.refine)] {
            out += &format!(
                "{name}.depth = {}\n{name}.width = {}\n{name}.heads = {}\n{name}.train_steps = {}\n\
                 {name}.batch = {}\n{name}.lr = {}\n{name}.warmup = {}\n",
                s.depth, s.width, s.heads, s.train_steps, s.batch, s.lr, s.warmup
            );
        }
        out += &format!(
            "eval.points = {}\neval.tau = {}\nserver.addr = {}\nserver.workers = {}\n",
            self.eval_points, self.eval_tau, self.server_addr, self.server_workers
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_round_trips() {
        let mut c = Config::default();
        c.grid = 16;
        c.coarse.lr = 2.5e-4;
        c.categories = vec![Category::Lamp, Category::Table];
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let e = Config::parse("grid = 16\ncoarse.depth = x\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "coarse.depth"), "{e}");
        let e = Config::parse("colour = red").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "colour"));
        let e = Config::parse("grid = 16\npatch = 3").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "patch"));
    }
}
