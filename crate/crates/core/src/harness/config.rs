//! Flat `key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::learner::{LearnerConfig, LearningRate, DIVERGENCE_CEILING};
use crate::{Error, Result};

pub const KEYS: &[&str] = &[
    "env",
    "n",
    "gamma",
    "lr_schedule",
    "lr",
    "lr_exponent",
    "total_steps",
    "seeds",
    "eval_episodes",
    "eval_interval",
    "buffer_fraction",
    "epsilon_start",
    "epsilon_end",
    "data_regime",
    "feature_grid",
    "feature_bounds",
    "feature_normalise",
    "divergence_ceiling",
    "init_weight",
    "mdp_file",
    "features_file",
    "out",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    W2w,
    Star,
    /// A tabular MDP read from `mdp_file`, optionally with `features_file`.
    Tabular,
    Cartpole,
    Mountaincar,
    Acrobot,
}

impl EnvKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "w2w" => EnvKind::W2w,
            "star" => EnvKind::Star,
            "tabular" => EnvKind::Tabular,
            "cartpole" => EnvKind::Cartpole,
            "mountaincar" => EnvKind::Mountaincar,
            "acrobot" => EnvKind::Acrobot,
            other => {
                return Err(Error::Config(format!(
                    "unknown env `{other}` (expected w2w, star, tabular, cartpole, mountaincar or acrobot)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::W2w => "w2w",
            EnvKind::Star => "star",
            EnvKind::Tabular => "tabular",
            EnvKind::Cartpole => "cartpole",
            EnvKind::Mountaincar => "mountaincar",
            EnvKind::Acrobot => "acrobot",
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, EnvKind::W2w | EnvKind::Star | EnvKind::Tabular)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataRegime {
    IidMu,
    EpsilonGreedyReplay,
}

impl DataRegime {
    pub fn name(self) -> &'static str {
        match self {
            DataRegime::IidMu => "iid_mu",
            DataRegime::EpsilonGreedyReplay => "epsilon_greedy_replay",
        }
    }
}

/// Unresolved key/value pairs, before defaults and validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

impl RawConfig {
    pub fn parse(source_name: &str, text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if raw.values.contains_key(key) {
                return Err(err(format!("key `{key}` given twice")));
            }
            raw.set(key, value.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut raw = Self::parse(&path.display().to_string(), &text)?;
        raw.base_dir = path.parent().map(Path::to_path_buf);
        Ok(raw)
    }

    /// Sets one key, rejecting keys the format does not know.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            match &self.base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        })
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let env = EnvKind::parse(
            self.get("env")
                .ok_or_else(|| Error::Config("missing required key `env`".into()))?,
        )?;
        let defaults = Defaults::for_env(env);

        let n = self.number("n")?.unwrap_or(1usize);
        let gamma = self.number("gamma")?.unwrap_or(defaults.gamma);
        let lr = self.number("lr")?.unwrap_or(defaults.lr);
        let learning_rate = match self.get("lr_schedule").unwrap_or("constant") {
            "constant" => LearningRate::Constant(lr),
            "robbins_monro" => LearningRate::RobbinsMonro {
                alpha0: lr,
                exponent: self.number("lr_exponent")?.unwrap_or(0.8),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown lr_schedule `{other}` (expected constant or robbins_monro)"
                )))
            }
        };
        let total_steps = self.number("total_steps")?.unwrap_or(defaults.total_steps);
        let data_regime = match self.get("data_regime") {
            None if env.is_tabular() => DataRegime::IidMu,
            None => DataRegime::EpsilonGreedyReplay,
            Some("iid_mu") => DataRegime::IidMu,
            Some("epsilon_greedy_replay") => DataRegime::EpsilonGreedyReplay,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown data_regime `{other}` (expected iid_mu or epsilon_greedy_replay)"
                )))
            }
        };
        let feature_grid = match self.get("feature_grid") {
            None => defaults.grid.clone(),
            Some(v) => parse_list(v, "feature_grid")?,
        };
        let feature_bounds = match self.get("feature_bounds") {
            None => None,
            Some(v) => Some(parse_bounds(v)?),
        };

        let config = ExperimentConfig {
            env,
            n,
            gamma,
            learning_rate,
            total_steps,
            seeds: self.number("seeds")?.unwrap_or(5),
            eval_episodes: self.number("eval_episodes")?.unwrap_or(30),
            eval_interval: self
                .number("eval_interval")?
                .unwrap_or(total_steps.div_ceil(100).max(1)),
            buffer_fraction: self.number("buffer_fraction")?.unwrap_or(0.2),
            epsilon_start: self.number("epsilon_start")?.unwrap_or(1.0),
            epsilon_end: self.number("epsilon_end")?.unwrap_or(0.05),
            data_regime,
            feature_grid,
            feature_bounds,
            feature_normalise: match self.get("feature_normalise").unwrap_or("false") {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Config(format!(
                        "`feature_normalise` must be true or false, got `{other}`"
                    )))
                }
            },
            divergence_ceiling: self.number("divergence_ceiling")?.unwrap_or(DIVERGENCE_CEILING),
            init_weight: self.number("init_weight")?.unwrap_or(defaults.init_weight),
            mdp_file: self.path("mdp_file"),
            features_file: self.path("features_file"),
            out: self.path("out"),
            seed_base: 0,
        };
        config.validate()?;
        Ok(config)
    }
}

struct Defaults {
    gamma: f64,
    lr: f64,
    total_steps: usize,
    grid: Vec<usize>,
    init_weight: f64,
}

impl Defaults {
    fn for_env(env: EnvKind) -> Self {
        let (gamma, lr, total_steps, grid, init_weight) = match env {
            EnvKind::W2w => (0.9, 1e-2, 20_000, vec![], 1.0),
            EnvKind::Star => (0.995, 1e-2, 100_000, vec![], 1.0),
            EnvKind::Tabular => (0.9, 1e-2, 100_000, vec![], 0.0),
            EnvKind::Cartpole => (0.99, 3e-2, 100_000, vec![2; 4], 0.0),
            EnvKind::Mountaincar => (0.99, 3e-3, 200_000, vec![16; 2], 0.0),
            EnvKind::Acrobot => (0.99, 3e-3, 200_000, vec![4; 6], 0.0),
        };
        Self {
            gamma,
            lr,
            total_steps,
            grid,
            init_weight,
        }
    }
}

fn parse_list(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}` entry `{v}` is not a count")))
        })
        .collect()
}

/// `lo:hi,lo:hi,...`.
fn parse_bounds(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|pair| {
            let bad = || Error::Config(format!("`feature_bounds` entry `{pair}` is not lo:hi"));
            let (lo, hi) = pair.trim().split_once(':').ok_or_else(bad)?;
            Ok((
                lo.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub n: usize,
    pub gamma: f64,
    pub learning_rate: LearningRate,
    pub total_steps: usize,
    pub seeds: usize,
    pub eval_episodes: usize,
    pub eval_interval: usize,
    pub buffer_fraction: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub data_regime: DataRegime,
    pub feature_grid: Vec<usize>,
    pub feature_bounds: Option<Vec<(f64, f64)>>,
    /// Whether ψ sums to one; raw bumps otherwise.
    pub feature_normalise: bool,
    pub divergence_ceiling: f64,
    /// Every coordinate of ω₀.
    pub init_weight: f64,
    pub mdp_file: Option<PathBuf>,
    pub features_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Added to every seed index; not a config key.
    pub seed_base: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("`{key}` must be positive")))
            } else {
                Ok(())
            }
        };
        positive("n", self.n)?;
        positive("total_steps", self.total_steps)?;
        positive("seeds", self.seeds)?;
        positive("eval_episodes", self.eval_episodes)?;
        positive("eval_interval", self.eval_interval)?;
        self.learner().validate()?;
        if !(self.buffer_fraction > 0.0 && self.buffer_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "`buffer_fraction` must lie in (0, 1], got {}",
                self.buffer_fraction
            )));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || self.epsilon_end > self.epsilon_start {
            return Err(Error::Config(format!(
                "epsilon must decay within [0, 1], got {} -> {}",
                self.epsilon_start, self.epsilon_end
            )));
        }
        if !self.init_weight.is_finite() {
            return Err(Error::Config("`init_weight` must be finite".into()));
        }
        if self.data_regime == DataRegime::IidMu && !self.env.is_tabular() {
            return Err(Error::Config(format!(
                "data_regime iid_mu needs a tabular environment with an explicit distribution, not {}",
                self.env.name()
            )));
        }
        if self.data_regime == DataRegime::EpsilonGreedyReplay && self.env.is_tabular() {
            return Err(Error::Config(format!(
                "{} runs in the iid_mu regime; epsilon_greedy_replay is for control environments",
                self.env.name()
            )));
        }
        if self.env == EnvKind::Tabular && self.mdp_file.is_none() {
            return Err(Error::Config("env tabular needs `mdp_file`".into()));
        }
        if !self.env.is_tabular() {
            if self.feature_grid.contains(&0) {
                return Err(Error::Config("`feature_grid` entries must be positive".into()));
            }
            if let Some(b) = &self.feature_bounds {
                if b.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
                    return Err(Error::Config(
                        "`feature_bounds` intervals must be finite with hi > lo".into(),
                    ));
                }
            }
        } else if self.mdp_file.is_none() && self.features_file.is_some() {
            return Err(Error::Config(
                "`features_file` needs env tabular with `mdp_file`".into(),
            ));
        }
        Ok(())
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            depth: self.n,
            discount: self.gamma,
            learning_rate: self.learning_rate,
            total_steps: self.total_steps,
            divergence_ceiling: self.divergence_ceiling,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_base + i).collect()
    }

    /// `⌊buffer_fraction · total_steps⌋`, at least one.
    pub fn buffer_capacity(&self) -> usize {
        ((self.buffer_fraction * self.total_steps as f64).floor() as usize).max(1)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "env = {}", self.env.name())?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        match self.learning_rate {
            LearningRate::Constant(a) => writeln!(f, "lr_schedule = constant\nlr = {a}")?,
            LearningRate::RobbinsMonro { alpha0, exponent } => writeln!(
                f,
                "lr_schedule = robbins_monro\nlr = {alpha0}\nlr_exponent = {exponent}"
            )?,
        }
        writeln!(f, "total_steps = {}", self.total_steps)?;
        writeln!(f, "seeds = {}", self.seeds)?;
        writeln!(f, "data_regime = {}", self.data_regime.name())
    }
}
