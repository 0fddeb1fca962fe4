use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::SvdConfig;
use crate::error::{ensure, Error, Result};
use crate::kge::{Hyperparams, KgeMethod};
use crate::ledger::CountingMode;
use crate::protocol::SyncSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Feds,
    Fedep,
    Fedepl,
    FedeKd,
    FedeSvd,
    FedeSvdplus,
    Single,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Feds,
        Strategy::Fedep,
        Strategy::Fedepl,
        Strategy::FedeKd,
        Strategy::FedeSvd,
        Strategy::FedeSvdplus,
        Strategy::Single,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Feds => "feds",
            Strategy::Fedep => "fedep",
            Strategy::Fedepl => "fedepl",
            Strategy::FedeKd => "fede_kd",
            Strategy::FedeSvd => "fede_svd",
            Strategy::FedeSvdplus => "fede_svdplus",
            Strategy::Single => "single",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Everything a run depends on. `dataset` is either a TSV file of triples,
/// partitioned on load, or a directory written by `write_federation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub num_clients: usize,
    pub partition_seed: u64,
    pub strategy: Strategy,
    pub kge_method: KgeMethod,
    pub dim: usize,
    pub p: f64,
    pub s: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub adv_temperature: f64,
    pub negatives: usize,
    pub eval_every: usize,
    pub single_eval_every: usize,
    pub patience: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub counting_mode: CountingMode,
    /// 0 picks three quarters of `dim`.
    pub kd_low_dim: usize,
    pub kd_weight: f64,
    pub svd_cols: usize,
    pub svd_rank: usize,
    pub svd_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let svd = SvdConfig::default();
        Self {
            dataset: PathBuf::new(),
            num_clients: 3,
            partition_seed: 0,
            strategy: Strategy::Feds,
            kge_method: KgeMethod::TransE,
            dim: 256,
            p: 0.4,
            s: 4,
            local_epochs: hp.local_epochs,
            batch_size: hp.batch_size,
            lr: hp.learning_rate,
            gamma: hp.gamma,
            epsilon: hp.epsilon,
            adv_temperature: hp.adv_temperature,
            negatives: hp.negatives,
            eval_every: 5,
            single_eval_every: 10,
            patience: 3,
            max_rounds: 400,
            seed: 0,
            counting_mode: CountingMode::WorstCase,
            kd_low_dim: 0,
            kd_weight: 1.0,
            svd_cols: svd.cols,
            svd_rank: svd.rank,
            svd_alpha: svd.alpha,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative dataset
    /// paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_owned(), lineno + 1) {
                return Err(Error::Config(format!("line {}: {key} already set on line {prev}", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        ensure!(!cfg.dataset.as_os_str().is_empty(), Config, "missing required key dataset");
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "num_clients" => self.num_clients = parse_value(key, value)?,
            "partition_seed" => self.partition_seed = parse_value(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "kge_method" => self.kge_method = value.parse()?,
            "dim" => self.dim = parse_value(key, value)?,
            "p" => self.p = parse_value(key, value)?,
            "s" => self.s = parse_value(key, value)?,
            "local_epochs" => self.local_epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "adv_temperature" => self.adv_temperature = parse_value(key, value)?,
            "negatives" => self.negatives = parse_value(key, value)?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "single_eval_every" => self.single_eval_every = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "max_rounds" => self.max_rounds = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "counting_mode" => self.counting_mode = value.parse()?,
            "kd_low_dim" => self.kd_low_dim = parse_value(key, value)?,
            "kd_weight" => self.kd_weight = parse_value(key, value)?,
            "svd_cols" => self.svd_cols = parse_value(key, value)?,
            "svd_rank" => self.svd_rank = parse_value(key, value)?,
            "svd_alpha" => self.svd_alpha = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        ensure!(self.num_clients >= 2, Config, "num_clients must be at least 2");
        ensure!(self.negatives >= 1, Config, "negatives must be at least 1");
        ensure!(self.dim >= 2, Config, "dim must be at least 2");
        ensure!(self.p > 0.0 && self.p <= 1.0, Config, "p must lie in (0, 1], got {}", self.p);
        SyncSchedule::new(self.s).map_err(|e| Error::Config(e.to_string()))?;
        ensure!(self.eval_every >= 1 && self.single_eval_every >= 1, Config, "evaluation cadence must be at least 1");
        ensure!(self.patience >= 1, Config, "patience must be at least 1");
        ensure!(self.max_rounds >= 1, Config, "max_rounds must be at least 1");
        match self.strategy {
            Strategy::Fedepl => ensure!(self.p < 1.0, Config, "fedepl needs p < 1"),
            Strategy::FedeKd => ensure!(
                self.low_dim() >= 1 && self.low_dim() < self.dim,
                Config,
                "kd_low_dim {} must lie in [1, dim)",
                self.low_dim()
            ),
            Strategy::FedeSvd | Strategy::FedeSvdplus => {
                let width = self.kge_method.entity_width(self.dim);
                ensure!(
                    self.svd_cols >= 1 && width % self.svd_cols == 0,
                    Config,
                    "entity width {width} is not divisible by svd_cols {}",
                    self.svd_cols
                );
                ensure!(
                    self.svd_rank >= 1 && self.svd_rank <= self.svd_cols && self.svd_cols <= width / self.svd_cols,
                    Config,
                    "need 1 <= svd_rank <= svd_cols <= rows of the reshaped update"
                );
                if self.strategy == Strategy::FedeSvdplus {
                    ensure!(self.local_epochs >= 2, Config, "fede_svdplus needs at least 2 local epochs");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            gamma: self.gamma,
            epsilon: self.epsilon,
            adv_temperature: self.adv_temperature,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
            negatives: self.negatives,
        }
    }

    pub fn schedule(&self) -> SyncSchedule {
        SyncSchedule { interval: self.s }
    }

    pub fn svd(&self) -> SvdConfig {
        SvdConfig {
            cols: self.svd_cols,
            rank: self.svd_rank,
            alpha: self.svd_alpha,
        }
    }

    pub fn low_dim(&self) -> usize {
        if self.kd_low_dim == 0 {
            self.dim * 3 / 4
        } else {
            self.kd_low_dim
        }
    }

    /// Ordered key/value view; also the `config.cfg` written with a run.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", self.dataset.display().to_string()),
            ("num_clients", self.num_clients.to_string()),
            ("partition_seed", self.partition_seed.to_string()),
            ("strategy", self.strategy.to_string()),
            ("kge_method", self.kge_method.to_string()),
            ("dim", self.dim.to_string()),
            ("p", self.p.to_string()),
            ("s", self.s.to_string()),
            ("local_epochs", self.local_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("gamma", self.gamma.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("adv_temperature", self.adv_temperature.to_string()),
            ("negatives", self.negatives.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("single_eval_every", self.single_eval_every.to_string()),
            ("patience", self.patience.to_string()),
            ("max_rounds", self.max_rounds.to_string()),
            ("seed", self.seed.to_string()),
            ("counting_mode", self.counting_mode.to_string()),
            ("kd_low_dim", self.kd_low_dim.to_string()),
            ("kd_weight", self.kd_weight.to_string()),
            ("svd_cols", self.svd_cols.to_string()),
            ("svd_rank", self.svd_rank.to_string()),
            ("svd_alpha", self.svd_alpha.to_string()),
        ]
    }

    pub fn to_cfg(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
