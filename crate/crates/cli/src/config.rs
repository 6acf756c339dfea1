//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Unknown keys are
//! rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use sentrade_core::agent::AgentConfig;
use sentrade_core::env::{DEFAULT_INITIAL_CASH, DEFAULT_INITIAL_SHARES};
use sentrade_core::eval::MIN_RANDOM_SEEDS;
use sentrade_core::relevance::DEFAULT_MAX_DISTANCE;
use sentrade_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub symbol: String,
    pub headlines: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    /// Bundled lexicon / stopwords when unset.
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub sentiment_cache: Option<PathBuf>,
    pub org_node: String,
    pub max_distance: usize,
    pub use_sentiment: bool,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub initial_cash: f64,
    pub initial_shares: u32,
    pub agent: AgentConfig,
    /// Policy name -> checkpoint path. `checkpoint` maps to the empty name,
    /// which is replaced by a name derived from the checkpoint itself.
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub risk_free: f64,
    pub random_seeds: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn defaults(base: &Path) -> Self {
        Self {
            prices: None,
            symbol: "MSFT".into(),
            headlines: None,
            graph: None,
            lexicon: None,
            stopwords: None,
            sentiment_cache: None,
            org_node: "msft".into(),
            max_distance: DEFAULT_MAX_DISTANCE,
            use_sentiment: true,
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            initial_cash: DEFAULT_INITIAL_CASH,
            initial_shares: DEFAULT_INITIAL_SHARES,
            agent: AgentConfig::default(),
            checkpoints: BTreeMap::new(),
            risk_free: 0.0,
            random_seeds: MIN_RANDOM_SEEDS,
            out_dir: base.join("out"),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn parse(text: &str, source_name: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::defaults(base);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i as u64 + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, base).map_err(err)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let path = || base.join(value);
        let a = &mut self.agent;
        match key {
            "prices" => self.prices = Some(path()),
            "symbol" => self.symbol = value.to_string(),
            "headlines" => self.headlines = Some(path()),
            "graph" => self.graph = Some(path()),
            "lexicon" => self.lexicon = Some(path()),
            "stopwords" => self.stopwords = Some(path()),
            "sentiment_cache" => self.sentiment_cache = Some(path()),
            "org_node" => self.org_node = value.to_string(),
            "max_distance" => self.max_distance = parse(key, value)?,
            "use_sentiment" => self.use_sentiment = parse(key, value)?,
            "train_start" => self.train_start = Some(parse(key, value)?),
            "train_end" => self.train_end = Some(parse(key, value)?),
            "test_start" => self.test_start = Some(parse(key, value)?),
            "test_end" => self.test_end = Some(parse(key, value)?),
            "initial_cash" => self.initial_cash = parse(key, value)?,
            "initial_shares" => self.initial_shares = parse(key, value)?,
            "seed" => a.seed = parse(key, value)?,
            "epochs" => a.epochs = parse(key, value)?,
            "gamma" => a.gamma = parse(key, value)?,
            "epsilon" => a.epsilon = parse(key, value)?,
            "epsilon_warmdown" => a.epsilon_warmdown = parse(key, value)?,
            "batch_size" => a.batch_size = parse(key, value)?,
            "target_sync_interval" => a.target_sync_interval = parse(key, value)?,
            "buffer_capacity" => a.buffer_capacity = parse(key, value)?,
            "learning_rate" => a.adam.learning_rate = parse(key, value)?,
            "adam_beta1" => a.adam.beta1 = parse(key, value)?,
            "adam_beta2" => a.adam.beta2 = parse(key, value)?,
            "adam_epsilon" => a.adam.epsilon = parse(key, value)?,
            "huber_delta" => a.loss.huber_delta = parse(key, value)?,
            "clip_norm" => a.loss.clip_norm = parse(key, value)?,
            "checkpoint" => {
                self.checkpoints.insert(String::new(), path());
            }
            "risk_free" => self.risk_free = parse(key, value)?,
            "random_seeds" => self.random_seeds = parse(key, value)?,
            "out_dir" => self.out_dir = path(),
            _ => match key.strip_prefix("checkpoint.") {
                Some(name) if valid_policy_name(name) => {
                    self.checkpoints.insert(name.to_string(), path());
                }
                Some(name) => return Err(format!("invalid policy name `{name}` (use [A-Za-z0-9_-])")),
                None => return Err(format!("unknown key `{key}`")),
            },
        }
        Ok(())
    }
}

pub fn valid_policy_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("bad value for `{key}`: `{value}` ({e})"))
}

pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{key}` must be set in the config file")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = "# comment\nprices = data/p.csv\nseed = 7\nepochs=3\nuse_sentiment = false\n\
                    train_start = 2014-01-02\ncheckpoint.with = a.json\nlearning_rate = 0.01\n";
        let cfg = RunConfig::parse(text, "run.cfg", Path::new("/base")).unwrap();
        assert_eq!(cfg.prices, Some(PathBuf::from("/base/data/p.csv")));
        assert_eq!(cfg.agent.seed, 7);
        assert_eq!(cfg.agent.epochs, 3);
        assert!(!cfg.use_sentiment);
        assert_eq!(cfg.train_start, NaiveDate::from_ymd_opt(2014, 1, 2));
        assert_eq!(cfg.checkpoints["with"], PathBuf::from("/base/a.json"));
        assert_eq!(cfg.agent.adam.learning_rate, 0.01);
        assert_eq!(cfg.out_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn absolute_paths_are_kept() {
        let cfg = RunConfig::parse("graph = /x/g.tsv", "c", Path::new("/base")).unwrap();
        assert_eq!(cfg.graph, Some(PathBuf::from("/x/g.tsv")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("seed = 1\n\nbogus = 2\n", "run.cfg", Path::new(".")).unwrap_err();
        assert_eq!(e.to_string(), "run.cfg:3: unknown key `bogus`");
        let e = RunConfig::parse("epochs = many", "run.cfg", Path::new(".")).unwrap_err();
        assert!(e.to_string().starts_with("run.cfg:1: bad value for `epochs`"));
        assert!(RunConfig::parse("no equals sign", "c", Path::new(".")).is_err());
        assert!(RunConfig::parse("checkpoint.a/b = x", "c", Path::new(".")).is_err());
    }
}
