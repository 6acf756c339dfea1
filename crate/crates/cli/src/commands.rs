use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sentrade_core::agent::Trainer;
use sentrade_core::env::{EnvConfig, OBSERVATION_SIZE};
use sentrade_core::eval::{
    compare, random_baseline, run_policy, write_policy_csv, EpisodeResult, GreedyPolicy, HoldPolicy,
};
use sentrade_core::market::{load_price_series, PriceSeries};
use sentrade_core::nn::Checkpoint;
use sentrade_core::relevance::{load_entity_graph, load_headlines, load_stopwords, RelevanceConfig, RelevanceFilter};
use sentrade_core::sentiment::{
    aggregate_daily, default_ensemble, ensemble_classify, load_lexicon, load_sentiment_cache, save_sentiment_cache,
    Lexicon, Polarity, SentimentSeries,
};
use sentrade_core::{Error, Result};

use crate::config::{require, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RANDOM_SEEDS_FILE: &str = "random_seeds.csv";
pub const DEFAULT_CACHE_FILE: &str = "sentiment_cache.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.sentiment_cache
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(DEFAULT_CACHE_FILE))
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let headlines = load_headlines(require(&cfg.headlines, "headlines")?)?;
    let graph = load_entity_graph(require(&cfg.graph, "graph")?)?;
    let lexicon = match &cfg.lexicon {
        Some(p) => load_lexicon(p)?,
        None => Lexicon::bundled(),
    };
    let mut rel = RelevanceConfig::new(cfg.org_node.clone());
    rel.max_distance = cfg.max_distance;
    if let Some(p) = &cfg.stopwords {
        rel.stopwords = load_stopwords(p)?;
    }
    let filter = RelevanceFilter::new(&graph, &rel)?;
    let relevant: Vec<_> = headlines.iter().filter(|h| filter.is_relevant(h)).cloned().collect();

    let classifiers = default_ensemble(&lexicon);
    let mut counts = [0usize; 3];
    for h in &relevant {
        let v = ensemble_classify(&h.text, &classifiers)?;
        counts[match v.polarity {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }] += 1;
    }
    let daily = aggregate_daily(&relevant, &classifiers)?;

    let out = cache_path(cfg);
    if let Some(dir) = out.parent() {
        create_out_dir(dir)?;
    }
    save_sentiment_cache(&daily, &out)?;
    println!(
        "total={} relevant={} positive={} negative={} neutral={} days={}",
        headlines.len(),
        relevant.len(),
        counts[0],
        counts[1],
        counts[2],
        daily.len()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn load_prices(cfg: &RunConfig) -> Result<Arc<PriceSeries>> {
    Ok(Arc::new(load_price_series(require(&cfg.prices, "prices")?, &cfg.symbol)?))
}

fn load_sentiments(cfg: &RunConfig) -> Result<Arc<SentimentSeries>> {
    let path = cfg.sentiment_cache.as_ref().ok_or_else(|| {
        Error::Config("sentiment is enabled but `sentiment_cache` is not set (run ingest, or pass --no-sentiment)".into())
    })?;
    Ok(Arc::new(load_sentiment_cache(path)?))
}

fn env_config(cfg: &RunConfig, series: Arc<PriceSeries>, start: Option<chrono::NaiveDate>, end: Option<chrono::NaiveDate>) -> EnvConfig {
    let start = start.unwrap_or_else(|| series.first_date());
    let end = end.unwrap_or_else(|| series.last_date());
    EnvConfig::new(series, start, end).with_portfolio(cfg.initial_cash, cfg.initial_shares)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let series = load_prices(cfg)?;
    let mut env_cfg = env_config(cfg, series, cfg.train_start, cfg.train_end);
    if cfg.use_sentiment {
        env_cfg = env_cfg.with_sentiments(load_sentiments(cfg)?);
    }
    create_out_dir(&cfg.out_dir)?;

    let mut trainer = Trainer::new(env_cfg.clone(), cfg.agent.clone())?;
    trainer.run()?;

    let ckpt_path = cfg.out_dir.join(CHECKPOINT_FILE);
    trainer.checkpoint().save(&ckpt_path)?;
    let log_path = cfg.out_dir.join(TRAINING_LOG_FILE);
    trainer.log().write_csv(create_file(&log_path)?)?;

    let greedy = run_policy(env_cfg, &mut GreedyPolicy::new("dqn", trainer.q_net().clone()))?;
    if let Some(last) = trainer.log().epochs.last() {
        println!("epochs={} last_epoch_portfolio={}", trainer.log().epochs.len(), last.final_portfolio);
    } else {
        println!("epochs=0");
    }
    println!("greedy_final_portfolio={}", greedy.final_value);
    println!("wrote {} and {}", ckpt_path.display(), log_path.display());
    Ok(())
}

struct LoadedPolicy {
    name: String,
    checkpoint: Checkpoint,
}

fn load_checkpoints(cfg: &RunConfig) -> Result<Vec<LoadedPolicy>> {
    if cfg.checkpoints.is_empty() {
        return Err(Error::Config("evaluate needs `checkpoint` or `checkpoint.<name>` in the config".into()));
    }
    let mut out: Vec<LoadedPolicy> = Vec::new();
    for (name, path) in &cfg.checkpoints {
        let checkpoint = Checkpoint::load(path)?;
        let sizes = &checkpoint.layer_sizes;
        if sizes.first() != Some(&OBSERVATION_SIZE) || sizes.last() != Some(&3) {
            return Err(Error::Config(format!(
                "{}: network {:?} does not map {OBSERVATION_SIZE} observations to 3 actions",
                path.display(),
                sizes
            )));
        }
        let name = if name.is_empty() {
            if checkpoint.uses_sentiment { "dqn_sentiment" } else { "dqn_no_sentiment" }.to_string()
        } else {
            name.clone()
        };
        if ["hold", "random"].contains(&name.as_str()) || out.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("policy name `{name}` is used twice")));
        }
        out.push(LoadedPolicy { name, checkpoint });
    }
    Ok(out)
}

fn write_policy(dir: &Path, name: &str, result: &EpisodeResult) -> Result<()> {
    let path = dir.join(format!("policy_{name}.csv"));
    write_policy_csv(result, create_file(&path)?)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let series = load_prices(cfg)?;
    let policies = load_checkpoints(cfg)?;
    let env_cfg = env_config(cfg, series, cfg.test_start, cfg.test_end);
    let needs_sentiment = cfg.use_sentiment && policies.iter().any(|p| p.checkpoint.uses_sentiment);
    let sentiments = if needs_sentiment { Some(load_sentiments(cfg)?) } else { None };

    let mut results = BTreeMap::new();
    for p in &policies {
        let mut pcfg = env_cfg.clone();
        if p.checkpoint.uses_sentiment {
            if let Some(s) = &sentiments {
                pcfg = pcfg.with_sentiments(s.clone());
            }
        }
        let net = p.checkpoint.network()?;
        results.insert(p.name.clone(), run_policy(pcfg, &mut GreedyPolicy::new(p.name.clone(), net))?);
    }
    results.insert("hold".to_string(), run_policy(env_cfg.clone(), &mut HoldPolicy)?);

    let seeds: Vec<u64> = (0..cfg.random_seeds as u64).map(|i| cfg.agent.seed.wrapping_add(i)).collect();
    let random = random_baseline(&env_cfg, &seeds)?;

    let mut comparison = compare(&results, cfg.risk_free)?;
    comparison.insert(random.report("random", cfg.risk_free)?)?;

    create_out_dir(&cfg.out_dir)?;
    let summary_path = cfg.out_dir.join(SUMMARY_FILE);
    comparison.write_summary_csv(create_file(&summary_path)?)?;
    for (name, result) in &results {
        write_policy(&cfg.out_dir, name, result)?;
    }
    write_policy(&cfg.out_dir, "random", &random.runs[random.median_index])?;
    random.write_seeds_csv(create_file(&cfg.out_dir.join(RANDOM_SEEDS_FILE))?)?;

    for row in &comparison.rows {
        let sharpe = row.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
        println!("{:<20} final={:.2} sharpe={}", row.policy, row.final_value, sharpe);
    }
    println!(
        "random over {} seeds: median={:.2} iqr=[{:.2}, {:.2}]",
        seeds.len(),
        random.median_final,
        random.q1_final,
        random.q3_final
    );
    println!("wrote {}", summary_path.display());
    Ok(())
}
