//! Frozen-policy rollouts, Sharpe ratios and multi-policy comparison reports.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::greedy_action;
use crate::env::{Action, EnvConfig, Observation, TradingEnv};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::seed::{stream_rng, Stream};

/// Maps observations to actions during evaluation. No learning happens here.
pub trait Policy {
    fn name(&self) -> &str;
    fn act(&mut self, observation: &Observation) -> Result<Action>;
}

/// Argmax over a frozen Q-network.
pub struct GreedyPolicy {
    name: String,
    net: Mlp,
}

impl GreedyPolicy {
    pub fn new(name: impl Into<String>, net: Mlp) -> Self {
        Self { name: name.into(), net }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, observation: &Observation) -> Result<Action> {
        greedy_action(&self.net, &observation.features)
    }
}

/// Uniform over the three actions.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream_rng(seed, Stream::RandomBaseline),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, _: &Observation) -> Result<Action> {
        Ok(Action::ALL[self.rng.gen_range(0..Action::ALL.len())])
    }
}

pub struct HoldPolicy;

impl Policy for HoldPolicy {
    fn name(&self) -> &str {
        "hold"
    }

    fn act(&mut self, _: &Observation) -> Result<Action> {
        Ok(Action::Hold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Every trading day of the episode.
    pub dates: Vec<NaiveDate>,
    /// Portfolio value at each day's open.
    pub values: Vec<f64>,
    /// `returns[t] = values[t + 1] / values[t] - 1`.
    pub returns: Vec<f64>,
    /// Action taken on each day; `None` on the last day and after an early
    /// termination.
    pub actions: Vec<Option<Action>>,
    pub rewards: Vec<f64>,
    pub final_value: f64,
    /// The episode ended in bankruptcy before the last day.
    pub terminated_early: bool,
}

impl EpisodeResult {
    pub fn hit_penalty(&self, threshold: f64) -> bool {
        self.rewards.iter().any(|r| *r <= threshold)
    }
}

/// Simple returns between consecutive values. A zero value followed by a zero
/// value counts as a zero return.
pub fn simple_returns(values: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { w[1] / w[0] - 1.0 })
        .collect()
}

/// Rolls `policy` through one episode. After a bankruptcy the remaining days
/// are filled with the (constant, all-cash) final value so every policy
/// covers the same dates.
pub fn run_policy(env_cfg: EnvConfig, policy: &mut dyn Policy) -> Result<EpisodeResult> {
    let mut env = TradingEnv::new(env_cfg)?;
    let dates = env.dates();
    let mut obs = env.reset()?;
    let mut values = vec![env.current_value()];
    let mut actions = Vec::with_capacity(dates.len());
    let mut rewards = Vec::with_capacity(dates.len());
    loop {
        let action = policy.act(&obs)?;
        let step = env.step(action)?;
        actions.push(Some(action));
        rewards.push(step.reward);
        values.push(step.info.portfolio_value);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let terminated_early = values.len() < dates.len();
    let last = *values.last().expect("at least one value");
    values.resize(dates.len(), last);
    actions.resize(dates.len(), None);
    Ok(EpisodeResult {
        returns: simple_returns(&values),
        final_value: last,
        dates,
        values,
        actions,
        rewards,
        terminated_early,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64], mean: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// `(mean(returns) - risk_free) / sample_std(returns)`, unannualized.
pub fn sharpe_ratio(returns: &[f64], risk_free: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Argument(format!(
            "sharpe ratio needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let m = mean(returns);
    let sd = sample_std(returns, m);
    // Relative cutoff: a series constant up to rounding has no usable spread.
    let scale = returns.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if !(sd > scale * 1e-14) {
        return Err(Error::Degenerate("return series has zero variance".into()));
    }
    Ok((m - risk_free) / sd)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub policy: String,
    pub final_value: f64,
    /// `None` when the return series is degenerate (e.g. always-hold on a flat
    /// market).
    pub sharpe: Option<f64>,
    pub mean_return: f64,
    pub std_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub risk_free: f64,
    /// Sorted by policy name.
    pub rows: Vec<PolicyReport>,
}

pub fn policy_report(name: &str, result: &EpisodeResult, risk_free: f64) -> Result<PolicyReport> {
    let sharpe = match sharpe_ratio(&result.returns, risk_free) {
        Ok(s) => Some(s),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let m = mean(&result.returns);
    Ok(PolicyReport {
        policy: name.to_string(),
        final_value: result.final_value,
        sharpe,
        mean_return: m,
        std_return: sample_std(&result.returns, m),
    })
}

pub fn compare(results: &BTreeMap<String, EpisodeResult>, risk_free: f64) -> Result<Comparison> {
    let mut iter = results.values();
    if let Some(first) = iter.next() {
        if let Some(other) = iter.find(|r| r.dates != first.dates) {
            return Err(Error::Argument(format!(
                "results cover different date ranges: {:?}..{:?} vs {:?}..{:?}",
                first.dates.first(),
                first.dates.last(),
                other.dates.first(),
                other.dates.last()
            )));
        }
    }
    let rows = results
        .iter()
        .map(|(name, r)| policy_report(name, r, risk_free))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { risk_free, rows })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Integrity(format!("csv write failed: {e}"))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl Comparison {
    /// Adds a row computed elsewhere (e.g. a seed aggregate), keeping name
    /// order.
    pub fn insert(&mut self, row: PolicyReport) -> Result<()> {
        match self.rows.binary_search_by(|r| r.policy.as_str().cmp(&row.policy)) {
            Ok(_) => Err(Error::Argument(format!("duplicate policy name `{}`", row.policy))),
            Err(at) => {
                self.rows.insert(at, row);
                Ok(())
            }
        }
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["policy", "final_value", "sharpe", "mean_return", "std_return"])
            .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                r.policy.clone(),
                r.final_value.to_string(),
                fmt_opt(r.sharpe),
                r.mean_return.to_string(),
                r.std_return.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
    }
}

pub fn write_policy_csv<W: Write>(result: &EpisodeResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["date", "portfolio_value", "action"]).map_err(csv_err)?;
    for ((date, value), action) in result.dates.iter().zip(&result.values).zip(&result.actions) {
        out.write_record([
            date.format("%Y-%m-%d").to_string(),
            value.to_string(),
            action.map_or_else(String::new, |a| a.to_string()),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
}

/// Linear-interpolated quantile of an already sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomBaseline {
    pub seeds: Vec<u64>,
    pub runs: Vec<EpisodeResult>,
    pub median_final: f64,
    pub q1_final: f64,
    pub q3_final: f64,
    /// The run whose final value is the lower median; stands in for the
    /// random policy in comparison tables.
    pub median_index: usize,
}

pub const MIN_RANDOM_SEEDS: usize = 30;

/// Rolls the random policy once per seed.
pub fn random_baseline(env_cfg: &EnvConfig, seeds: &[u64]) -> Result<RandomBaseline> {
    if seeds.len() < MIN_RANDOM_SEEDS {
        return Err(Error::Argument(format!(
            "random baseline needs at least {MIN_RANDOM_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    let runs = seeds
        .iter()
        .map(|s| run_policy(env_cfg.clone(), &mut RandomPolicy::new(*s)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|a, b| runs[*a].final_value.total_cmp(&runs[*b].final_value).then(a.cmp(b)));
    let sorted: Vec<f64> = order.iter().map(|i| runs[*i].final_value).collect();
    Ok(RandomBaseline {
        median_final: quantile(&sorted, 0.5),
        q1_final: quantile(&sorted, 0.25),
        q3_final: quantile(&sorted, 0.75),
        median_index: order[(order.len() - 1) / 2],
        seeds: seeds.to_vec(),
        runs,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    quantile(&xs, 0.5)
}

impl RandomBaseline {
    /// Summary row whose every column is the median over seeds. Seeds with a
    /// degenerate return series are left out of the Sharpe median.
    pub fn report(&self, name: &str, risk_free: f64) -> Result<PolicyReport> {
        let rows = self
            .runs
            .iter()
            .map(|r| policy_report(name, r, risk_free))
            .collect::<Result<Vec<_>>>()?;
        let sharpes: Vec<f64> = rows.iter().filter_map(|r| r.sharpe).collect();
        Ok(PolicyReport {
            policy: name.to_string(),
            final_value: self.median_final,
            sharpe: (!sharpes.is_empty()).then(|| median(sharpes)),
            mean_return: median(rows.iter().map(|r| r.mean_return).collect()),
            std_return: median(rows.iter().map(|r| r.std_return).collect()),
        })
    }

    pub fn write_seeds_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["seed", "final_value", "terminated_early"]).map_err(csv_err)?;
        for (seed, run) in self.seeds.iter().zip(&self.runs) {
            out.write_record([seed.to_string(), run.final_value.to_string(), run.terminated_early.to_string()])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::REWARD_IDLE;
    use crate::market::{PriceBar, PriceSeries};
    use std::sync::Arc;

    fn series(opens: &[f64]) -> Arc<PriceSeries> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let bars = opens
            .iter()
            .enumerate()
            .map(|(i, o)| PriceBar {
                date: start + chrono::Days::new(i as u64),
                open: *o,
                high: *o,
                low: *o,
                close: *o,
                adj_close: *o,
                volume: 1,
            })
            .collect();
        Arc::new(PriceSeries::new("T", bars).unwrap())
    }

    #[test]
    fn sharpe_examples() {
        assert_eq!(sharpe_ratio(&[0.1, -0.1], 0.0).unwrap(), 0.0);
        let s = sharpe_ratio(&[0.02, 0.04], 0.0).unwrap();
        assert!((s - 2.121320343559643).abs() < 1e-12);
        assert!(matches!(sharpe_ratio(&[0.01; 5], 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(sharpe_ratio(&[0.01], 0.0), Err(Error::Argument(_))));
        assert!(matches!(sharpe_ratio(&[], 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn hold_rollout_matches_arithmetic() {
        let mut opens: Vec<f64> = (0..60).map(|i| 10.0 + i as f64 * 0.5).collect();
        opens[59] = 30.0;
        let cfg = EnvConfig::full(series(&opens));
        let r = run_policy(cfg, &mut HoldPolicy).unwrap();
        assert_eq!(r.dates.len(), 10);
        assert_eq!(r.final_value, 1000.0 + 10.0 * 30.0);
        assert!(r.rewards.iter().all(|x| *x == REWARD_IDLE));
        assert_eq!(r.actions.last(), Some(&None));
        let rebuilt = r.returns.iter().fold(r.values[0], |v, x| v * (1.0 + x));
        assert!((rebuilt / r.final_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn early_termination_is_padded() {
        let opens: Vec<f64> = (0..70).map(|i| if i <= 50 { 10.0 } else { 600.0 }).collect();
        let cfg = EnvConfig::full(series(&opens)).with_portfolio(0.0, 1);
        let mut sell = SellOnce(false);
        let r = run_policy(cfg, &mut sell).unwrap();
        assert!(r.terminated_early);
        assert_eq!(r.values.len(), 20);
        assert_eq!(r.final_value, 10.0);
        assert!(r.values[1..].iter().all(|v| *v == 10.0));
        assert_eq!(r.actions.iter().flatten().count(), 1);
    }

    struct SellOnce(bool);

    impl Policy for SellOnce {
        fn name(&self) -> &str {
            "sell"
        }
        fn act(&mut self, _: &Observation) -> Result<Action> {
            let first = !self.0;
            self.0 = true;
            Ok(if first { Action::Sell } else { Action::Hold })
        }
    }

    #[test]
    fn compare_identity_and_mismatch() {
        let opens: Vec<f64> = (0..60).map(|i| 10.0 + (i % 3) as f64).collect();
        let a = run_policy(EnvConfig::full(series(&opens)), &mut HoldPolicy).unwrap();
        let mut one = BTreeMap::new();
        one.insert("hold".to_string(), a.clone());
        let c = compare(&one, 0.0).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0], policy_report("hold", &a, 0.0).unwrap());

        let mut two = one.clone();
        two.insert("also".to_string(), a.clone());
        let c = compare(&two, 0.0).unwrap();
        assert_eq!(c.rows[0].policy, "also");
        assert_eq!(c.rows[0].final_value, c.rows[1].final_value);
        assert_eq!(c.rows[0].sharpe, c.rows[1].sharpe);

        let short = run_policy(
            EnvConfig::new(series(&opens), NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2020, 2, 25).unwrap()),
            &mut HoldPolicy,
        )
        .unwrap();
        two.insert("short".to_string(), short);
        assert!(matches!(compare(&two, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn empty_range_is_config_error() {
        let opens = vec![10.0; 60];
        let d = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let cfg = EnvConfig::new(series(&opens), d, d);
        assert!(matches!(run_policy(cfg, &mut HoldPolicy), Err(Error::Config(_))));
    }

    #[test]
    fn random_baseline_is_reproducible() {
        let opens: Vec<f64> = (0..80).map(|i| 20.0 + ((i * 7) % 5) as f64).collect();
        let cfg = EnvConfig::full(series(&opens));
        let seeds: Vec<u64> = (0..30).collect();
        let a = random_baseline(&cfg, &seeds).unwrap();
        let b = random_baseline(&cfg, &seeds).unwrap();
        assert_eq!(a, b);
        assert!(a.q1_final <= a.median_final && a.median_final <= a.q3_final);
        assert!(random_baseline(&cfg, &seeds[..5]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
