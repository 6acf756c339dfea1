//! Daily single-stock trading MDP.
//!
//! One step per trading day. The agent buys or sells one share at the day's
//! open, or holds; the reward is shaped as follows (first match wins):
//!
//! | condition after the trade, against the next open | reward |
//! |---|---|
//! | no shares and cash below the next open (episode ends) | -100 |
//! | shares held but cash below the next open | -10 |
//! | executed trade, portfolio value rises by the next open | +1 |
//! | executed trade, portfolio value falls by the next open | -1 |
//! | anything else (hold, impossible trade, flat value) | -0.1 |

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market::PriceSeries;
use crate::sentiment::SentimentSeries;

pub const SHORT_WINDOW: usize = 5;
pub const LONG_WINDOW: usize = 50;
pub const DEFAULT_INITIAL_CASH: f64 = 1000.0;
pub const DEFAULT_INITIAL_SHARES: u32 = 10;
pub const OBSERVATION_SIZE: usize = 6;

pub const REWARD_PROFIT: f64 = 1.0;
pub const REWARD_LOSS: f64 = -1.0;
pub const REWARD_IDLE: f64 = -0.1;
pub const REWARD_OUT_OF_CASH: f64 = -10.0;
pub const REWARD_BANKRUPT: f64 = -100.0;

/// Every value `step` can return.
pub const REWARDS: [f64; 5] = [REWARD_PROFIT, REWARD_LOSS, REWARD_IDLE, REWARD_OUT_OF_CASH, REWARD_BANKRUPT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Buy = 0,
    Sell = 1,
    Hold = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Buy, Action::Sell, Action::Hold];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
            Action::Hold => "hold",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buy" => Ok(Action::Buy),
            "sell" => Ok(Action::Sell),
            "hold" => Ok(Action::Hold),
            other => Err(Error::Argument(format!("unknown action `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Portfolio {
    pub cash: f64,
    pub shares: u32,
}

/// Mark-to-market value: `cash + shares * open`.
pub fn portfolio_value(p: &Portfolio, open: f64) -> Result<f64> {
    if !(open > 0.0) || !open.is_finite() {
        return Err(Error::Argument(format!("price must be positive, got {open}")));
    }
    Ok(p.cash + p.shares as f64 * open)
}

/// Episode constants used to scale raw features for the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    cash_scale: f64,
    shares_scale: f64,
    price_scale: f64,
}

impl Normalizer {
    /// Cash and shares are scaled by their initial amounts (left raw when the
    /// initial amount is zero); prices and price differences by the first
    /// episode open.
    pub fn new(initial_cash: f64, initial_shares: u32, first_open: f64) -> Self {
        Self {
            cash_scale: if initial_cash > 0.0 { initial_cash } else { 1.0 },
            shares_scale: if initial_shares > 0 { initial_shares as f64 } else { 1.0 },
            price_scale: first_open,
        }
    }

    fn apply(&self, cash: f64, shares: u32, open: f64, diff5: f64, diff50: f64, sentiment: i8) -> [f64; OBSERVATION_SIZE] {
        [
            cash / self.cash_scale,
            shares as f64 / self.shares_scale,
            open / self.price_scale,
            diff5 / self.price_scale,
            diff50 / self.price_scale,
            sentiment as f64,
        ]
    }
}

/// The six raw state variables plus their normalized vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub cash: f64,
    pub shares: u32,
    pub open_price: f64,
    pub diff5: f64,
    pub diff50: f64,
    pub sentiment: i8,
    pub features: [f64; OBSERVATION_SIZE],
}

pub fn make_observation(
    portfolio: &Portfolio,
    date: NaiveDate,
    series: &PriceSeries,
    sentiments: Option<&SentimentSeries>,
    normalizer: &Normalizer,
) -> Result<Observation> {
    let index = series
        .index_of(date)
        .ok_or_else(|| Error::State(format!("{date} is not a trading date")))?;
    observation_at(portfolio, index, series, sentiments, normalizer)
}

fn observation_at(
    portfolio: &Portfolio,
    index: usize,
    series: &PriceSeries,
    sentiments: Option<&SentimentSeries>,
    normalizer: &Normalizer,
) -> Result<Observation> {
    let warm = |e: Error| match e {
        Error::WarmUp { .. } => Error::State(e.to_string()),
        other => other,
    };
    let diff5 = series.rolling_open_diff_at(index, SHORT_WINDOW).map_err(warm)?;
    let diff50 = series.rolling_open_diff_at(index, LONG_WINDOW).map_err(warm)?;
    let date = series.date_at(index);
    let open_price = series.open_at(index);
    let sentiment = sentiments.and_then(|s| s.get(&date)).map_or(0, |d| d.score);
    let features = normalizer.apply(portfolio.cash, portfolio.shares, open_price, diff5, diff50, sentiment);
    if features.iter().any(|f| !f.is_finite()) {
        return Err(Error::State(format!("non-finite observation on {date}")));
    }
    Ok(Observation {
        date,
        cash: portfolio.cash,
        shares: portfolio.shares,
        open_price,
        diff5,
        diff50,
        sentiment,
        features,
    })
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub series: Arc<PriceSeries>,
    /// `None` pins the sentiment feature at 0.
    pub sentiments: Option<Arc<SentimentSeries>>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial_cash: f64,
    pub initial_shares: u32,
}

impl EnvConfig {
    pub fn new(series: Arc<PriceSeries>, start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            series,
            sentiments: None,
            start,
            end,
            initial_cash: DEFAULT_INITIAL_CASH,
            initial_shares: DEFAULT_INITIAL_SHARES,
        }
    }

    /// Whole-series range.
    pub fn full(series: Arc<PriceSeries>) -> Self {
        let (start, end) = (series.first_date(), series.last_date());
        Self::new(series, start, end)
    }

    pub fn with_sentiments(mut self, sentiments: Arc<SentimentSeries>) -> Self {
        self.sentiments = Some(sentiments);
        self
    }

    pub fn without_sentiments(mut self) -> Self {
        self.sentiments = None;
        self
    }

    pub fn with_portfolio(mut self, cash: f64, shares: u32) -> Self {
        self.initial_cash = cash;
        self.initial_shares = shares;
        self
    }

    /// Series indices of the episode's trading days: the days in
    /// `[start, end]` that have a full long window of history behind them.
    pub fn episode_days(&self) -> Result<Range<usize>> {
        if !(self.initial_cash >= 0.0) || !self.initial_cash.is_finite() {
            return Err(Error::Config(format!("initial cash must be >= 0, got {}", self.initial_cash)));
        }
        let range = self
            .series
            .index_range(self.start, self.end)
            .map_err(|e| Error::Config(e.to_string()))?;
        let first = range.start.max(LONG_WINDOW);
        if range.end < first + 2 {
            return Err(Error::Config(format!(
                "[{}, {}] has fewer than two trading days after the {LONG_WINDOW}-day warm-up",
                self.start, self.end
            )));
        }
        Ok(first..range.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Value at the new day's open.
    pub portfolio_value: f64,
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One row per step: the action taken on `date`, the portfolio right after
/// the trade, and the portfolio value at that day's open.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub date: NaiveDate,
    pub action: Action,
    pub executed: bool,
    pub reward: f64,
    pub cash: f64,
    pub shares: u32,
    pub open: f64,
    pub portfolio_value: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
    out.write_record(["date", "action", "executed", "reward", "cash", "shares", "open", "portfolio_value"])
        .map_err(to_err)?;
    for r in rows {
        out.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.action.to_string(),
            r.executed.to_string(),
            r.reward.to_string(),
            r.cash.to_string(),
            r.shares.to_string(),
            r.open.to_string(),
            r.portfolio_value.to_string(),
        ])
        .map_err(to_err)?;
    }
    out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
}

#[derive(Debug, Clone)]
pub struct TradingEnv {
    cfg: EnvConfig,
    days: Range<usize>,
    cursor: usize,
    portfolio: Portfolio,
    normalizer: Normalizer,
    done: bool,
    trace: Vec<TraceRow>,
}

impl TradingEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        let days = cfg.episode_days()?;
        let normalizer = Normalizer::new(cfg.initial_cash, cfg.initial_shares, cfg.series.open_at(days.start));
        let portfolio = Portfolio {
            cash: cfg.initial_cash,
            shares: cfg.initial_shares,
        };
        Ok(Self {
            cursor: days.start,
            days,
            portfolio,
            normalizer,
            done: false,
            trace: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reset(&mut self) -> Result<Observation> {
        self.cursor = self.days.start;
        self.portfolio = Portfolio {
            cash: self.cfg.initial_cash,
            shares: self.cfg.initial_shares,
        };
        self.done = false;
        self.trace.clear();
        self.observe()
    }

    fn observe(&self) -> Result<Observation> {
        observation_at(
            &self.portfolio,
            self.cursor,
            &self.cfg.series,
            self.cfg.sentiments.as_deref(),
            &self.normalizer,
        )
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::State("episode is over; call reset".into()));
        }
        let series = &self.cfg.series;
        let open = series.open_at(self.cursor);
        let next_open = series.open_at(self.cursor + 1);
        let value_today = self.portfolio.cash + self.portfolio.shares as f64 * open;

        let p = &mut self.portfolio;
        let executed = match action {
            Action::Buy if p.cash >= open => {
                p.cash -= open;
                p.shares += 1;
                true
            }
            Action::Sell if p.shares >= 1 => {
                p.cash += open;
                p.shares -= 1;
                true
            }
            _ => false,
        };

        let bankrupt = p.shares == 0 && p.cash < next_open;
        let reward = if bankrupt {
            REWARD_BANKRUPT
        } else if p.cash < next_open {
            REWARD_OUT_OF_CASH
        } else if executed {
            // Sign of the mark-to-market change between the two opens.
            let change = p.shares as f64 * (next_open - open);
            if change > 0.0 {
                REWARD_PROFIT
            } else if change < 0.0 {
                REWARD_LOSS
            } else {
                REWARD_IDLE
            }
        } else {
            REWARD_IDLE
        };

        self.trace.push(TraceRow {
            date: series.date_at(self.cursor),
            action,
            executed,
            reward,
            cash: p.cash,
            shares: p.shares,
            open,
            portfolio_value: value_today,
        });

        self.cursor += 1;
        self.done = bankrupt || self.cursor + 1 >= self.days.end;
        let observation = self.observe()?;
        Ok(StepResult {
            info: StepInfo {
                portfolio_value: self.portfolio.cash + self.portfolio.shares as f64 * next_open,
                executed,
            },
            observation,
            reward,
            done: self.done,
        })
    }

    pub fn portfolio(&self) -> Portfolio {
        self.portfolio
    }

    pub fn current_date(&self) -> NaiveDate {
        self.cfg.series.date_at(self.cursor)
    }

    pub fn current_open(&self) -> f64 {
        self.cfg.series.open_at(self.cursor)
    }

    pub fn current_value(&self) -> f64 {
        self.portfolio.cash + self.portfolio.shares as f64 * self.current_open()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Trading days of the episode, first to last.
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.clone().map(|i| self.cfg.series.date_at(i)).collect()
    }

    /// Maximum number of steps in one episode.
    pub fn horizon(&self) -> usize {
        self.days.len() - 1
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }
}
