//! Synthetic markets with known structure, plus an exact tabular solver for
//! deterministic price paths. Used to check that training finds what is
//! there to find.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{
    Action, EnvConfig, LONG_WINDOW, REWARD_BANKRUPT, REWARD_IDLE, REWARD_LOSS, REWARD_OUT_OF_CASH, REWARD_PROFIT,
};
use crate::error::{Error, Result};
use crate::market::{PriceBar, PriceSeries};
use crate::sentiment::{DailySentiment, SentimentSeries};

pub fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// One bar per calendar day from `start`, with open = high = low = close.
pub fn series_from_opens(symbol: &str, start: NaiveDate, opens: &[f64]) -> Result<PriceSeries> {
    let bars = opens
        .iter()
        .enumerate()
        .map(|(i, &o)| PriceBar {
            date: start + Days::new(i as u64),
            open: o,
            high: o,
            low: o,
            close: o,
            adj_close: o,
            volume: 1_000,
        })
        .collect();
    PriceSeries::new(symbol, bars)
}

/// Repeats `cycle` over `LONG_WINDOW` warm-up days plus `episode_days`,
/// phased so the first episode day opens at `cycle[0]`.
pub fn sawtooth_series(cycle: &[f64], episode_days: usize) -> Result<PriceSeries> {
    if cycle.is_empty() {
        return Err(Error::Argument("empty price cycle".into()));
    }
    let p = cycle.len();
    let offset = p - LONG_WINDOW % p;
    let opens: Vec<f64> = (0..LONG_WINDOW + episode_days).map(|i| cycle[(i + offset) % p]).collect();
    series_from_opens("SAW", epoch_date(), &opens)
}

pub fn sawtooth_env(cycle: &[f64], episode_days: usize, cash: f64, shares: u32) -> Result<EnvConfig> {
    let series = Arc::new(sawtooth_series(cycle, episode_days)?);
    Ok(EnvConfig::full(series).with_portfolio(cash, shares))
}

/// Random walk whose daily sentiment is the sign of the following day's move.
#[derive(Debug, Clone)]
pub struct SignalMarket {
    pub series: Arc<PriceSeries>,
    pub sentiments: Arc<SentimentSeries>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalMarketSpec {
    /// Days after the warm-up.
    pub days: usize,
    pub start_price: f64,
    /// Each move is `±step`, equiprobable.
    pub step: f64,
    /// Moves that would leave `[floor, ceiling]` are reflected.
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for SignalMarketSpec {
    fn default() -> Self {
        Self {
            days: 200,
            start_price: 100.0,
            step: 1.0,
            floor: 95.0,
            ceiling: 105.0,
        }
    }
}

/// Builds a market where sentiment on day t is sign(open[t + 1] − open[t]).
pub fn signal_market(spec: &SignalMarketSpec, rng: &mut ChaCha8Rng) -> Result<SignalMarket> {
    let band_ok = spec.step > 0.0
        && spec.floor > 0.0
        && spec.ceiling - spec.floor >= spec.step
        && (spec.floor..=spec.ceiling).contains(&spec.start_price);
    if !band_ok {
        return Err(Error::Argument(format!("invalid signal market spec {spec:?}")));
    }
    let n = LONG_WINDOW + spec.days;
    let mut opens = Vec::with_capacity(n);
    let mut price = spec.start_price;
    for _ in 0..n {
        opens.push(price);
        let mut up = rng.gen::<bool>();
        if price + spec.step > spec.ceiling {
            up = false;
        } else if price - spec.step < spec.floor {
            up = true;
        }
        price += if up { spec.step } else { -spec.step };
    }
    let series = series_from_opens("SIG", epoch_date(), &opens)?;
    let mut sentiments = SentimentSeries::new();
    for i in 0..n - 1 {
        let date = series.date_at(i);
        let diff = opens[i + 1] - opens[i];
        let score = if diff > 0.0 { 1 } else if diff < 0.0 { -1 } else { 0 };
        sentiments.insert(
            date,
            DailySentiment {
                date,
                score,
                n_headlines: 1,
            },
        );
    }
    Ok(SignalMarket {
        series: Arc::new(series),
        sentiments: Arc::new(sentiments),
    })
}

/// Portfolio state for the tabular solver: integer cash in the price unit's
/// smallest denomination keeps states exactly hashable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TabularState {
    pub t: usize,
    pub cash: i64,
    pub shares: u32,
}

/// Exact finite-horizon solver for a deterministic price path with integer
/// opens. Transition and reward rules are restated here independently of
/// the environment so the two can be checked against each other.
#[derive(Debug, Clone)]
pub struct TabularOracle {
    opens: Vec<i64>,
    gamma: f64,
    memo: HashMap<TabularState, [f64; 3]>,
}

pub struct Outcome {
    pub next: TabularState,
    pub reward: f64,
    pub done: bool,
}

impl TabularOracle {
    /// `opens` are the episode-day opens; the episode has `opens.len() - 1`
    /// steps.
    pub fn new(opens: &[f64], gamma: f64) -> Result<Self> {
        if opens.len() < 2 {
            return Err(Error::Argument("need at least two days".into()));
        }
        let opens = opens
            .iter()
            .map(|&o| {
                if o.fract() == 0.0 && o > 0.0 {
                    Ok(o as i64)
                } else {
                    Err(Error::Argument(format!("tabular solver needs positive integer opens, got {o}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            opens,
            gamma,
            memo: HashMap::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.opens.len() - 1
    }

    pub fn transition(&self, s: TabularState, action: Action) -> Outcome {
        let open = self.opens[s.t];
        let next_open = self.opens[s.t + 1];
        let (mut cash, mut shares) = (s.cash, s.shares);
        let executed = match action {
            Action::Buy if cash >= open => {
                cash -= open;
                shares += 1;
                true
            }
            Action::Sell if shares > 0 => {
                cash += open;
                shares -= 1;
                true
            }
            _ => false,
        };
        let bankrupt = shares == 0 && cash < next_open;
        let reward = match () {
            _ if bankrupt => REWARD_BANKRUPT,
            _ if cash < next_open => REWARD_OUT_OF_CASH,
            _ if executed && next_open > open && shares > 0 => REWARD_PROFIT,
            _ if executed && next_open < open && shares > 0 => REWARD_LOSS,
            _ => REWARD_IDLE,
        };
        let next = TabularState {
            t: s.t + 1,
            cash,
            shares,
        };
        Outcome {
            next,
            reward,
            done: bankrupt || next.t == self.horizon(),
        }
    }

    pub fn q_values(&mut self, s: TabularState) -> [f64; 3] {
        if let Some(q) = self.memo.get(&s) {
            return *q;
        }
        let mut q = [0.0; 3];
        for a in Action::ALL {
            let o = self.transition(s, a);
            q[a.index()] = o.reward
                + if o.done {
                    0.0
                } else {
                    let next = self.q_values(o.next);
                    self.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
        }
        self.memo.insert(s, q);
        q
    }

    /// Every action whose value is within `tol` of the best.
    pub fn optimal_actions(&mut self, s: TabularState, tol: f64) -> Vec<Action> {
        let q = self.q_values(s);
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Action::ALL.into_iter().filter(|a| q[a.index()] >= best - tol).collect()
    }

    /// Follows `choose` from `start` until the episode ends; returns the
    /// visited decision states and the final portfolio value.
    pub fn rollout(&self, start: TabularState, mut choose: impl FnMut(TabularState) -> Action) -> (Vec<TabularState>, i64) {
        let mut s = start;
        let mut visited = Vec::new();
        loop {
            visited.push(s);
            let o = self.transition(s, choose(s));
            s = o.next;
            if o.done {
                break;
            }
        }
        (visited, s.cash + s.shares as i64 * self.opens[s.t])
    }
}
