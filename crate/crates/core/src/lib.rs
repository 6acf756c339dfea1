//! Deep Q-learning stock trading agent whose observation includes a daily
//! news-sentiment signal.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`relevance`] keeps only headlines that mention an entity within a
//!    bounded hop distance of the traded organization in an entity graph.
//! 2. [`sentiment`] classifies the surviving headlines with an ensemble of
//!    classifiers and reduces each trading day to a score in {-1, 0, +1}.
//! 3. [`env`] exposes a daily trading MDP over a [`market::PriceSeries`],
//!    and [`agent`] trains a DQN ([`nn`]) against it.
//! 4. [`eval`] rolls out frozen policies and compares portfolio curves and
//!    Sharpe ratios.

pub mod agent;
pub mod env;
pub mod error;
pub mod eval;
pub mod market;
pub mod nn;
pub mod relevance;
pub mod seed;
pub mod sentiment;
pub mod synthetic;

pub use error::{Error, Result};
