//! Headline polarity classification and daily aggregation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::relevance::{tokenize, Headline};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Smoothing constant in `confidence = |sum| / (|sum| + k)`.
pub const DEFAULT_CONFIDENCE_SMOOTHING: f64 = 1.0;

/// Tokens that flip the valence of a lexicon word shortly after them.
const NEGATORS: &[&str] = &[
    "not", "no", "never", "nor", "without", "cannot", "didn't", "don't", "doesn't", "isn't", "wasn't", "aren't",
    "weren't", "won't", "can't", "couldn't", "shouldn't", "wouldn't", "hasn't", "haven't", "hadn't",
];
const NEGATION_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    fn from_sign(x: f64) -> Self {
        if x > 0.0 {
            Polarity::Positive
        } else if x < 0.0 {
            Polarity::Negative
        } else {
            Polarity::Neutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityVerdict {
    pub polarity: Polarity,
    /// In `[0, 1]`.
    pub confidence: f64,
}

/// Deterministic text classifier: the same text always yields the same verdict.
pub trait SentimentClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, text: &str) -> PolarityVerdict;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    valences: HashMap<String, f64>,
}

impl Lexicon {
    pub fn new(valences: HashMap<String, f64>) -> Result<Self> {
        if valences.is_empty() {
            return Err(Error::Config("lexicon is empty".into()));
        }
        if let Some((w, v)) = valences.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("valence of `{w}` is not finite: {v}")));
        }
        let valences = valences.into_iter().map(|(w, v)| (w.to_lowercase(), v)).collect();
        Ok(Self { valences })
    }

    /// The general-purpose lexicon shipped with the crate.
    pub fn bundled() -> Self {
        read_lexicon(DEFAULT_LEXICON.as_bytes(), "bundled lexicon").expect("bundled lexicon is valid")
    }

    pub fn valence(&self, word: &str) -> Option<f64> {
        self.valences.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self {
            valences: self.valences.iter().map(|(w, v)| (w.clone(), -v)).collect(),
        }
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    read_lexicon(text.as_bytes(), &path.display().to_string())
}

/// `word<TAB>valence` lines; `#` comments and blank lines ignored.
pub fn read_lexicon<R: Read>(mut reader: R, source_name: &str) -> Result<Lexicon> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
    let mut valences = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, value) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, lineno, "expected `word<TAB>valence`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad valence `{}`", value.trim())))?;
        if !value.is_finite() {
            return Err(Error::parse(source_name, lineno, "valence must be finite"));
        }
        valences.insert(word.trim().to_lowercase(), value);
    }
    Lexicon::new(valences)
}

fn verdict_from_sum(sum: f64, smoothing: f64) -> PolarityVerdict {
    let magnitude = sum.abs();
    PolarityVerdict {
        polarity: Polarity::from_sign(sum),
        confidence: if magnitude == 0.0 { 0.0 } else { magnitude / (magnitude + smoothing) },
    }
}

/// Sums the valences of matched lowercase tokens.
pub fn lexicon_classify(text: &str, lexicon: &Lexicon) -> PolarityVerdict {
    lexicon_classify_with(text, lexicon, DEFAULT_CONFIDENCE_SMOOTHING)
}

pub fn lexicon_classify_with(text: &str, lexicon: &Lexicon, smoothing: f64) -> PolarityVerdict {
    let sum: f64 = tokenize(text, &HashSet::new())
        .iter()
        .filter_map(|t| lexicon.valence(t))
        .sum();
    verdict_from_sum(sum, smoothing)
}

#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    lexicon: Lexicon,
    smoothing: f64,
}

impl LexiconClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            smoothing: DEFAULT_CONFIDENCE_SMOOTHING,
        }
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        assert!(smoothing > 0.0, "smoothing must be positive");
        self.smoothing = smoothing;
        self
    }
}

impl SentimentClassifier for LexiconClassifier {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn classify(&self, text: &str) -> PolarityVerdict {
        lexicon_classify_with(text, &self.lexicon, self.smoothing)
    }
}

/// Lexicon scoring where a negator within the preceding three tokens flips
/// a word's valence ("did not win", "didn't beat").
#[derive(Debug, Clone)]
pub struct NegationAwareClassifier {
    lexicon: Lexicon,
    smoothing: f64,
}

impl NegationAwareClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            smoothing: DEFAULT_CONFIDENCE_SMOOTHING,
        }
    }
}

/// Like [`tokenize`] but keeps word-internal apostrophes so contractions
/// survive as single tokens.
fn contraction_tokens(text: &str) -> Vec<String> {
    let normalized = text.replace('\u{2019}', "'");
    normalized
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl SentimentClassifier for NegationAwareClassifier {
    fn name(&self) -> &str {
        "lexicon-negation"
    }

    fn classify(&self, text: &str) -> PolarityVerdict {
        let tokens = contraction_tokens(text);
        let mut sum = 0.0;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(v) = self.lexicon.valence(tok) else { continue };
            let negated = tokens[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|t| NEGATORS.contains(&t.as_str()));
            sum += if negated { -v } else { v };
        }
        verdict_from_sum(sum, self.smoothing)
    }
}

/// The two bundled classifiers over the bundled lexicon, in ensemble order.
pub fn default_ensemble(lexicon: &Lexicon) -> Vec<Box<dyn SentimentClassifier>> {
    vec![
        Box::new(LexiconClassifier::new(lexicon.clone())),
        Box::new(NegationAwareClassifier::new(lexicon.clone())),
    ]
}

/// Picks the most confident verdict; on ties the earlier classifier wins.
pub fn ensemble_classify(text: &str, classifiers: &[Box<dyn SentimentClassifier>]) -> Result<PolarityVerdict> {
    let mut best: Option<PolarityVerdict> = None;
    for c in classifiers {
        let v = c.classify(text);
        if best.is_none_or(|b| v.confidence > b.confidence) {
            best = Some(v);
        }
    }
    best.ok_or_else(|| Error::Config("sentiment ensemble needs at least one classifier".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailySentiment {
    pub date: NaiveDate,
    /// -1, 0 or +1.
    pub score: i8,
    pub n_headlines: usize,
}

pub type SentimentSeries = BTreeMap<NaiveDate, DailySentiment>;

/// Majority of positive over negative verdicts; ties and neutral-only days give 0.
pub fn majority_score(polarities: &[Polarity]) -> i8 {
    let pos = polarities.iter().filter(|p| **p == Polarity::Positive).count();
    let neg = polarities.iter().filter(|p| **p == Polarity::Negative).count();
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

pub fn daily_sentiment(
    date: NaiveDate,
    headlines: &[Headline],
    classifiers: &[Box<dyn SentimentClassifier>],
) -> Result<DailySentiment> {
    if let Some(h) = headlines.iter().find(|h| h.date != date) {
        return Err(Error::Argument(format!("headline dated {} in the batch for {date}", h.date)));
    }
    let polarities = headlines
        .iter()
        .map(|h| ensemble_classify(&h.text, classifiers).map(|v| v.polarity))
        .collect::<Result<Vec<_>>>()?;
    Ok(DailySentiment {
        date,
        score: majority_score(&polarities),
        n_headlines: headlines.len(),
    })
}

/// Groups headlines by date and aggregates each day. Dates without
/// headlines are absent from the result.
pub fn aggregate_daily(headlines: &[Headline], classifiers: &[Box<dyn SentimentClassifier>]) -> Result<SentimentSeries> {
    let mut by_date: BTreeMap<NaiveDate, Vec<Headline>> = BTreeMap::new();
    for h in headlines {
        by_date.entry(h.date).or_default().push(h.clone());
    }
    by_date
        .into_iter()
        .map(|(date, hs)| daily_sentiment(date, &hs, classifiers).map(|d| (date, d)))
        .collect()
}

pub fn write_sentiment_cache<W: Write>(series: &SentimentSeries, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
    out.write_record(["date", "score", "n_headlines"]).map_err(to_err)?;
    for d in series.values() {
        out.write_record([d.date.format("%Y-%m-%d").to_string(), d.score.to_string(), d.n_headlines.to_string()])
            .map_err(to_err)?;
    }
    out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))
}

pub fn save_sentiment_cache(series: &SentimentSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sentiment_cache(series, file)
}

pub fn load_sentiment_cache(path: impl AsRef<Path>) -> Result<SentimentSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sentiment_cache(file, &path.display().to_string())
}

pub fn read_sentiment_cache<R: Read>(reader: R, source_name: &str) -> Result<SentimentSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = SentimentSeries::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(source_name, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if i == 0 {
            if rec.iter().collect::<Vec<_>>() != ["date", "score", "n_headlines"] {
                return Err(Error::parse(source_name, line, "expected header `date,score,n_headlines`"));
            }
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::parse(source_name, line, "expected 3 fields"));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::parse(source_name, line, format!("bad date `{}`: {e}", &rec[0])))?;
        let score: i8 = rec[1]
            .parse()
            .ok()
            .filter(|s: &i8| (-1..=1).contains(s))
            .ok_or_else(|| Error::parse(source_name, line, format!("score must be -1, 0 or 1, got `{}`", &rec[1])))?;
        let n_headlines: usize = rec[2]
            .parse()
            .map_err(|_| Error::parse(source_name, line, format!("bad n_headlines `{}`", &rec[2])))?;
        if n_headlines == 0 && score != 0 {
            return Err(Error::parse(source_name, line, "a day with no headlines must score 0"));
        }
        if out.insert(date, DailySentiment { date, score, n_headlines }).is_some() {
            return Err(Error::Integrity(format!("{source_name}:{line}: duplicate date {date}")));
        }
    }
    Ok(out)
}
