//! Tokens, temperature-scaled softmax and categorical sampling.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ids::ScenarioId;

/// Tolerance for "sums to one".
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A vocabulary element. Text is verbatim, whitespace included.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(Arc<str>);

impl Token {
    pub fn new(text: impl AsRef<str>) -> Result<Self> {
        let text = text.as_ref();
        if text.is_empty() {
            return Err(Error::Validation("token text must be non-empty".into()));
        }
        Ok(Self(Arc::from(text)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Token::new(s).map_err(serde::de::Error::custom)
    }
}

/// Ordered set of tokens. The position of a token is its vocabulary index,
/// which breaks every tie (greedy argmax, top-K ordering).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    index: HashMap<Token, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Validation(format!(
                "vocabulary needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate token {t:?} in vocabulary"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn index_of(&self, token: &Token) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Unnormalized scores, one per token, in vocabulary order.
#[derive(Debug, Clone)]
pub struct LogitVector {
    tokens: Vec<Token>,
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(entries: impl IntoIterator<Item = (Token, f64)>) -> Result<Self> {
        let (tokens, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("logit {v} is not finite")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(t) = tokens.iter().find(|t| !seen.insert(*t)) {
            return Err(Error::Domain(format!("duplicate token {t:?} in logits")));
        }
        Ok(Self { tokens, values })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A probability distribution over tokens, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    tokens: Vec<Token>,
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(entries: impl IntoIterator<Item = (Token, f64)>) -> Result<Self> {
        let (tokens, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        if tokens.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { tokens, values })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.tokens
            .iter()
            .position(|t| t.as_str() == token)
            .map(|i| self.values[i])
    }

    /// Index of the most probable token, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.values)
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `logits / temperature`. Temperature 0 is greedy: all mass on
/// the first maximal logit.
pub fn softmax_with_temperature(logits: &LogitVector, temperature: f64) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Domain("softmax of empty logits".into()));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!(
            "temperature {temperature} must be finite and >= 0"
        )));
    }
    let z = logits.values();
    let values = if temperature == 0.0 {
        let mut v = vec![0.0; z.len()];
        v[argmax_first(z)] = 1.0;
        v
    } else {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut v: Vec<f64> = z.iter().map(|&x| ((x - max) / temperature).exp()).collect();
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= total);
        v
    };
    Ok(ProbVector {
        tokens: logits.tokens().to_vec(),
        values,
    })
}

/// Temperature applied to probabilities: `p^(1/T)` renormalized, which equals
/// softmax of `ln p / T`. Zero entries stay zero; `T = 0` puts all mass on the
/// first maximal entry.
pub fn temper(probs: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(!probs.is_empty());
    if temperature == 0.0 {
        let mut v = vec![0.0; probs.len()];
        v[argmax_first(probs)] = 1.0;
        return v;
    }
    if temperature == 1.0 {
        let total: f64 = probs.iter().sum();
        return probs.iter().map(|p| p / total).collect();
    }
    // Work in log space relative to the max so tiny probabilities survive
    // exponents well above 1.
    let max = probs.iter().copied().fold(0.0, f64::max);
    let mut v: Vec<f64> = probs
        .iter()
        .map(|&p| {
            if p > 0.0 {
                ((p.ln() - max.ln()) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= total);
    v
}

/// Inverse-CDF draw of an index from nonnegative weights summing to one.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the accumulated total.
    last_positive
}

pub fn sample_token<R: Rng + ?Sized>(probs: &ProbVector, rng: &mut R) -> Token {
    probs.tokens[sample_index(&probs.values, rng)].clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_k_recorded: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k_recorded: 20,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Validation(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        if self.top_k_recorded == 0 {
            return Err(Error::Validation("top_k_recorded must be positive".into()));
        }
        Ok(())
    }
}

/// One recorded top-K entry: token and natural-log probability. Zero
/// probability is `-inf`.
pub type TopEntry = (Token, f64);

/// One generation: the sampled tokens and the top-K log-probabilities
/// recorded at every position.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRun {
    pub scenario: ScenarioId,
    pub run_index: u64,
    pub tokens: Vec<Token>,
    pub top_logprobs: Vec<Vec<TopEntry>>,
    pub seed: u64,
    pub temperature: f64,
    /// Raw response text, kept for audit when the run came off the wire.
    pub text: Option<String>,
}

impl GenerationRun {
    pub fn validate(&self) -> Result<()> {
        if self.top_logprobs.len() != self.tokens.len() {
            return Err(Error::Validation(format!(
                "{} tokens but {} top-K positions",
                self.tokens.len(),
                self.top_logprobs.len()
            )));
        }
        for (pos, entries) in self.top_logprobs.iter().enumerate() {
            if entries.windows(2).any(|w| w[1].1 > w[0].1) {
                return Err(Error::Validation(format!(
                    "top-K log-probabilities at position {pos} are not sorted descending"
                )));
            }
            if entries.iter().any(|(_, lp)| lp.is_nan() || *lp > 0.0) {
                return Err(Error::Validation(format!(
                    "log-probability above 0 or NaN at position {pos}"
                )));
            }
            let mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
            if mass > 1.0 + 1e-4 {
                return Err(Error::Validation(format!(
                    "recorded mass {mass} at position {pos} exceeds 1"
                )));
            }
        }
        Ok(())
    }
}
