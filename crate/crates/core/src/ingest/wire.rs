//! Chat-completions request and response bodies with token log-probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::ScenarioId;
use crate::token::{GenerationRun, SamplingConfig, Token, TopEntry};

pub const DEFAULT_MODEL: &str = "gpt-4o-2024-11-20";
pub const DEFAULT_MAX_COMPLETION_TOKENS: u32 = 200;
/// Largest `top_logprobs` the endpoint accepts.
pub const MAX_TOP_LOGPROBS: usize = 20;
/// The endpoint reports vanishing probabilities with this log-probability.
pub const LOGPROB_SENTINEL: f64 = -9999.0;
/// Placeholder for the focal price in the user prompt.
pub const PRICE_SLOT: &str = "{price}";

const DEFAULT_SYSTEM: &str =
    "You are visiting a store to buy baby diapers. You see some diaper brands. \
Answer if you would buy any of these diaper brands and, if so, which brand you would buy. \
Do not choose multiple brands.";

const DEFAULT_USER: &str = "You see the following baby diaper brands in the store: Pampers and Huggies \
(in no particular order). Pampers diapers are generally described as soft and include a wetness \
indicator. Huggies diapers are often noted for having a snug fit and for helping to prevent leaks. \
The unit prices are {price} cents per Pampers diaper and 30 cents per Huggies diaper. You may choose \
one of these diaper brands to buy, or choose \u{201c}neither\u{201d} if you prefer other diaper brands. \
Question: Would you choose to buy Pampers, Huggies, or neither?";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_text: String,
    /// Contains [`PRICE_SLOT`] exactly once.
    pub user_text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_text: DEFAULT_SYSTEM.to_owned(),
            user_text: DEFAULT_USER.to_owned(),
        }
    }
}

impl PromptTemplate {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Result<Self> {
        let t = Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.user_text.matches(PRICE_SLOT).count();
        if n != 1 {
            return Err(Error::Validation(format!(
                "user prompt must contain {PRICE_SLOT} exactly once, found {n}"
            )));
        }
        if self.system_text.contains(PRICE_SLOT) {
            return Err(Error::Validation(format!(
                "system prompt must not contain {PRICE_SLOT}"
            )));
        }
        Ok(())
    }

    /// User text with the price substituted as whole cents.
    pub fn render(&self, focal_price: f64) -> Result<String> {
        self.validate()?;
        if !focal_price.is_finite()
            || focal_price < 0.0
            || focal_price.fract() != 0.0
            || focal_price > 1e15
        {
            return Err(Error::Domain(format!(
                "price {focal_price} is not a whole number of cents"
            )));
        }
        Ok(self
            .user_text
            .replace(PRICE_SLOT, &format!("{}", focal_price as u64)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

/// Request body. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub logprobs: bool,
    pub top_logprobs: usize,
    pub max_completion_tokens: u32,
    pub temperature: f64,
}

impl WireRequest {
    pub fn validate(&self) -> Result<()> {
        if !self.logprobs {
            return Err(Error::Validation("logprobs must be enabled".into()));
        }
        if !(1..=MAX_TOP_LOGPROBS).contains(&self.top_logprobs) {
            return Err(Error::Validation(format!(
                "top_logprobs must lie in 1..={MAX_TOP_LOGPROBS}, got {}",
                self.top_logprobs
            )));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Validation(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }
}

/// Request for one scenario: system and user messages, price filled in.
pub fn build_request(
    template: &PromptTemplate,
    focal_price: f64,
    config: &SamplingConfig,
) -> Result<WireRequest> {
    config.validate()?;
    let req = WireRequest {
        model: DEFAULT_MODEL.to_owned(),
        messages: vec![
            Message {
                role: "system".into(),
                content: template.system_text.clone(),
            },
            Message {
                role: "user".into(),
                content: template.render(focal_price)?,
            },
        ],
        logprobs: true,
        top_logprobs: config.top_k_recorded,
        max_completion_tokens: DEFAULT_MAX_COMPLETION_TOKENS,
        temperature: config.temperature,
    };
    req.validate()?;
    Ok(req)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    choices: Vec<WireChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireChoice {
    #[serde(default)]
    index: u32,
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finish_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireMessage {
    #[serde(default)]
    role: Option<String>,
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

/// What the response does not say about the run it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub scenario: ScenarioId,
    pub run_index: u64,
    pub seed: u64,
    pub temperature: f64,
    /// The `top_logprobs` that was requested.
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseWarning {
    /// Fewer top-K entries than requested at a position.
    TruncatedTopK {
        position: usize,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub run: GenerationRun,
    pub warnings: Vec<ParseWarning>,
}

fn wire_logprob(lp: f64, position: usize) -> Result<f64> {
    if lp.is_nan() || lp > 0.0 {
        return Err(Error::Schema(format!(
            "log-probability {lp} at position {position} is not <= 0"
        )));
    }
    Ok(if lp <= LOGPROB_SENTINEL {
        f64::NEG_INFINITY
    } else {
        lp
    })
}

/// Parse the first choice of a response into a run. Positions are taken in
/// order; recorded alternatives are kept as given.
pub fn parse_response(raw: &[u8], ctx: &RunContext) -> Result<ParsedResponse> {
    let resp: WireResponse = serde_json::from_slice(raw)
        .map_err(|e| Error::Schema(format!("malformed response: {e}")))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Schema("response has no choices".into()))?;
    let content = choice.logprobs.and_then(|b| b.content).ok_or_else(|| {
        Error::Schema("response has no logprobs block; was logprobs enabled?".into())
    })?;
    let mut tokens = Vec::with_capacity(content.len());
    let mut top = Vec::with_capacity(content.len());
    let mut warnings = Vec::new();
    for (pos, entry) in content.into_iter().enumerate() {
        tokens.push(
            Token::new(&entry.token)
                .map_err(|_| Error::Schema(format!("empty token at position {pos}")))?,
        );
        wire_logprob(entry.logprob, pos)?;
        if entry.top_logprobs.len() > ctx.top_k {
            return Err(Error::Schema(format!(
                "{} top-K entries at position {pos}, more than the {} requested",
                entry.top_logprobs.len(),
                ctx.top_k
            )));
        }
        if entry.top_logprobs.len() < ctx.top_k {
            warnings.push(ParseWarning::TruncatedTopK {
                position: pos,
                got: entry.top_logprobs.len(),
                expected: ctx.top_k,
            });
        }
        let entries = entry
            .top_logprobs
            .into_iter()
            .map(|t| {
                let tok = Token::new(&t.token)
                    .map_err(|_| Error::Schema(format!("empty top-K token at position {pos}")))?;
                Ok((tok, wire_logprob(t.logprob, pos)?))
            })
            .collect::<Result<Vec<TopEntry>>>()?;
        top.push(entries);
    }
    let run = GenerationRun {
        scenario: ctx.scenario.clone(),
        run_index: ctx.run_index,
        tokens,
        top_logprobs: top,
        seed: ctx.seed,
        temperature: ctx.temperature,
        text: choice.message.content,
    };
    run.validate().map_err(|e| Error::Schema(e.to_string()))?;
    Ok(ParsedResponse { run, warnings })
}

/// Response body that parses back into `run`. The sampled token's own
/// log-probability is looked up in its top-K entries, else the sentinel.
pub fn response_to_wire(run: &GenerationRun) -> Vec<u8> {
    let to_wire = |lp: f64| {
        if lp == f64::NEG_INFINITY {
            LOGPROB_SENTINEL
        } else {
            lp
        }
    };
    let content = run
        .tokens
        .iter()
        .zip(&run.top_logprobs)
        .map(|(tok, entries)| TokenLogprob {
            token: tok.to_string(),
            logprob: to_wire(
                entries
                    .iter()
                    .find(|(t, _)| t == tok)
                    .map_or(f64::NEG_INFINITY, |(_, lp)| *lp),
            ),
            top_logprobs: entries
                .iter()
                .map(|(t, lp)| TopLogprob {
                    token: t.to_string(),
                    logprob: to_wire(*lp),
                })
                .collect(),
        })
        .collect();
    let resp = WireResponse {
        id: None,
        model: None,
        choices: vec![WireChoice {
            index: 0,
            message: WireMessage {
                role: Some("assistant".into()),
                content: run.text.clone(),
            },
            logprobs: Some(LogprobBlock {
                content: Some(content),
            }),
            finish_reason: Some("stop".into()),
        }],
    };
    serde_json::to_vec(&resp).expect("response serializes")
}
