//! Scripted stochastic language model used as the ground-truth oracle.
//!
//! A response is one of a fixed set of templates (a prefix of tokens) followed
//! by exactly one marker token naming an alternative. Template weights and the
//! per-template, per-scenario pivot distribution are known exactly, so every
//! statistic computed from generated runs has a closed-form target.
//!
//! The recorded top-K at each position is the exact next-token distribution of
//! the template mixture given the tokens emitted so far (untempered). At the
//! pivot position this is the marker distribution of the templates sharing
//! that prefix, plus continuation tokens of any longer template that extends
//! it.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::AlternativeSet;
use crate::error::{Error, Result};
use crate::ids::{AlternativeId, ScenarioId};
use crate::rng::{self, Purpose};
use crate::token::{
    sample_index, temper, GenerationRun, SamplingConfig, Token, TopEntry, Vocabulary, SIMPLEX_TOL,
};

/// Vocabulary is padded with unused tokens up to this size so the default
/// top-20 recording is always possible.
pub const MIN_VOCAB: usize = 20;

/// JSON document form of a scripted LM.
///
/// ```json
/// {
///   "markers": {"Pampers": ["P"], "Huggies": ["H"], "neither": ["neither"]},
///   "templates": [
///     {"prefix": ["I", " would", " choose", " **"], "weight": 1.0,
///      "pivot_beliefs": {"p31": {"Pampers": 0.6, "Huggies": 0.3, "neither": 0.1}}}
///   ],
///   "filler": ["."]
/// }
/// ```
///
/// `markers` fixes the alternative order; the first token listed for an
/// alternative is the one the model emits. `filler` is optional and adds
/// vocabulary entries that are never generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedLmDocument {
    pub markers: IndexMap<String, Vec<String>>,
    pub templates: Vec<TemplateDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filler: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDocument {
    pub prefix: Vec<String>,
    pub weight: f64,
    pub pivot_beliefs: IndexMap<String, IndexMap<String, f64>>,
}

#[derive(Debug, Clone)]
pub struct Template {
    pub prefix: Vec<Token>,
    pub weight: f64,
    /// Pivot distribution per scenario, aligned with the alternative order.
    pub pivot_beliefs: IndexMap<ScenarioId, Vec<f64>>,
}

/// Validated scripted LM.
#[derive(Debug, Clone)]
pub struct ScriptedLmSpec {
    alternatives: Vec<AlternativeId>,
    markers: Vec<Vec<Token>>,
    templates: Vec<Template>,
    scenarios: Vec<ScenarioId>,
    vocabulary: Vocabulary,
    document: ScriptedLmDocument,
}

pub fn build_scripted_lm(doc: ScriptedLmDocument) -> Result<ScriptedLmSpec> {
    if doc.markers.len() < 2 {
        return Err(Error::Validation("need at least 2 alternatives".into()));
    }
    let alternatives: Vec<AlternativeId> = doc
        .markers
        .keys()
        .map(|k| AlternativeId::new(k.as_str()))
        .collect();
    let mut markers = Vec::with_capacity(alternatives.len());
    let mut marker_set = HashSet::new();
    for (alt, toks) in &doc.markers {
        if toks.is_empty() {
            return Err(Error::Validation(format!(
                "alternative `{alt}` has no marker"
            )));
        }
        let toks = toks.iter().map(Token::new).collect::<Result<Vec<_>>>()?;
        for t in &toks {
            if !marker_set.insert(t.clone()) {
                return Err(Error::Validation(format!(
                    "marker {t:?} is used more than once"
                )));
            }
        }
        markers.push(toks);
    }

    if doc.templates.is_empty() {
        return Err(Error::Validation("need at least one template".into()));
    }
    let total_weight: f64 = doc.templates.iter().map(|t| t.weight).sum();
    if (total_weight - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Validation(format!(
            "template weights sum to {total_weight}, not 1"
        )));
    }

    let scenarios: Vec<ScenarioId> = doc.templates[0]
        .pivot_beliefs
        .keys()
        .map(|s| ScenarioId::new(s.as_str()))
        .collect();
    if scenarios.is_empty() {
        return Err(Error::Validation("templates carry no scenarios".into()));
    }
    let alt_index: HashMap<&str, usize> = doc
        .markers
        .keys()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();

    let mut templates = Vec::with_capacity(doc.templates.len());
    for (ti, t) in doc.templates.iter().enumerate() {
        if !(t.weight > 0.0 && t.weight <= 1.0) {
            return Err(Error::Validation(format!(
                "template {ti} weight {} outside (0, 1]",
                t.weight
            )));
        }
        let prefix = t
            .prefix
            .iter()
            .map(Token::new)
            .collect::<Result<Vec<_>>>()?;
        if let Some(m) = prefix.iter().find(|tok| marker_set.contains(*tok)) {
            return Err(Error::Validation(format!(
                "template {ti} prefix contains marker token {m:?}"
            )));
        }
        if t.pivot_beliefs.len() != scenarios.len()
            || scenarios
                .iter()
                .any(|s| !t.pivot_beliefs.contains_key(s.as_str()))
        {
            return Err(Error::Validation(format!(
                "template {ti} does not cover the same scenarios as template 0"
            )));
        }
        let mut beliefs = IndexMap::with_capacity(scenarios.len());
        for s in &scenarios {
            let row = &t.pivot_beliefs[s.as_str()];
            let mut values = vec![0.0; alternatives.len()];
            for (alt, &p) in row {
                let &i = alt_index.get(alt.as_str()).ok_or_else(|| {
                    Error::Validation(format!("template {ti}: unknown alternative `{alt}`"))
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "template {ti}, scenario {s}: probability {p} outside [0, 1]"
                    )));
                }
                values[i] = p;
            }
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Validation(format!(
                    "template {ti}, scenario {s}: pivot belief sums to {sum}, not 1"
                )));
            }
            beliefs.insert(s.clone(), values);
        }
        templates.push(Template {
            prefix,
            weight: t.weight,
            pivot_beliefs: beliefs,
        });
    }

    // Vocabulary: markers, then prefix tokens by first appearance, then filler,
    // then padding.
    let mut vocab: Vec<Token> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |t: Token, vocab: &mut Vec<Token>| {
        if seen.insert(t.clone()) {
            vocab.push(t);
        }
    };
    for t in markers.iter().flatten() {
        push(t.clone(), &mut vocab);
    }
    for t in templates.iter().flat_map(|t| t.prefix.iter()) {
        push(t.clone(), &mut vocab);
    }
    for f in &doc.filler {
        push(Token::new(f)?, &mut vocab);
    }
    let mut pad = 0;
    while vocab.len() < MIN_VOCAB {
        push(Token::new(format!("<unused_{pad}>"))?, &mut vocab);
        pad += 1;
    }
    let vocabulary = Vocabulary::new(vocab)?;

    Ok(ScriptedLmSpec {
        alternatives,
        markers,
        templates,
        scenarios,
        vocabulary,
        document: doc,
    })
}

impl ScriptedLmSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ScriptedLmDocument = serde_json::from_str(s)
            .map_err(|e| Error::Schema(format!("scripted LM document: {e}")))?;
        build_scripted_lm(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn document(&self) -> &ScriptedLmDocument {
        &self.document
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document).expect("document serializes")
    }

    pub fn alternatives(&self) -> &[AlternativeId] {
        &self.alternatives
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn scenarios(&self) -> &[ScenarioId] {
        &self.scenarios
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Marker tokens of each alternative; the first one is emitted.
    pub fn markers(&self) -> &[Vec<Token>] {
        &self.markers
    }

    /// Alternative set for pivot detection on this model's output: every
    /// marker token is a one-token marker of its alternative.
    pub fn alternative_set(&self) -> AlternativeSet {
        AlternativeSet::new(
            self.alternatives
                .iter()
                .cloned()
                .zip(
                    self.markers
                        .iter()
                        .map(|ms| ms.iter().map(|m| vec![m.clone()]).collect()),
                )
                .collect(),
        )
        .expect("scripted LM markers are disjoint single tokens")
    }

    fn scenario_index(&self, scenario: &ScenarioId) -> Result<usize> {
        self.scenarios
            .iter()
            .position(|s| s == scenario)
            .ok_or_else(|| Error::UnknownScenario(scenario.to_string()))
    }

    /// Distribution of the template drawn at the given temperature.
    pub fn template_distribution(&self, temperature: f64) -> Vec<f64> {
        let w: Vec<f64> = self.templates.iter().map(|t| t.weight).collect();
        temper(&w, temperature)
    }

    /// Exact choice distribution over alternatives at a temperature: mixture
    /// of tempered pivot beliefs under tempered template weights.
    pub fn choice_distribution(&self, scenario: &ScenarioId, temperature: f64) -> Result<Vec<f64>> {
        self.scenario_index(scenario)?;
        let weights = self.template_distribution(temperature);
        let mut out = vec![0.0; self.alternatives.len()];
        for (t, w) in self.templates.iter().zip(&weights) {
            let b = temper(&t.pivot_beliefs[scenario], temperature);
            for (o, p) in out.iter_mut().zip(b) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// Compile the per-scenario sampling tables for a configuration.
    pub fn sampler(
        &self,
        scenario: &ScenarioId,
        config: &SamplingConfig,
    ) -> Result<ScenarioSampler> {
        config.validate()?;
        self.scenario_index(scenario)?;
        if config.top_k_recorded > self.vocabulary.len() {
            return Err(Error::Validation(format!(
                "top_k_recorded {} exceeds vocabulary size {}",
                config.top_k_recorded,
                self.vocabulary.len()
            )));
        }
        let emitted: Vec<Token> = self.markers.iter().map(|m| m[0].clone()).collect();
        let template_cdf = self.template_distribution(config.temperature);
        let mut tables = Vec::with_capacity(self.templates.len());
        for (ti, t) in self.templates.iter().enumerate() {
            let positions = (0..=t.prefix.len())
                .map(|pos| self.top_k_at(ti, pos, scenario, config.top_k_recorded))
                .collect();
            tables.push(TemplateTable {
                prefix: t.prefix.clone(),
                pivot: temper(&t.pivot_beliefs[scenario], config.temperature),
                top_logprobs: positions,
            });
        }
        Ok(ScenarioSampler {
            scenario: scenario.clone(),
            config: *config,
            emitted,
            template_weights: template_cdf,
            tables,
        })
    }

    /// Next-token distribution (over the vocabulary) after the first `pos`
    /// tokens of template `ti`.
    fn next_token_distribution(&self, ti: usize, pos: usize, scenario: &ScenarioId) -> Vec<f64> {
        let history = &self.templates[ti].prefix[..pos];
        let mut mass = vec![0.0; self.vocabulary.len()];
        let mut total = 0.0;
        for t in &self.templates {
            if t.prefix.len() < pos || &t.prefix[..pos] != history {
                continue;
            }
            total += t.weight;
            if t.prefix.len() > pos {
                let i = self
                    .vocabulary
                    .index_of(&t.prefix[pos])
                    .expect("prefix token in vocabulary");
                mass[i] += t.weight;
            } else {
                for (alt, p) in t.pivot_beliefs[scenario].iter().enumerate() {
                    let i = self
                        .vocabulary
                        .index_of(&self.markers[alt][0])
                        .expect("marker in vocabulary");
                    mass[i] += t.weight * p;
                }
            }
        }
        mass.iter_mut().for_each(|m| *m /= total);
        mass
    }

    fn top_k_at(&self, ti: usize, pos: usize, scenario: &ScenarioId, k: usize) -> Vec<TopEntry> {
        let dist = self.next_token_distribution(ti, pos, scenario);
        let mut order: Vec<usize> = (0..dist.len()).collect();
        // Stable sort keeps vocabulary order among equal probabilities.
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
        order
            .into_iter()
            .take(k)
            .map(|i| (self.vocabulary.tokens()[i].clone(), dist[i].ln()))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct TemplateTable {
    prefix: Vec<Token>,
    pivot: Vec<f64>,
    top_logprobs: Vec<Vec<TopEntry>>,
}

/// Precomputed sampling tables for one scenario and configuration.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    scenario: ScenarioId,
    config: SamplingConfig,
    emitted: Vec<Token>,
    template_weights: Vec<f64>,
    tables: Vec<TemplateTable>,
}

/// What a generated run resolved to, as known by the oracle itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleDraw {
    pub template: usize,
    pub alternative: usize,
}

impl ScenarioSampler {
    pub fn scenario(&self) -> &ScenarioId {
        &self.scenario
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    /// Draw template then pivot marker from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> OracleDraw {
        let template = sample_index(&self.template_weights, rng);
        let alternative = sample_index(&self.tables[template].pivot, rng);
        OracleDraw {
            template,
            alternative,
        }
    }

    pub fn materialize(&self, draw: OracleDraw, run_index: u64) -> GenerationRun {
        let table = &self.tables[draw.template];
        let mut tokens = table.prefix.clone();
        tokens.push(self.emitted[draw.alternative].clone());
        GenerationRun {
            scenario: self.scenario.clone(),
            run_index,
            tokens,
            top_logprobs: table.top_logprobs.clone(),
            seed: self.config.seed,
            temperature: self.config.temperature,
            text: None,
        }
    }

    /// Run `run_index` on its own derived stream.
    pub fn generate(&self, run_index: u64) -> GenerationRun {
        let mut rng = run_stream(self.config.seed, &self.scenario, run_index);
        self.generate_with(&mut rng, run_index)
    }

    pub fn generate_with<R: Rng + ?Sized>(&self, rng: &mut R, run_index: u64) -> GenerationRun {
        let draw = self.draw(rng);
        self.materialize(draw, run_index)
    }
}

/// The child stream for one run.
pub fn run_stream(seed: u64, scenario: &ScenarioId, run_index: u64) -> rng::StreamRng {
    rng::stream(
        seed,
        Purpose::Generation,
        &[scenario.stream_key(), run_index],
    )
}

/// Generate one run with the given generator state.
pub fn generate_run<R: Rng + ?Sized>(
    lm: &ScriptedLmSpec,
    scenario: &ScenarioId,
    config: &SamplingConfig,
    rng: &mut R,
    run_index: u64,
) -> Result<GenerationRun> {
    Ok(lm.sampler(scenario, config)?.generate_with(rng, run_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(value: serde_json::Value) -> ScriptedLmDocument {
        serde_json::from_value(value).unwrap()
    }

    fn two_template() -> ScriptedLmSpec {
        build_scripted_lm(doc(json!({
            "markers": {"A": ["a"], "B": ["b"]},
            "templates": [
                {"prefix": ["x", "y", "z", "w"], "weight": 0.6, "pivot_beliefs": {"s": {"A": 0.9, "B": 0.1}}},
                {"prefix": ["x", "y", "q", "r", "t", "u", "v"], "weight": 0.4, "pivot_beliefs": {"s": {"A": 0.2, "B": 0.8}}}
            ]
        })))
        .unwrap()
    }

    #[test]
    fn accepts_valid_and_rejects_invalid_documents() {
        let ok = json!({
            "markers": {"A": ["a"], "B": ["b"]},
            "templates": [
                {"prefix": ["x"], "weight": 0.5, "pivot_beliefs": {"s": {"A": 0.5, "B": 0.5}}},
                {"prefix": ["y"], "weight": 0.5, "pivot_beliefs": {"s": {"A": 1.0}}}
            ]
        });
        assert!(build_scripted_lm(doc(ok)).is_ok());

        let bad_weights = json!({
            "markers": {"A": ["a"], "B": ["b"]},
            "templates": [
                {"prefix": ["x"], "weight": 0.5, "pivot_beliefs": {"s": {"A": 1.0}}},
                {"prefix": ["y"], "weight": 0.6, "pivot_beliefs": {"s": {"A": 1.0}}}
            ]
        });
        assert!(matches!(
            build_scripted_lm(doc(bad_weights)),
            Err(Error::Validation(_))
        ));

        let bad_row = json!({
            "markers": {"A": ["a"], "B": ["b"], "C": ["c"]},
            "templates": [
                {"prefix": ["x"], "weight": 1.0, "pivot_beliefs": {"s": {"A": 0.6, "B": 0.3, "C": 0.2}}}
            ]
        });
        assert!(matches!(
            build_scripted_lm(doc(bad_row)),
            Err(Error::Validation(_))
        ));

        let marker_in_prefix = json!({
            "markers": {"A": ["a"], "B": ["b"]},
            "templates": [
                {"prefix": ["x", "a"], "weight": 1.0, "pivot_beliefs": {"s": {"A": 1.0}}}
            ]
        });
        assert!(matches!(
            build_scripted_lm(doc(marker_in_prefix)),
            Err(Error::Validation(_))
        ));

        let unknown_field = r#"{"markers": {"A": ["a"], "B": ["b"]}, "templates": [], "extra": 1}"#;
        assert!(matches!(
            ScriptedLmSpec::from_json_str(unknown_field),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn single_template_run_is_prefix_plus_marker() {
        let lm = build_scripted_lm(doc(json!({
            "markers": {"A": ["a"], "B": ["b"]},
            "templates": [{"prefix": ["I", " pick"], "weight": 1.0, "pivot_beliefs": {"s": {"A": 0.5, "B": 0.5}}}]
        })))
        .unwrap();
        let sampler = lm.sampler(&"s".into(), &SamplingConfig::default()).unwrap();
        for r in 0..50 {
            let run = sampler.generate(r);
            assert_eq!(run.tokens.len(), 3);
            assert_eq!(run.tokens[0].as_str(), "I");
            assert_eq!(run.tokens[1].as_str(), " pick");
            assert!(matches!(run.tokens[2].as_str(), "a" | "b"));
            run.validate().unwrap();
            assert!(run.top_logprobs.iter().all(|p| p.len() == 20));
        }
    }

    #[test]
    fn unknown_scenario_and_oversized_top_k_rejected() {
        let lm = two_template();
        assert!(matches!(
            lm.sampler(&"nope".into(), &SamplingConfig::default()),
            Err(Error::UnknownScenario(_))
        ));
        let cfg = SamplingConfig {
            top_k_recorded: 21,
            ..Default::default()
        };
        assert!(lm.sampler(&"s".into(), &cfg).is_err());
    }

    #[test]
    fn recorded_distribution_is_the_mixture_conditional() {
        let lm = two_template();
        let sampler = lm.sampler(&"s".into(), &SamplingConfig::default()).unwrap();
        let run = sampler.materialize(
            OracleDraw {
                template: 0,
                alternative: 0,
            },
            0,
        );
        // position 2 branches between the templates: z (.6) vs q (.4)
        let at2: HashMap<&str, f64> = run.top_logprobs[2]
            .iter()
            .map(|(t, lp)| (t.as_str(), lp.exp()))
            .collect();
        assert!((at2["z"] - 0.6).abs() < 1e-15);
        assert!((at2["q"] - 0.4).abs() < 1e-15);
        // position 0 is certain
        assert_eq!(run.top_logprobs[0][0].0.as_str(), "x");
        assert_eq!(run.top_logprobs[0][0].1, 0.0);
        // pivot position carries template 0's belief
        let piv: HashMap<&str, f64> = run.top_logprobs[4]
            .iter()
            .map(|(t, lp)| (t.as_str(), lp.exp()))
            .collect();
        assert!((piv["a"] - 0.9).abs() < 1e-15);
        assert!((piv["b"] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn template_frequency_and_pivot_position_match_weights() {
        let lm = two_template();
        let sampler = lm
            .sampler(
                &"s".into(),
                &SamplingConfig {
                    seed: 5,
                    ..Default::default()
                },
            )
            .unwrap();
        let n = 50_000u64;
        let mut first = 0usize;
        let mut pivot_sum = 0usize;
        for r in 0..n {
            let run = sampler.generate(r);
            if run.tokens.len() == 5 {
                first += 1;
            }
            pivot_sum += run.tokens.len() - 1;
        }
        let nf = n as f64;
        let freq = first as f64 / nf;
        assert!((freq - 0.6).abs() < 3.0 * (0.24 / nf).sqrt(), "freq {freq}");
        // pivot index 4 w.p. .6, 7 w.p. .4: mean 5.2, sd sqrt(.24)*3
        let mean = pivot_sum as f64 / nf;
        let sigma = (0.24f64 * 9.0 / nf).sqrt();
        assert!((mean - 5.2).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn greedy_generation_is_deterministic() {
        let lm = two_template();
        let sampler = lm
            .sampler(
                &"s".into(),
                &SamplingConfig {
                    temperature: 0.0,
                    seed: 3,
                    ..Default::default()
                },
            )
            .unwrap();
        for r in 0..20 {
            let run = sampler.generate(r);
            assert_eq!(run.tokens.len(), 5);
            assert_eq!(run.tokens[4].as_str(), "a");
        }
    }

    #[test]
    fn choice_distribution_mixes_tempered_beliefs() {
        let lm = two_template();
        let d = lm.choice_distribution(&"s".into(), 1.0).unwrap();
        assert!((d[0] - (0.6 * 0.9 + 0.4 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn document_round_trips_through_json() {
        let lm = two_template();
        let again = ScriptedLmSpec::from_json_str(&lm.to_json()).unwrap();
        assert_eq!(again.document(), lm.document());
    }
}
