//! Pivot detection, model choice and model belief.
//!
//! Markers may span several tokens. Each marker is cut down to its shortest
//! prefix that no other alternative's marker starts with; the pivot is the
//! first position where one of those resolved prefixes matches. Belief is
//! read from the top-K list recorded at the pivot position using the first
//! token of every marker.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AlternativeId, ScenarioId};
use crate::token::{GenerationRun, Token, SIMPLEX_TOL};

/// Pivot-position alternative mass below this means the pivot was misdetected.
pub const MIN_ALTERNATIVE_MASS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeSetDocument {
    pub alternatives: Vec<String>,
    pub markers: IndexMap<String, Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub case_fold: bool,
}

#[derive(Debug, Clone)]
struct ResolvedMarker {
    alternative: usize,
    keys: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AlternativeSet {
    alternatives: Vec<AlternativeId>,
    markers: Vec<Vec<Vec<Token>>>,
    case_fold: bool,
    /// Resolved prefixes grouped by the key of their first token.
    resolved: HashMap<String, Vec<ResolvedMarker>>,
    /// Full markers, for spotting sequences cut off mid-marker.
    full: Vec<ResolvedMarker>,
    /// First-token key of any marker -> owning alternatives.
    first_token_owners: HashMap<String, Vec<usize>>,
}

impl AlternativeSet {
    pub fn new(entries: Vec<(AlternativeId, Vec<Vec<Token>>)>) -> Result<Self> {
        Self::build(entries, false)
    }

    /// Same set, matching token text case-insensitively when `on`.
    pub fn with_case_folding(self, on: bool) -> Result<Self> {
        let entries = self.alternatives.into_iter().zip(self.markers).collect();
        Self::build(entries, on)
    }

    fn build(entries: Vec<(AlternativeId, Vec<Vec<Token>>)>, case_fold: bool) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 alternatives, got {}",
                entries.len()
            )));
        }
        let (alternatives, markers): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        for (i, a) in alternatives.iter().enumerate() {
            if alternatives[..i].contains(a) {
                return Err(Error::Validation(format!("duplicate alternative `{a}`")));
            }
        }
        let key = |t: &Token| -> String {
            if case_fold {
                t.as_str().to_lowercase()
            } else {
                t.as_str().to_owned()
            }
        };
        let mut full = Vec::new();
        for (a, ms) in markers.iter().enumerate() {
            if ms.is_empty() {
                return Err(Error::Validation(format!(
                    "alternative `{}` has no marker",
                    alternatives[a]
                )));
            }
            for m in ms {
                if m.is_empty() {
                    return Err(Error::Validation(format!(
                        "alternative `{}` has an empty marker",
                        alternatives[a]
                    )));
                }
                full.push(ResolvedMarker {
                    alternative: a,
                    keys: m.iter().map(key).collect(),
                });
            }
        }

        let mut resolved: HashMap<String, Vec<ResolvedMarker>> = HashMap::new();
        for m in &full {
            let len = (1..=m.keys.len())
                .find(|&l| {
                    !full
                        .iter()
                        .any(|o| o.alternative != m.alternative && o.keys.len() >= l && o.keys[..l] == m.keys[..l])
                })
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "marker {:?} of `{}` is not distinguishable from another alternative's marker",
                        m.keys, alternatives[m.alternative]
                    ))
                })?;
            let r = ResolvedMarker {
                alternative: m.alternative,
                keys: m.keys[..len].to_vec(),
            };
            let bucket = resolved.entry(r.keys[0].clone()).or_default();
            if !bucket
                .iter()
                .any(|b| b.alternative == r.alternative && b.keys == r.keys)
            {
                bucket.push(r);
            }
        }
        for bucket in resolved.values_mut() {
            bucket.sort_by_key(|r| r.keys.len());
        }

        let mut first_token_owners: HashMap<String, Vec<usize>> = HashMap::new();
        for m in &full {
            let owners = first_token_owners.entry(m.keys[0].clone()).or_default();
            if !owners.contains(&m.alternative) {
                owners.push(m.alternative);
            }
        }

        Ok(Self {
            alternatives,
            markers,
            case_fold,
            resolved,
            full,
            first_token_owners,
        })
    }

    pub fn from_document(doc: AlternativeSetDocument) -> Result<Self> {
        let mut markers = doc.markers;
        if let Some(extra) = markers.keys().find(|k| !doc.alternatives.contains(k)) {
            return Err(Error::Validation(format!(
                "markers given for unknown alternative `{extra}`"
            )));
        }
        let entries = doc
            .alternatives
            .iter()
            .map(|a| {
                let ms = markers.shift_remove(a).unwrap_or_default();
                let ms = ms
                    .into_iter()
                    .map(|m| m.iter().map(Token::new).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok((AlternativeId::new(a.as_str()), ms))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::build(entries, doc.case_fold)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: AlternativeSetDocument = serde_json::from_str(s)
            .map_err(|e| Error::Schema(format!("alternative set document: {e}")))?;
        Self::from_document(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> AlternativeSetDocument {
        AlternativeSetDocument {
            alternatives: self.alternatives.iter().map(|a| a.0.clone()).collect(),
            markers: self
                .alternatives
                .iter()
                .zip(&self.markers)
                .map(|(a, ms)| {
                    (
                        a.0.clone(),
                        ms.iter()
                            .map(|m| m.iter().map(|t| t.as_str().to_owned()).collect())
                            .collect(),
                    )
                })
                .collect(),
            case_fold: self.case_fold,
        }
    }

    pub fn alternatives(&self) -> &[AlternativeId] {
        &self.alternatives
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.is_empty()
    }

    pub fn index_of(&self, alt: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a.as_str() == alt)
    }

    pub fn markers(&self, alt: usize) -> &[Vec<Token>] {
        &self.markers[alt]
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    fn key<'a>(&self, t: &'a Token) -> Cow<'a, str> {
        if self.case_fold {
            Cow::Owned(t.as_str().to_lowercase())
        } else {
            Cow::Borrowed(t.as_str())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotResult {
    pub pivot_index: usize,
    pub alternative: usize,
    pub matched_marker: Vec<Token>,
}

/// Earliest position at which a resolved marker prefix matches.
pub fn detect_pivot(tokens: &[Token], alts: &AlternativeSet) -> Result<PivotResult> {
    if tokens.is_empty() {
        return Err(Error::Domain("empty token sequence".into()));
    }
    let keys: Vec<Cow<'_, str>> = tokens.iter().map(|t| alts.key(t)).collect();
    let mut ambiguous_tail: Option<(usize, Vec<String>)> = None;
    for i in 0..keys.len() {
        if let Some(bucket) = alts.resolved.get(keys[i].as_ref()) {
            let mut hit: Option<&ResolvedMarker> = None;
            let mut others = Vec::new();
            for r in bucket {
                let end = i + r.keys.len();
                if end <= keys.len() && r.keys.iter().zip(&keys[i..end]).all(|(a, b)| a == b) {
                    match hit {
                        None => hit = Some(r),
                        Some(h) if h.alternative != r.alternative => others.push(r.alternative),
                        Some(_) => {}
                    }
                }
            }
            if let Some(h) = hit {
                if !others.is_empty() {
                    let mut candidates = vec![alts.alternatives[h.alternative].to_string()];
                    candidates.extend(others.iter().map(|&a| alts.alternatives[a].to_string()));
                    return Err(Error::AmbiguousPivot {
                        position: i,
                        candidates,
                    });
                }
                return Ok(PivotResult {
                    pivot_index: i,
                    alternative: h.alternative,
                    matched_marker: tokens[i..i + h.keys.len()].to_vec(),
                });
            }
        }
        // A sequence that stops inside a marker shared by several alternatives
        // never resolves.
        if ambiguous_tail.is_none() {
            let tail = &keys[i..];
            let mut owners: Vec<usize> = alts
                .full
                .iter()
                .filter(|m| {
                    m.keys.len() > tail.len() && m.keys.iter().zip(tail).all(|(a, b)| a == b)
                })
                .map(|m| m.alternative)
                .collect();
            owners.sort_unstable();
            owners.dedup();
            if owners.len() >= 2 {
                ambiguous_tail = Some((
                    i,
                    owners
                        .iter()
                        .map(|&a| alts.alternatives[a].to_string())
                        .collect(),
                ));
            }
        }
    }
    match ambiguous_tail {
        Some((position, candidates)) => Err(Error::AmbiguousPivot {
            position,
            candidates,
        }),
        None => Err(Error::NoPivot),
    }
}

/// Normalized pivot-position probabilities over the alternatives, in
/// alternative order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    pub values: Vec<f64>,
    /// Alternatives none of whose marker tokens appeared in the recorded top-K.
    pub truncated: Vec<bool>,
}

impl BeliefVector {
    pub fn new(values: Vec<f64>, truncated: Vec<bool>) -> Result<Self> {
        if values.len() != truncated.len() {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: truncated.len(),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(
                "belief components must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Validation(format!("belief sums to {sum}, not 1")));
        }
        Ok(Self { values, truncated })
    }

    /// Degenerate belief on one alternative.
    pub fn one_hot(n: usize, alt: usize) -> Self {
        let mut values = vec![0.0; n];
        values[alt] = 1.0;
        Self {
            values,
            truncated: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything read off one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub pivot: PivotResult,
    pub belief: BeliefVector,
    /// Pre-normalization probability mass on the alternatives.
    pub alternative_mass: f64,
}

pub fn extract_choice(run: &GenerationRun, alts: &AlternativeSet) -> Result<AlternativeId> {
    let pivot = detect_pivot(&run.tokens, alts)?;
    Ok(alts.alternatives[pivot.alternative].clone())
}

pub fn extract_belief(run: &GenerationRun, alts: &AlternativeSet) -> Result<BeliefVector> {
    Ok(extract(run, alts)?.belief)
}

/// Pivot, choice and belief in one pass.
pub fn extract(run: &GenerationRun, alts: &AlternativeSet) -> Result<Extraction> {
    let pivot = detect_pivot(&run.tokens, alts)?;
    let entries = run
        .top_logprobs
        .get(pivot.pivot_index)
        .filter(|e| !e.is_empty())
        .ok_or(Error::MissingTopK(pivot.pivot_index))?;
    let n = alts.len();
    let mut mass = vec![0.0; n];
    let mut present = vec![false; n];
    for (tok, lp) in entries {
        if let Some(owners) = alts.first_token_owners.get(alts.key(tok).as_ref()) {
            // A first token shared by several alternatives is split evenly.
            let share = lp.exp() / owners.len() as f64;
            for &a in owners {
                mass[a] += share;
                present[a] = true;
            }
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total >= MIN_ALTERNATIVE_MASS) {
        return Err(Error::MassTooSmall {
            position: pivot.pivot_index,
            mass: total,
        });
    }
    let values = mass.iter().map(|m| m / total).collect();
    Ok(Extraction {
        pivot,
        belief: BeliefVector {
            values,
            truncated: present.iter().map(|p| !p).collect(),
        },
        alternative_mass: total,
    })
}

/// Why a run was left out of the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoPivot,
    AmbiguousPivot,
    MassTooSmall,
    MissingTopK,
}

impl ExclusionReason {
    pub fn of(err: &Error) -> Option<Self> {
        match err {
            Error::NoPivot => Some(Self::NoPivot),
            Error::AmbiguousPivot { .. } => Some(Self::AmbiguousPivot),
            Error::MassTooSmall { .. } => Some(Self::MassTooSmall),
            Error::MissingTopK(_) => Some(Self::MissingTopK),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRun {
    pub scenario: ScenarioId,
    pub run: u64,
    pub reason: ExclusionReason,
}

/// Extraction bookkeeping: excluded runs and top-K truncation counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub runs_seen: usize,
    pub runs_used: usize,
    pub excluded: Vec<ExcludedRun>,
    pub excluded_by_reason: BTreeMap<ExclusionReason, usize>,
    /// Alternative -> number of used runs where it was missing from the pivot top-K.
    pub truncated: BTreeMap<String, usize>,
}

impl ExtractionDiagnostics {
    pub fn record_used(&mut self, alts: &AlternativeSet, belief: &BeliefVector) {
        self.runs_seen += 1;
        self.runs_used += 1;
        for (a, &t) in belief.truncated.iter().enumerate() {
            if t {
                *self
                    .truncated
                    .entry(alts.alternatives[a].to_string())
                    .or_default() += 1;
            }
        }
    }

    pub fn record_excluded(&mut self, scenario: &ScenarioId, run: u64, reason: ExclusionReason) {
        self.runs_seen += 1;
        *self.excluded_by_reason.entry(reason).or_default() += 1;
        self.excluded.push(ExcludedRun {
            scenario: scenario.clone(),
            run,
            reason,
        });
    }

    pub fn merge(&mut self, other: ExtractionDiagnostics) {
        self.runs_seen += other.runs_seen;
        self.runs_used += other.runs_used;
        self.excluded.extend(other.excluded);
        for (k, v) in other.excluded_by_reason {
            *self.excluded_by_reason.entry(k).or_default() += v;
        }
        for (k, v) in other.truncated {
            *self.truncated.entry(k).or_default() += v;
        }
    }
}
