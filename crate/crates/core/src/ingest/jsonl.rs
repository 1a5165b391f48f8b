//! Versioned JSON-lines files for generation runs and extracted pools.
//!
//! Run line: `{"v":1,"scenario":..,"run":..,"tokens":[..],"top_logprobs":[[["tok",lp],..],..],"temperature":..,"seed":..,"text":..}`
//! with `null` for a zero-probability entry and `text` omitted when absent.
//!
//! Pool file: an optional header line
//! `{"v":1,"kind":"pool_header","alternatives":[..],"scenarios":[..],"diagnostics":{..}}`
//! then record lines
//! `{"v":1,"scenario":..,"run":..,"choice":"alt","belief":[["alt",p],..],"truncated":["alt",..],"pivot":..}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::belief::{BeliefVector, ExtractionDiagnostics};
use crate::error::{Error, Result};
use crate::estimation::{RunPool, RunRecord};
use crate::ids::{AlternativeId, ScenarioId};
use crate::token::{GenerationRun, Token};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct RunLine {
    v: u64,
    scenario: ScenarioId,
    run: u64,
    tokens: Vec<String>,
    top_logprobs: Vec<Vec<(String, Option<f64>)>>,
    temperature: f64,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

impl RunLine {
    fn from_run(run: &GenerationRun) -> Self {
        Self {
            v: SCHEMA_VERSION,
            scenario: run.scenario.clone(),
            run: run.run_index,
            tokens: run.tokens.iter().map(|t| t.to_string()).collect(),
            top_logprobs: run
                .top_logprobs
                .iter()
                .map(|pos| {
                    pos.iter()
                        .map(|(t, lp)| (t.to_string(), lp.is_finite().then_some(*lp)))
                        .collect()
                })
                .collect(),
            temperature: run.temperature,
            seed: run.seed,
            text: run.text.clone(),
        }
    }

    fn into_run(self) -> Result<GenerationRun> {
        let tokens = self
            .tokens
            .iter()
            .map(Token::new)
            .collect::<Result<Vec<_>>>()?;
        let top_logprobs = self
            .top_logprobs
            .into_iter()
            .map(|pos| {
                pos.into_iter()
                    .map(|(t, lp)| Ok((Token::new(t)?, lp.unwrap_or(f64::NEG_INFINITY))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let run = GenerationRun {
            scenario: self.scenario,
            run_index: self.run,
            tokens,
            top_logprobs,
            seed: self.seed,
            temperature: self.temperature,
            text: self.text,
        };
        run.validate()?;
        Ok(run)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolHeader {
    v: u64,
    kind: String,
    alternatives: Vec<AlternativeId>,
    scenarios: Vec<ScenarioId>,
    diagnostics: ExtractionDiagnostics,
}

const POOL_HEADER_KIND: &str = "pool_header";

#[derive(Debug, Serialize, Deserialize)]
struct PoolLine {
    v: u64,
    scenario: ScenarioId,
    run: u64,
    choice: AlternativeId,
    belief: Vec<(AlternativeId, f64)>,
    truncated: Vec<AlternativeId>,
    pivot: usize,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Write runs, one per line. Returns the count written.
pub fn write_runs<'a, W: Write>(
    runs: impl IntoIterator<Item = &'a GenerationRun>,
    out: W,
) -> Result<usize> {
    let mut w = BufWriter::new(out);
    let mut n = 0;
    for run in runs {
        write_line(&mut w, &RunLine::from_run(run))?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn persist_runs<'a>(
    runs: impl IntoIterator<Item = &'a GenerationRun>,
    path: impl AsRef<Path>,
) -> Result<usize> {
    write_runs(runs, File::create(path)?)
}

/// Appends one run; the single writer for live collection.
pub fn append_run<W: Write>(run: &GenerationRun, out: &mut W) -> Result<()> {
    write_line(out, &RunLine::from_run(run))
}

/// Nonblank lines with their 1-based numbers, each parsed as JSON with the
/// version checked.
fn versioned_lines(path: &Path) -> Result<Vec<(usize, Value)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| corrupt(path, number, e))?;
        let v = value
            .get("v")
            .and_then(Value::as_u64)
            .ok_or_else(|| corrupt(path, number, "missing schema version field \"v\""))?;
        if v != SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found: v,
                expected: SCHEMA_VERSION,
            });
        }
        out.push((number, value));
    }
    Ok(out)
}

fn corrupt(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::CorruptLine {
        path: PathBuf::from(path),
        line,
        message: message.to_string(),
    }
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<GenerationRun>> {
    let path = path.as_ref();
    versioned_lines(path)?
        .into_iter()
        .map(|(n, value)| {
            let line: RunLine = serde_json::from_value(value).map_err(|e| corrupt(path, n, e))?;
            line.into_run().map_err(|e| corrupt(path, n, e))
        })
        .collect()
}

/// Write a pool: header, then one line per record in pool order.
pub fn write_pool<W: Write>(pool: &RunPool, out: W) -> Result<usize> {
    let mut w = BufWriter::new(out);
    let alts = pool.alternatives();
    write_line(
        &mut w,
        &PoolHeader {
            v: SCHEMA_VERSION,
            kind: POOL_HEADER_KIND.into(),
            alternatives: alts.to_vec(),
            scenarios: pool.scenario_ids().cloned().collect(),
            diagnostics: pool.diagnostics.clone(),
        },
    )?;
    let mut n = 0;
    for r in pool.iter() {
        let line = PoolLine {
            v: SCHEMA_VERSION,
            scenario: r.scenario.clone(),
            run: r.run_index,
            choice: alts[r.choice].clone(),
            belief: alts
                .iter()
                .cloned()
                .zip(r.belief.values.iter().copied())
                .collect(),
            truncated: alts
                .iter()
                .zip(&r.belief.truncated)
                .filter(|(_, t)| **t)
                .map(|(a, _)| a.clone())
                .collect(),
            pivot: r.pivot_index,
        };
        write_line(&mut w, &line)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn persist_pool(pool: &RunPool, path: impl AsRef<Path>) -> Result<usize> {
    write_pool(pool, File::create(path)?)
}

/// Load a pool. Without a header, the alternatives come from the first
/// record's belief order. An empty file is an empty pool.
pub fn load_pool(path: impl AsRef<Path>) -> Result<RunPool> {
    let path = path.as_ref();
    let mut lines = versioned_lines(path)?.into_iter().peekable();
    let mut pool = match lines.peek() {
        None => return Ok(RunPool::new(Vec::new())),
        Some((n, value)) if value.get("kind").and_then(Value::as_str) == Some(POOL_HEADER_KIND) => {
            let header: PoolHeader =
                serde_json::from_value(value.clone()).map_err(|e| corrupt(path, *n, e))?;
            lines.next();
            let mut pool = RunPool::new(header.alternatives);
            for s in &header.scenarios {
                pool.ensure_scenario(s);
            }
            pool.diagnostics = header.diagnostics;
            pool
        }
        Some((n, value)) => {
            let first: PoolLine =
                serde_json::from_value(value.clone()).map_err(|e| corrupt(path, *n, e))?;
            RunPool::new(first.belief.into_iter().map(|(a, _)| a).collect())
        }
    };
    for (n, value) in lines {
        let line: PoolLine = serde_json::from_value(value).map_err(|e| corrupt(path, n, e))?;
        let record = pool_record(&pool, line).map_err(|e| corrupt(path, n, e))?;
        pool.push(record).map_err(|e| corrupt(path, n, e))?;
    }
    pool.validate()?;
    Ok(pool)
}

fn pool_record(pool: &RunPool, line: PoolLine) -> Result<RunRecord> {
    let alts = pool.alternatives();
    if line.belief.len() != alts.len() || line.belief.iter().zip(alts).any(|((a, _), b)| a != b) {
        return Err(Error::Schema(
            "belief alternatives differ from the pool's".into(),
        ));
    }
    let choice = pool
        .alternative_index(line.choice.as_str())
        .ok_or_else(|| Error::UnknownAlternative(line.choice.to_string()))?;
    let mut truncated = vec![false; alts.len()];
    for t in &line.truncated {
        let i = pool
            .alternative_index(t.as_str())
            .ok_or_else(|| Error::UnknownAlternative(t.to_string()))?;
        truncated[i] = true;
    }
    Ok(RunRecord {
        scenario: line.scenario,
        run_index: line.run,
        choice,
        belief: BeliefVector::new(line.belief.into_iter().map(|(_, p)| p).collect(), truncated)?,
        pivot_index: line.pivot,
    })
}
