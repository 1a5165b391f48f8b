use rayon::prelude::*;

use crate::belief::{extract, AlternativeSet, ExclusionReason, ExtractionDiagnostics};
use crate::error::{Error, Result};
use crate::estimation::{RunPool, RunRecord};
use crate::ids::ScenarioId;
use crate::scripted::ScriptedLmSpec;
use crate::token::{GenerationRun, SamplingConfig};

/// Where runs come from.
#[derive(Debug, Clone, Copy)]
pub enum RunSource<'a> {
    Oracle(&'a ScriptedLmSpec),
    /// Previously recorded runs, e.g. loaded from JSONL.
    Runs(&'a [GenerationRun]),
}

/// Give up on a scenario after this many attempts per requested run.
const MAX_ATTEMPT_FACTOR: u64 = 10;

/// Turn one run into a record, or the reason it is excluded.
pub fn record_from_run(
    run: &GenerationRun,
    alts: &AlternativeSet,
) -> Result<std::result::Result<RunRecord, ExclusionReason>> {
    match extract(run, alts) {
        Ok(e) => Ok(Ok(RunRecord {
            scenario: run.scenario.clone(),
            run_index: run.run_index,
            choice: e.pivot.alternative,
            belief: e.belief,
            pivot_index: e.pivot.pivot_index,
        })),
        Err(err) => match ExclusionReason::of(&err) {
            Some(reason) => Ok(Err(reason)),
            None => Err(err),
        },
    }
}

/// Extract every run, keeping the order given.
pub fn pool_from_runs<'a>(
    runs: impl IntoIterator<Item = &'a GenerationRun>,
    alts: &AlternativeSet,
) -> Result<RunPool> {
    let mut pool = RunPool::new(alts.alternatives().to_vec());
    for run in runs {
        pool.ensure_scenario(&run.scenario);
        match record_from_run(run, alts)? {
            Ok(rec) => {
                pool.diagnostics.record_used(alts, &rec.belief);
                pool.push(rec)?;
            }
            Err(reason) => pool
                .diagnostics
                .record_excluded(&run.scenario, run.run_index, reason),
        }
    }
    pool.validate()?;
    Ok(pool)
}

/// Collect exactly `runs_per_scenario` usable records for every scenario.
/// Oracle runs are generated in parallel, each on its own derived stream;
/// recorded runs are taken in file order.
pub fn collect_runs(
    source: RunSource<'_>,
    scenarios: &[ScenarioId],
    runs_per_scenario: usize,
    config: &SamplingConfig,
    alts: &AlternativeSet,
) -> Result<RunPool> {
    if runs_per_scenario == 0 {
        return Err(Error::Validation(
            "runs_per_scenario must be at least 1".into(),
        ));
    }
    let mut pool = RunPool::new(alts.alternatives().to_vec());
    for s in scenarios {
        pool.ensure_scenario(s);
        let (records, diag) = match source {
            RunSource::Oracle(lm) => collect_oracle(lm, s, runs_per_scenario, config, alts)?,
            RunSource::Runs(runs) => collect_recorded(runs, s, runs_per_scenario, alts)?,
        };
        pool.extend(records)?;
        pool.diagnostics.merge(diag);
    }
    pool.validate()?;
    Ok(pool)
}

fn collect_oracle(
    lm: &ScriptedLmSpec,
    scenario: &ScenarioId,
    n: usize,
    config: &SamplingConfig,
    alts: &AlternativeSet,
) -> Result<(Vec<RunRecord>, ExtractionDiagnostics)> {
    let sampler = lm.sampler(scenario, config)?;
    let mut records = Vec::with_capacity(n);
    let mut diag = ExtractionDiagnostics::default();
    let mut next = 0u64;
    let limit = n as u64 * MAX_ATTEMPT_FACTOR;
    while records.len() < n {
        if next >= limit {
            return Err(Error::InsufficientData(format!(
                "scenario {scenario}: only {} usable runs after {next} attempts",
                records.len()
            )));
        }
        let batch = (n - records.len()) as u64;
        let results: Vec<_> = (next..next + batch)
            .into_par_iter()
            .map(|r| record_from_run(&sampler.generate(r), alts).map(|res| (r, res)))
            .collect::<Result<_>>()?;
        next += batch;
        for (r, res) in results {
            match res {
                Ok(rec) => {
                    diag.record_used(alts, &rec.belief);
                    records.push(rec);
                }
                Err(reason) => diag.record_excluded(scenario, r, reason),
            }
        }
    }
    Ok((records, diag))
}

fn collect_recorded(
    runs: &[GenerationRun],
    scenario: &ScenarioId,
    n: usize,
    alts: &AlternativeSet,
) -> Result<(Vec<RunRecord>, ExtractionDiagnostics)> {
    let mut records = Vec::with_capacity(n);
    let mut diag = ExtractionDiagnostics::default();
    for run in runs.iter().filter(|r| &r.scenario == scenario) {
        if records.len() == n {
            break;
        }
        match record_from_run(run, alts)? {
            Ok(rec) => {
                diag.record_used(alts, &rec.belief);
                records.push(rec);
            }
            Err(reason) => diag.record_excluded(scenario, run.run_index, reason),
        }
    }
    if records.len() < n {
        return Err(Error::InsufficientData(format!(
            "scenario {scenario}: {} usable runs recorded, {n} requested",
            records.len()
        )));
    }
    Ok((records, diag))
}
