//! Share of one alternative under both measures across sampling temperatures.

use serde::{Deserialize, Serialize};

use super::collect::{collect_runs, RunSource};
use super::stats::{mean, sd};
use crate::error::{Error, Result};
use crate::estimation::Measure;
use crate::ids::ScenarioId;
use crate::rng::{self, Purpose};
use crate::scripted::ScriptedLmSpec;
use crate::token::SamplingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub measure: Measure,
    pub mean: f64,
    pub sd: f64,
    pub n_runs: usize,
}

/// Per temperature, mean and SD over runs of `alternative`'s one-hot choice
/// and its belief. Each temperature samples on its own derived seed.
pub fn temperature_sweep(
    lm: &ScriptedLmSpec,
    scenario: &ScenarioId,
    alternative: &str,
    temperatures: &[f64],
    runs_per_point: usize,
    top_k: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if let Some(t) = temperatures.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Domain(format!(
            "temperature must be finite and nonnegative, got {t}"
        )));
    }
    let alts = lm.alternative_set();
    let alt = alts
        .index_of(alternative)
        .ok_or_else(|| Error::UnknownAlternative(alternative.to_owned()))?;
    let mut rows = Vec::with_capacity(temperatures.len() * 2);
    for &temperature in temperatures {
        let config = SamplingConfig {
            temperature,
            top_k_recorded: top_k,
            seed: rng::stream_id(Purpose::Sweep, &[seed, temperature.to_bits()]),
        };
        let pool = collect_runs(
            RunSource::Oracle(lm),
            std::slice::from_ref(scenario),
            runs_per_point,
            &config,
            &alts,
        )?;
        let records = pool.records(scenario)?;
        for measure in Measure::BOTH {
            let xs: Vec<f64> = records.iter().map(|r| r.outcome(measure, alt)).collect();
            rows.push(SweepRow {
                temperature,
                measure,
                mean: mean(&xs),
                sd: sd(&xs),
                n_runs: xs.len(),
            });
        }
    }
    Ok(rows)
}
