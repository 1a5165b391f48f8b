//! Paired bootstrap over runs-per-scenario.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{estimate_equality, mean, paired_t_greater, sd, TestResult};
use super::StudyData;
use crate::error::{Error, Result};
use crate::estimation::Measure;
use crate::ids::ScenarioId;
use crate::mnl::{predict_metrics, FitOptions, FitResult, PredictionMetrics};
use crate::rng::{self, Purpose};

/// Which records of one scenario a draw uses. Pure function of
/// `(seed, draw, scenario)`; a larger `k` extends the smaller draw.
pub fn resample_indices(
    seed: u64,
    draw: u64,
    scenario: &ScenarioId,
    pool_len: usize,
    k: usize,
) -> Vec<usize> {
    resample_with(Purpose::Bootstrap, seed, draw, scenario, pool_len, k)
}

pub(crate) fn resample_with(
    purpose: Purpose,
    seed: u64,
    draw: u64,
    scenario: &ScenarioId,
    pool_len: usize,
    k: usize,
) -> Vec<usize> {
    let mut r = rng::stream(seed, purpose, &[draw, scenario.stream_key()]);
    (0..k).map(|_| r.random_range(0..pool_len)).collect()
}

/// Fit start for a draw; shared by both measures so fits stay paired.
pub fn draw_fit_options(seed: u64, draw: u64) -> FitOptions {
    FitOptions {
        init_seed: rng::stream_id(Purpose::FitInit, &[seed, draw]),
        ..FitOptions::default()
    }
}

/// Fit on every training record under `measure`.
pub fn full_sample_fit(data: &StudyData, measure: Measure, seed: u64) -> Result<FitResult> {
    let ds = data.full_dataset(measure)?;
    data.model
        .fit_mle(&ds, &data.train, &draw_fit_options(seed, u64::MAX))
}

/// One fitted draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawResult {
    pub draw: u64,
    pub fit: FitResult,
    pub metrics: PredictionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean_estimate: f64,
    /// Mean over draws with a finite standard error; infinite if none.
    pub mean_se: f64,
    pub mean_p: f64,
    pub sd_over_draws: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub measure: Measure,
    pub runs_per_scenario: usize,
    pub n_draws: usize,
    pub params: Vec<ParamSummary>,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    /// Mean excess over the benchmark fit's test error.
    pub rmse_diff: f64,
    pub mae_diff: f64,
    pub non_converged: usize,
}

impl DrawSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn beta(&self) -> &ParamSummary {
        self.params.last().expect("beta present")
    }
}

/// Choice versus belief on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// One-tailed paired t: choice RMSE_Diff exceeds belief RMSE_Diff.
    pub rmse_diff: TestResult,
    pub mae_diff: TestResult,
    /// Two-tailed test per parameter that both measures estimate the same value.
    pub param_equality: Vec<(String, TestResult)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub runs_per_scenario: usize,
    pub benchmark: PredictionMetrics,
    pub summaries: Vec<DrawSummary>,
    pub draws: Vec<(Measure, Vec<DrawResult>)>,
    /// Present when both measures were run.
    pub comparison: Option<Comparison>,
}

impl BootstrapOutcome {
    pub fn summary(&self, measure: Measure) -> Option<&DrawSummary> {
        self.summaries.iter().find(|s| s.measure == measure)
    }
}

/// Draw `k` records per training scenario with replacement `n_draws` times,
/// fit each measure on the same records, and score each fit on the test
/// scenarios against the pool's choice shares. The benchmark is the
/// full-pool choice fit.
pub fn bootstrap_estimates(
    data: &StudyData,
    k: usize,
    n_draws: usize,
    measures: &[Measure],
    seed: u64,
) -> Result<BootstrapOutcome> {
    if k == 0 {
        return Err(Error::Validation(
            "runs per scenario must be at least 1".into(),
        ));
    }
    if n_draws == 0 {
        return Err(Error::Validation("n_draws must be at least 1".into()));
    }
    if measures.is_empty() {
        return Err(Error::Validation("no measure selected".into()));
    }
    if data.test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let lens = data
        .train
        .iter()
        .map(|s| Ok(data.pool.records(&s.id)?.len()))
        .collect::<Result<Vec<_>>>()?;

    let bench_fit = full_sample_fit(data, Measure::Choice, seed)?;
    let benchmark = predict_metrics(&data.model, &bench_fit.params(), &data.test, &data.pool)?;

    let per_draw: Vec<Vec<DrawResult>> = (0..n_draws as u64)
        .into_par_iter()
        .map(|draw| {
            let picks: Vec<Vec<usize>> = data
                .train
                .iter()
                .zip(&lens)
                .map(|(s, &len)| resample_indices(seed, draw, &s.id, len, k))
                .collect();
            let opts = draw_fit_options(seed, draw);
            measures
                .iter()
                .map(|&m| {
                    let ds = data.dataset(&picks, m)?;
                    let fit = data.model.fit_mle(&ds, &data.train, &opts)?;
                    let metrics =
                        predict_metrics(&data.model, &fit.params(), &data.test, &data.pool)?;
                    Ok(DrawResult { draw, fit, metrics })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut draws: Vec<(Measure, Vec<DrawResult>)> = measures
        .iter()
        .map(|&m| (m, Vec::with_capacity(n_draws)))
        .collect();
    for row in per_draw {
        for (slot, result) in draws.iter_mut().zip(row) {
            slot.1.push(result);
        }
    }

    let summaries: Vec<DrawSummary> = draws
        .iter()
        .map(|(m, results)| summarize(*m, k, results, &benchmark))
        .collect();

    let comparison = match (
        draws.iter().find(|(m, _)| *m == Measure::Choice),
        draws.iter().find(|(m, _)| *m == Measure::Belief),
    ) {
        (Some((_, choice)), Some((_, belief))) => {
            let sc = summaries
                .iter()
                .find(|s| s.measure == Measure::Choice)
                .expect("choice summary");
            let sb = summaries
                .iter()
                .find(|s| s.measure == Measure::Belief)
                .expect("belief summary");
            Some(compare(choice, belief, sc, sb))
        }
        _ => None,
    };

    Ok(BootstrapOutcome {
        runs_per_scenario: k,
        benchmark,
        summaries,
        draws,
        comparison,
    })
}

fn summarize(
    measure: Measure,
    k: usize,
    results: &[DrawResult],
    benchmark: &PredictionMetrics,
) -> DrawSummary {
    let n_params = results[0].fit.parameters.len();
    let params = (0..n_params)
        .map(|j| {
            let est: Vec<f64> = results
                .iter()
                .map(|r| r.fit.parameters[j].estimate)
                .collect();
            let finite_se: Vec<f64> = results
                .iter()
                .map(|r| r.fit.parameters[j].se)
                .filter(|s| s.is_finite())
                .collect();
            let p: Vec<f64> = results
                .iter()
                .map(|r| r.fit.parameters[j].p_value)
                .collect();
            ParamSummary {
                name: results[0].fit.parameters[j].name.clone(),
                mean_estimate: mean(&est),
                mean_se: if finite_se.is_empty() {
                    f64::INFINITY
                } else {
                    mean(&finite_se)
                },
                mean_p: mean(&p),
                sd_over_draws: sd(&est),
            }
        })
        .collect();
    let rmse: Vec<f64> = results.iter().map(|r| r.metrics.rmse).collect();
    let mae: Vec<f64> = results.iter().map(|r| r.metrics.mae).collect();
    DrawSummary {
        measure,
        runs_per_scenario: k,
        n_draws: results.len(),
        params,
        mean_rmse: mean(&rmse),
        mean_mae: mean(&mae),
        rmse_diff: mean(&rmse) - benchmark.rmse,
        mae_diff: mean(&mae) - benchmark.mae,
        non_converged: results.iter().filter(|r| !r.fit.converged).count(),
    }
}

fn compare(
    choice: &[DrawResult],
    belief: &[DrawResult],
    sc: &DrawSummary,
    sb: &DrawSummary,
) -> Comparison {
    let metric = |rs: &[DrawResult], f: fn(&PredictionMetrics) -> f64| {
        rs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>()
    };
    // The benchmark is common to both sides, so differences of the excess
    // errors equal differences of the raw errors.
    let rmse_diff = paired_t_greater(&metric(choice, |m| m.rmse), &metric(belief, |m| m.rmse));
    let mae_diff = paired_t_greater(&metric(choice, |m| m.mae), &metric(belief, |m| m.mae));
    let param_equality = sc
        .params
        .iter()
        .zip(&sb.params)
        .map(|(c, b)| {
            (
                c.name.clone(),
                estimate_equality(c.mean_estimate, c.mean_se, b.mean_estimate, b.mean_se),
            )
        })
        .collect();
    Comparison {
        rmse_diff,
        mae_diff,
        param_equality,
    }
}
