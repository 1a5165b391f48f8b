//! CSV emitters. Floats use Rust's shortest round-trip formatting; missing
//! values are written as `NA`.
//!
//! * `table2.csv`: `row,runs_per_scenario,measure,n_draws`, then for every
//!   parameter `<name>_mean,<name>_se,<name>_p,<name>_sd`, then
//!   `rmse,mae,rmse_diff,mae_diff,rmse_diff_t,rmse_diff_p,mae_diff_t,mae_diff_p,beta_equality_z,beta_equality_p,non_converged`.
//!   `row` is `draws` for bootstrap summaries and `full_sample` for fits on
//!   the whole training pool.
//! * `figure1.csv`: `scenario,price,alternative,measure,share,variance,n_effective`.
//! * `figure3.csv`: `measure,tolerance_fraction,runs_per_scenario,probability_within,min_runs_at_confidence`.
//! * `figure4.csv`: `temperature,measure,mean,sd,n_runs`.

use std::io::Write;

use super::accuracy::AccuracyCurve;
use super::bootstrap::BootstrapOutcome;
use super::sweep::SweepRow;
use crate::error::{Error, Result};
use crate::estimation::{empirical_share, sample_variance, Measure, RunPool};
use crate::mnl::{FitResult, PredictionMetrics, Scenario};

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

/// A fit on the full training pool, reported next to the bootstrap rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSampleRow {
    pub measure: Measure,
    pub runs_per_scenario: usize,
    pub fit: FitResult,
    pub metrics: PredictionMetrics,
}

const METRIC_COLUMNS: [&str; 11] = [
    "rmse",
    "mae",
    "rmse_diff",
    "mae_diff",
    "rmse_diff_t",
    "rmse_diff_p",
    "mae_diff_t",
    "mae_diff_p",
    "beta_equality_z",
    "beta_equality_p",
    "non_converged",
];

pub fn write_table2<W: Write>(
    param_names: &[String],
    outcomes: &[BootstrapOutcome],
    full_sample: &[FullSampleRow],
    benchmark: Option<&PredictionMetrics>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["row", "runs_per_scenario", "measure", "n_draws"]
        .map(String::from)
        .to_vec();
    for n in param_names {
        for suffix in ["mean", "se", "p", "sd"] {
            header.push(format!("{n}_{suffix}"));
        }
    }
    header.extend(METRIC_COLUMNS.map(String::from));
    w.write_record(&header)?;

    for o in outcomes {
        for s in &o.summaries {
            if s.params.len() != param_names.len() {
                return Err(Error::DimensionMismatch {
                    left: s.params.len(),
                    right: param_names.len(),
                });
            }
            let mut rec = vec![
                "draws".to_owned(),
                s.runs_per_scenario.to_string(),
                s.measure.to_string(),
                s.n_draws.to_string(),
            ];
            for p in &s.params {
                rec.extend([
                    num(p.mean_estimate),
                    num(p.mean_se),
                    num(p.mean_p),
                    num(p.sd_over_draws),
                ]);
            }
            rec.extend([
                num(s.mean_rmse),
                num(s.mean_mae),
                num(s.rmse_diff),
                num(s.mae_diff),
            ]);
            // Tests compare measures; they are written on the belief row.
            let cmp = o
                .comparison
                .as_ref()
                .filter(|_| s.measure == Measure::Belief);
            rec.push(opt(cmp.map(|c| num(c.rmse_diff.statistic))));
            rec.push(opt(cmp.map(|c| num(c.rmse_diff.p_value))));
            rec.push(opt(cmp.map(|c| num(c.mae_diff.statistic))));
            rec.push(opt(cmp.map(|c| num(c.mae_diff.p_value))));
            let beta = cmp.and_then(|c| c.param_equality.last());
            rec.push(opt(beta.map(|(_, t)| num(t.statistic))));
            rec.push(opt(beta.map(|(_, t)| num(t.p_value))));
            rec.push(s.non_converged.to_string());
            w.write_record(&rec)?;
        }
    }
    for f in full_sample {
        if f.fit.parameters.len() != param_names.len() {
            return Err(Error::DimensionMismatch {
                left: f.fit.parameters.len(),
                right: param_names.len(),
            });
        }
        let mut rec = vec![
            "full_sample".to_owned(),
            f.runs_per_scenario.to_string(),
            f.measure.to_string(),
            "1".to_owned(),
        ];
        for p in &f.fit.parameters {
            rec.extend([num(p.estimate), num(p.se), num(p.p_value), "NA".to_owned()]);
        }
        rec.extend([num(f.metrics.rmse), num(f.metrics.mae)]);
        rec.push(opt(benchmark.map(|b| num(f.metrics.rmse - b.rmse))));
        rec.push(opt(benchmark.map(|b| num(f.metrics.mae - b.mae))));
        rec.extend(std::iter::repeat_n("NA".to_owned(), 6));
        rec.push(if f.fit.converged { "0" } else { "1" }.to_owned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shares and per-run variances for every scenario, alternative and measure,
/// keyed by the focal price.
pub fn write_figure1<W: Write>(pool: &RunPool, scenarios: &[Scenario], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "price",
        "alternative",
        "measure",
        "share",
        "variance",
        "n_effective",
    ])?;
    for s in scenarios {
        let price = s.prices.first().copied().unwrap_or(f64::NAN);
        for measure in Measure::BOTH {
            let shares = empirical_share(pool, &s.id, measure)?;
            for (a, alt) in pool.alternatives().iter().enumerate() {
                let var = if shares.n_runs >= 2 {
                    sample_variance(pool, &s.id, a, measure)?
                } else {
                    f64::NAN
                };
                w.write_record([
                    s.id.to_string(),
                    num(price),
                    alt.to_string(),
                    measure.to_string(),
                    num(shares.values[a]),
                    num(var),
                    shares.n_runs.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure3<W: Write>(curves: &[AccuracyCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "measure",
        "tolerance_fraction",
        "runs_per_scenario",
        "probability_within",
        "min_runs_at_confidence",
    ])?;
    for c in curves {
        for (k, p) in &c.points {
            w.write_record([
                c.measure.to_string(),
                num(c.tolerance_fraction),
                k.to_string(),
                num(*p),
                opt(c.min_runs_at_confidence),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure4<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["temperature", "measure", "mean", "sd", "n_runs"])?;
    for r in rows {
        w.write_record([
            num(r.temperature),
            r.measure.to_string(),
            num(r.mean),
            num(r.sd),
            r.n_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
