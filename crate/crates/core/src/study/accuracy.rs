//! Probability that the price coefficient lands near its true value, as a
//! function of runs per scenario.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{draw_fit_options, resample_with};
use super::StudyData;
use crate::error::{Error, Result};
use crate::estimation::Measure;
use crate::rng::Purpose;

pub const DEFAULT_RUN_GRID: [usize; 15] =
    [1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyOptions {
    pub truth_beta: f64,
    pub tolerance_fractions: Vec<f64>,
    pub confidence: f64,
    pub run_grid: Vec<usize>,
    pub n_draws: usize,
    pub seed: u64,
    pub measures: Vec<Measure>,
}

impl AccuracyOptions {
    pub fn new(truth_beta: f64) -> Self {
        Self {
            truth_beta,
            tolerance_fractions: vec![0.10, 0.05],
            confidence: 0.95,
            run_grid: DEFAULT_RUN_GRID.to_vec(),
            n_draws: 1000,
            seed: 0,
            measures: Measure::BOTH.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.truth_beta.is_finite() || self.truth_beta == 0.0 {
            return Err(Error::Domain(format!(
                "truth beta must be finite and nonzero, got {}",
                self.truth_beta
            )));
        }
        if self.tolerance_fractions.is_empty()
            || self
                .tolerance_fractions
                .iter()
                .any(|t| t.is_nan() || *t <= 0.0)
        {
            return Err(Error::Domain("tolerance fractions must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::Domain(format!(
                "confidence must lie in (0, 1], got {}",
                self.confidence
            )));
        }
        if self.run_grid.is_empty() || self.run_grid.contains(&0) {
            return Err(Error::Validation(
                "run grid must be nonempty with entries of at least 1".into(),
            ));
        }
        if self.run_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "run grid must be strictly increasing".into(),
            ));
        }
        if self.n_draws == 0 {
            return Err(Error::Validation("n_draws must be at least 1".into()));
        }
        if self.measures.is_empty() {
            return Err(Error::Validation("no measure selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub measure: Measure,
    pub tolerance_fraction: f64,
    /// `(runs_per_scenario, probability_within_tolerance)`.
    pub points: Vec<(usize, f64)>,
    /// Smallest grid point whose probability reaches the confidence level.
    pub min_runs_at_confidence: Option<usize>,
}

/// One curve per (measure, tolerance). Draws reuse one resampling stream per
/// `(seed, draw, scenario)`, so the records for a grid point extend those of
/// the previous one.
pub fn accuracy_curves(data: &StudyData, opts: &AccuracyOptions) -> Result<Vec<AccuracyCurve>> {
    opts.validate()?;
    let lens = data
        .train
        .iter()
        .map(|s| Ok(data.pool.records(&s.id)?.len()))
        .collect::<Result<Vec<_>>>()?;

    // betas[grid][draw][measure]
    let betas: Vec<Vec<Vec<f64>>> = opts
        .run_grid
        .iter()
        .map(|&k| {
            (0..opts.n_draws as u64)
                .into_par_iter()
                .map(|draw| {
                    let picks: Vec<Vec<usize>> = data
                        .train
                        .iter()
                        .zip(&lens)
                        .map(|(s, &len)| {
                            resample_with(Purpose::Accuracy, opts.seed, draw, &s.id, len, k)
                        })
                        .collect();
                    let fit_opts = draw_fit_options(opts.seed, draw);
                    opts.measures
                        .iter()
                        .map(|&m| {
                            let ds = data.dataset(&picks, m)?;
                            Ok(data
                                .model
                                .fit_mle(&ds, &data.train, &fit_opts)?
                                .beta()
                                .estimate)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    for (mi, &measure) in opts.measures.iter().enumerate() {
        for &tol in &opts.tolerance_fractions {
            let band = tol * opts.truth_beta.abs();
            let points: Vec<(usize, f64)> = opts
                .run_grid
                .iter()
                .zip(&betas)
                .map(|(&k, per_draw)| {
                    let hits = per_draw
                        .iter()
                        .filter(|b| (b[mi] - opts.truth_beta).abs() <= band)
                        .count();
                    (k, hits as f64 / opts.n_draws as f64)
                })
                .collect();
            let min_runs_at_confidence = points
                .iter()
                .find(|(_, p)| *p >= opts.confidence)
                .map(|(k, _)| *k);
            curves.push(AccuracyCurve {
                measure,
                tolerance_fraction: tol,
                points,
                min_runs_at_confidence,
            });
        }
    }
    Ok(curves)
}
