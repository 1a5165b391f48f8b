//! End-to-end demand study on choice and belief data: scenario grid and
//! split, run collection, paired bootstrap over run counts, accuracy curves
//! and temperature sweeps, with CSV emitters for each table.

pub mod accuracy;
pub mod bootstrap;
pub mod collect;
pub mod grid;
pub mod oracle;
pub mod report;
pub mod stats;
pub mod sweep;

pub use accuracy::{accuracy_curves, AccuracyCurve, AccuracyOptions, DEFAULT_RUN_GRID};
pub use bootstrap::{
    bootstrap_estimates, full_sample_fit, resample_indices, BootstrapOutcome, Comparison,
    DrawSummary, ParamSummary,
};
pub use collect::{collect_runs, RunSource};
pub use grid::{
    build_scenarios, default_alternatives, focal_price_of, scenario_id, split_train_test,
    ScenarioGrid, SplitSpec,
};
pub use oracle::{calibrated_oracle, default_templates, reference_params};
pub use sweep::{temperature_sweep, SweepRow};

use crate::error::{Error, Result};
use crate::estimation::{Measure, RunPool};
use crate::mnl::{MnlDataset, MnlModel, Scenario};

/// Everything the estimation stages share: model, split, and the pool that
/// serves both as the resampling source and the test-set ground truth.
#[derive(Debug, Clone)]
pub struct StudyData {
    pub model: MnlModel,
    pub train: Vec<Scenario>,
    pub test: Vec<Scenario>,
    pub pool: RunPool,
}

impl StudyData {
    pub fn new(
        model: MnlModel,
        train: Vec<Scenario>,
        test: Vec<Scenario>,
        pool: RunPool,
    ) -> Result<Self> {
        if pool.alternatives() != model.alternatives.as_slice() {
            return Err(Error::Validation(
                "pool alternatives differ from the model's".into(),
            ));
        }
        for s in train.iter().chain(&test) {
            if pool.records(&s.id)?.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no runs for scenario {}",
                    s.id
                )));
            }
        }
        Ok(Self {
            model,
            train,
            test,
            pool,
        })
    }

    /// Aggregated dataset over the chosen records of each training scenario.
    /// `picks[i]` indexes into the records of `train[i]`.
    pub fn dataset(&self, picks: &[Vec<usize>], measure: Measure) -> Result<MnlDataset> {
        let k = self.model.alternatives.len();
        let mut d = MnlDataset::default();
        for (s, idx) in self.train.iter().zip(picks) {
            let recs = self.pool.records(&s.id)?;
            let mut w = vec![0.0; k];
            for &i in idx {
                let r = &recs[i];
                for (a, wa) in w.iter_mut().enumerate() {
                    *wa += r.outcome(measure, a);
                }
            }
            d.push(s.id.clone(), w)?;
        }
        Ok(d)
    }

    /// Dataset over every training record.
    pub fn full_dataset(&self, measure: Measure) -> Result<MnlDataset> {
        let picks = self
            .train
            .iter()
            .map(|s| Ok((0..self.pool.records(&s.id)?.len()).collect()))
            .collect::<Result<Vec<_>>>()?;
        self.dataset(&picks, measure)
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.train.iter().chain(&self.test).cloned().collect()
    }
}

/// Study over a loaded pool whose scenario ids encode focal prices (`p31`)
/// against a fixed competitor price. The pool must hold exactly three
/// alternatives ordered focal, competitor, outside.
pub fn study_from_pool(
    pool: RunPool,
    competitor_price: f64,
    split: &SplitSpec,
) -> Result<StudyData> {
    if pool.alternatives().len() != 3 {
        return Err(Error::Validation(
            "pool must have three alternatives: focal, competitor, outside".into(),
        ));
    }
    let model = MnlModel::new(pool.alternatives().to_vec(), 2)?;
    let scenarios = pool
        .scenario_ids()
        .map(|id| {
            let p = focal_price_of(id).ok_or_else(|| {
                Error::Validation(format!("scenario id {id} does not encode a focal price"))
            })?;
            Ok(Scenario {
                id: id.clone(),
                prices: vec![p, competitor_price, 0.0],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_train_test(&scenarios, split)?;
    StudyData::new(model, train, test, pool)
}

/// Default oracle over `grid`, sampled `runs_per_scenario` times per scenario
/// at the given configuration, split per `split`.
pub fn oracle_study(
    grid: &ScenarioGrid,
    split: &SplitSpec,
    runs_per_scenario: usize,
    config: &crate::token::SamplingConfig,
) -> Result<(crate::scripted::ScriptedLmSpec, StudyData)> {
    let model = grid.model();
    let scenarios = build_scenarios(grid)?;
    let lm = calibrated_oracle(
        &model,
        &reference_params(),
        &scenarios,
        &default_templates(),
    )?;
    let ids: Vec<_> = scenarios.iter().map(|s| s.id.clone()).collect();
    let pool = collect_runs(
        RunSource::Oracle(&lm),
        &ids,
        runs_per_scenario,
        config,
        &grid.alternatives,
    )?;
    let (train, test) = split_train_test(&scenarios, split)?;
    Ok((lm, StudyData::new(model, train, test, pool)?))
}
