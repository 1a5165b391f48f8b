use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use modelbelief::belief;
use modelbelief::estimation::{self, Measure, RunPool};
use modelbelief::ingest;
use modelbelief::scripted::ScriptedLmSpec;
use modelbelief::study::{self, ScenarioGrid, SplitSpec};
use modelbelief::token::{self, GenerationRun, LogitVector, SamplingConfig, Token};

fn err(e: modelbelief::Error) -> PyErr {
    match e {
        modelbelief::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn measure(name: &str) -> PyResult<Measure> {
    match name {
        "choice" => Ok(Measure::Choice),
        "belief" => Ok(Measure::Belief),
        other => Err(PyValueError::new_err(format!(
            "measure must be 'choice' or 'belief', not {other:?}"
        ))),
    }
}

fn config(temperature: f64, top_k: usize, seed: u64) -> SamplingConfig {
    SamplingConfig {
        temperature,
        top_k_recorded: top_k,
        seed,
    }
}

/// Softmax of `logits / temperature`; temperature 0 is greedy.
#[pyfunction]
#[pyo3(signature = (logits, temperature = 1.0))]
fn softmax(logits: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    let tokens = (0..logits.len()).map(|i| Token::new(format!("t{i}")));
    let entries = tokens
        .zip(logits)
        .map(|(t, v)| t.map(|t| (t, v)))
        .collect::<modelbelief::Result<Vec<_>>>()
        .map_err(err)?;
    let lv = LogitVector::new(entries).map_err(err)?;
    Ok(token::softmax_with_temperature(&lv, temperature)
        .map_err(err)?
        .values()
        .to_vec())
}

#[pyfunction]
fn chebyshev_run_count(variance: f64, epsilon: f64, delta: f64) -> PyResult<u64> {
    estimation::chebyshev_run_count(variance, epsilon, delta).map_err(err)
}

/// Choice and belief of one run over the default Pampers / Huggies / neither
/// alternatives. `top_logprobs[i]` lists `(token, logprob)` at position `i`.
#[pyfunction]
fn extract(
    tokens: Vec<String>,
    top_logprobs: Vec<Vec<(String, f64)>>,
) -> PyResult<(String, Vec<f64>)> {
    let tok = |s: &String| Token::new(s).map_err(err);
    let run = GenerationRun {
        scenario: "run".into(),
        run_index: 0,
        tokens: tokens.iter().map(tok).collect::<PyResult<_>>()?,
        top_logprobs: top_logprobs
            .iter()
            .map(|pos| pos.iter().map(|(t, lp)| Ok((tok(t)?, *lp))).collect())
            .collect::<PyResult<_>>()?,
        seed: 0,
        temperature: 1.0,
        text: None,
    };
    run.validate().map_err(err)?;
    let alts = study::default_alternatives();
    let e = belief::extract(&run, &alts).map_err(err)?;
    Ok((
        alts.alternatives()[e.pivot.alternative].to_string(),
        e.belief.values,
    ))
}

/// Request body for one price under the default prompt, as JSON text.
#[pyfunction]
#[pyo3(signature = (price, temperature = 1.0, top_k = 20))]
fn build_request(price: f64, temperature: f64, top_k: usize) -> PyResult<String> {
    let req = ingest::build_request(
        &ingest::PromptTemplate::default(),
        price,
        &config(temperature, top_k, 0),
    )
    .map_err(err)?;
    String::from_utf8(req.to_json_bytes()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Scripted language model with known beliefs.
#[pyclass(frozen)]
struct Oracle {
    inner: ScriptedLmSpec,
}

#[pymethods]
impl Oracle {
    /// The calibrated oracle over the default price grid (p25 .. p40).
    #[staticmethod]
    fn calibrated() -> PyResult<Self> {
        let grid = ScenarioGrid::default();
        let scenarios = study::build_scenarios(&grid).map_err(err)?;
        let inner = study::calibrated_oracle(
            &grid.model(),
            &study::reference_params(),
            &scenarios,
            &study::default_templates(),
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ScriptedLmSpec::from_json_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn alternatives(&self) -> Vec<String> {
        self.inner
            .alternatives()
            .iter()
            .map(|a| a.to_string())
            .collect()
    }

    #[getter]
    fn scenarios(&self) -> Vec<String> {
        self.inner
            .scenarios()
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[pyo3(signature = (scenario, temperature = 1.0))]
    fn choice_distribution(&self, scenario: &str, temperature: f64) -> PyResult<Vec<f64>> {
        self.inner
            .choice_distribution(&scenario.into(), temperature)
            .map_err(err)
    }

    /// Generate `runs` runs per scenario (all scenarios when `scenarios` is
    /// None) and extract them into a pool.
    #[pyo3(signature = (runs, seed = 0, scenarios = None, temperature = 1.0, top_k = 20))]
    fn sample(
        &self,
        py: Python<'_>,
        runs: usize,
        seed: u64,
        scenarios: Option<Vec<String>>,
        temperature: f64,
        top_k: usize,
    ) -> PyResult<Pool> {
        let ids: Vec<_> = match scenarios {
            Some(s) => s.into_iter().map(Into::into).collect(),
            None => self.inner.scenarios().to_vec(),
        };
        let cfg = config(temperature, top_k, seed);
        let alts = self.inner.alternative_set();
        let inner = py
            .detach(|| {
                study::collect_runs(
                    study::RunSource::Oracle(&self.inner),
                    &ids,
                    runs,
                    &cfg,
                    &alts,
                )
            })
            .map_err(err)?;
        Ok(Pool { inner })
    }
}

/// Extracted runs grouped by scenario.
#[pyclass(frozen)]
struct Pool {
    inner: RunPool,
}

#[pymethods]
impl Pool {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ingest::load_pool(path).map_err(err)?,
        })
    }

    /// Write as JSONL; returns the number of records.
    fn save(&self, path: &str) -> PyResult<usize> {
        ingest::persist_pool(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    #[getter]
    fn alternatives(&self) -> Vec<String> {
        self.inner
            .alternatives()
            .iter()
            .map(|a| a.to_string())
            .collect()
    }

    #[getter]
    fn scenarios(&self) -> Vec<String> {
        self.inner.scenario_ids().map(|s| s.to_string()).collect()
    }

    fn share(&self, scenario: &str, measure: &str) -> PyResult<Vec<f64>> {
        Ok(
            estimation::empirical_share(&self.inner, &scenario.into(), self::measure(measure)?)
                .map_err(err)?
                .values,
        )
    }

    fn variance(&self, scenario: &str, alternative: usize, measure: &str) -> PyResult<f64> {
        estimation::sample_variance(
            &self.inner,
            &scenario.into(),
            alternative,
            self::measure(measure)?,
        )
        .map_err(err)
    }

    /// Smallest eigenvalue of the choice-minus-belief covariance.
    fn loewner_gap(&self, scenario: &str) -> PyResult<f64> {
        let id = scenario.into();
        let c = estimation::sample_covariance(&self.inner, &id, Measure::Choice).map_err(err)?;
        let b = estimation::sample_covariance(&self.inner, &id, Measure::Belief).map_err(err)?;
        estimation::loewner_gap(&c, &b).map_err(err)
    }

    /// Logit fit on every training run; scenario ids must encode focal
    /// prices. Returns `{parameter: (estimate, se)}`.
    #[pyo3(signature = (measure, competitor_price = 30.0, test_prices = vec![28.0, 31.0, 37.0], seed = 0))]
    fn fit(
        &self,
        py: Python<'_>,
        measure: &str,
        competitor_price: f64,
        test_prices: Vec<f64>,
        seed: u64,
    ) -> PyResult<BTreeMap<String, (f64, f64)>> {
        let m = self::measure(measure)?;
        let split = SplitSpec { test_prices };
        let fit = py
            .detach(|| {
                let data = study::study_from_pool(self.inner.clone(), competitor_price, &split)?;
                study::full_sample_fit(&data, m, seed)
            })
            .map_err(err)?;
        Ok(fit
            .parameters
            .iter()
            .map(|p| (p.name.clone(), (p.estimate, p.se)))
            .collect())
    }

    /// Paired bootstrap at `k` runs per scenario. Returns per-measure
    /// `{"beta_mean", "beta_sd", "rmse", "mae", "rmse_diff"}` plus the
    /// one-tailed p values of the RMSE and MAE comparisons.
    #[pyo3(signature = (k, draws = 1000, seed = 0, competitor_price = 30.0, test_prices = vec![28.0, 31.0, 37.0]))]
    fn bootstrap(
        &self,
        py: Python<'_>,
        k: usize,
        draws: usize,
        seed: u64,
        competitor_price: f64,
        test_prices: Vec<f64>,
    ) -> PyResult<BTreeMap<String, f64>> {
        let split = SplitSpec { test_prices };
        let out = py
            .detach(|| {
                let data = study::study_from_pool(self.inner.clone(), competitor_price, &split)?;
                study::bootstrap_estimates(&data, k, draws, &Measure::BOTH, seed)
            })
            .map_err(err)?;
        let mut res = BTreeMap::new();
        for s in &out.summaries {
            let m = s.measure.as_str();
            res.insert(format!("{m}.beta_mean"), s.beta().mean_estimate);
            res.insert(format!("{m}.beta_sd"), s.beta().sd_over_draws);
            res.insert(format!("{m}.rmse"), s.mean_rmse);
            res.insert(format!("{m}.mae"), s.mean_mae);
            res.insert(format!("{m}.rmse_diff"), s.rmse_diff);
        }
        if let Some(c) = &out.comparison {
            res.insert("rmse_diff_p".into(), c.rmse_diff.p_value);
            res.insert("mae_diff_p".into(), c.mae_diff.p_value);
        }
        Ok(res)
    }
}

#[pymodule]
#[pyo3(name = "modelbelief")]
fn modelbelief_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(chebyshev_run_count, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(build_request, m)?)?;
    m.add_class::<Oracle>()?;
    m.add_class::<Pool>()?;
    Ok(())
}
