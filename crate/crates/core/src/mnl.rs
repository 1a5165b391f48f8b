//! Multinomial logit demand with brand intercepts and one price coefficient.
//!
//! Utility of brand `j` in scenario `s` is `alpha_j + beta * price_js`; the
//! outside alternative has utility 0. Outcome weights `d_js` may be one-hot
//! choices or fractional beliefs, and rows may be aggregated over runs.
//!
//! The parameter vector is laid out as the brand intercepts in alternative
//! order followed by `beta`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{empirical_choice_share, RunPool};
use crate::ids::{AlternativeId, ScenarioId};
use crate::rng::{self, Purpose};

/// Probabilities are floored here inside the log.
pub const PROB_FLOOR: f64 = 1e-300;

/// Largest Newton step per coordinate; keeps early iterates out of the
/// saturated region where the information matrix is numerically singular.
const MAX_STEP: f64 = 20.0;

/// One price configuration. `prices` is aligned with the model's alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlParams {
    /// Intercept per brand, in alternative order with the outside option skipped.
    pub alpha: Vec<f64>,
    pub beta: f64,
}

impl MnlParams {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.alpha.clone();
        v.push(self.beta);
        DVector::from_vec(v)
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        let (beta, alpha) = theta.split_last().expect("non-empty parameter vector");
        Self {
            alpha: alpha.to_vec(),
            beta: *beta,
        }
    }
}

/// A row of outcome weights for one scenario, aligned with the alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlRow {
    pub scenario: ScenarioId,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MnlDataset {
    pub rows: Vec<MnlRow>,
}

impl MnlDataset {
    pub fn push(&mut self, scenario: ScenarioId, weights: Vec<f64>) -> Result<()> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation(format!(
                "row for {scenario} has a negative or non-finite weight"
            )));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Validation(format!(
                "row for {scenario} has zero total weight"
            )));
        }
        self.rows.push(MnlRow { scenario, weights });
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.iter().flat_map(|r| &r.weights).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| MnlRow {
                    scenario: r.scenario.clone(),
                    weights: r.weights.iter().map(|w| w * factor).collect(),
                })
                .collect(),
        }
    }
}

/// Alternatives plus which one is the outside option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlModel {
    pub alternatives: Vec<AlternativeId>,
    pub outside: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub init_seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init_seed: 0,
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    /// `null` in JSON when the information matrix is singular.
    pub se: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<ParameterEstimate>,
    pub log_likelihood: f64,
    pub n_observations: u64,
    pub converged: bool,
    pub iterations: usize,
    /// Information matrix not invertible at the optimum; SEs are infinite.
    pub degenerate: bool,
    /// Some positive weight sat on a probability below the floor.
    pub clamped: bool,
}

impl FitResult {
    pub fn params(&self) -> MnlParams {
        MnlParams::from_slice(
            &self
                .parameters
                .iter()
                .map(|p| p.estimate)
                .collect::<Vec<_>>(),
        )
    }

    pub fn beta(&self) -> &ParameterEstimate {
        self.parameters.last().expect("beta present")
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.se).collect()
    }
}

/// Value, gradient and observed information at one point.
struct Eval {
    ll: f64,
    clamped: bool,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

impl MnlModel {
    pub fn new(alternatives: Vec<AlternativeId>, outside: usize) -> Result<Self> {
        if alternatives.len() < 2 {
            return Err(Error::Validation(
                "an MNL model needs at least 2 alternatives".into(),
            ));
        }
        if outside >= alternatives.len() {
            return Err(Error::Validation(format!(
                "outside index {outside} out of range"
            )));
        }
        Ok(Self {
            alternatives,
            outside,
        })
    }

    pub fn n_params(&self) -> usize {
        self.alternatives.len()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .brands()
            .map(|j| format!("alpha_{}", self.alternatives[j]))
            .collect();
        names.push("beta".into());
        names
    }

    fn brands(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.alternatives.len()).filter(move |&j| j != self.outside)
    }

    /// Position of alternative `j`'s intercept in the parameter vector.
    fn alpha_slot(&self, j: usize) -> Option<usize> {
        match j.cmp(&self.outside) {
            std::cmp::Ordering::Less => Some(j),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(j - 1),
        }
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        if scenario.prices.len() != self.alternatives.len() {
            return Err(Error::DimensionMismatch {
                left: scenario.prices.len(),
                right: self.alternatives.len(),
            });
        }
        if scenario.prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "scenario {} has a non-finite price",
                scenario.id
            )));
        }
        if scenario.prices[self.outside] != 0.0 {
            return Err(Error::Validation(format!(
                "scenario {}: outside option price must be 0",
                scenario.id
            )));
        }
        Ok(())
    }

    fn check_params(&self, params: &MnlParams) -> Result<()> {
        if params.alpha.len() + 1 != self.alternatives.len() {
            return Err(Error::Validation(format!(
                "expected {} brand intercepts, got {}",
                self.alternatives.len() - 1,
                params.alpha.len()
            )));
        }
        Ok(())
    }

    /// Deterministic utilities; the outside option is exactly 0.
    pub fn utilities(&self, params: &MnlParams, scenario: &Scenario) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_scenario(scenario)?;
        Ok(self.utilities_unchecked(&params.to_vector(), scenario))
    }

    fn utilities_unchecked(&self, theta: &DVector<f64>, scenario: &Scenario) -> Vec<f64> {
        let beta = theta[theta.len() - 1];
        (0..self.alternatives.len())
            .map(|j| match self.alpha_slot(j) {
                Some(k) => theta[k] + beta * scenario.prices[j],
                None => 0.0,
            })
            .collect()
    }

    pub fn choice_probabilities(
        &self,
        params: &MnlParams,
        scenario: &Scenario,
    ) -> Result<Vec<f64>> {
        Ok(logit(&self.utilities(params, scenario)?))
    }

    fn resolve<'a>(
        &self,
        dataset: &MnlDataset,
        scenarios: &'a [Scenario],
    ) -> Result<Vec<&'a Scenario>> {
        let by_id: HashMap<&ScenarioId, &Scenario> = scenarios.iter().map(|s| (&s.id, s)).collect();
        dataset
            .rows
            .iter()
            .map(|r| {
                if r.weights.len() != self.alternatives.len() {
                    return Err(Error::DimensionMismatch {
                        left: r.weights.len(),
                        right: self.alternatives.len(),
                    });
                }
                let s = by_id
                    .get(&r.scenario)
                    .copied()
                    .ok_or_else(|| Error::UnknownScenario(r.scenario.to_string()))?;
                self.check_scenario(s)?;
                Ok(s)
            })
            .collect()
    }

    /// `sum_s sum_j d_js log P_js`, with `0 log p = 0`.
    pub fn log_likelihood(
        &self,
        params: &MnlParams,
        dataset: &MnlDataset,
        scenarios: &[Scenario],
    ) -> Result<f64> {
        self.check_params(params)?;
        let resolved = self.resolve(dataset, scenarios)?;
        Ok(self
            .evaluate(&params.to_vector(), dataset, &resolved, false)
            .ll)
    }

    /// Analytic gradient `sum_s sum_j (d_js - D_s P_js) x_js`.
    pub fn score(
        &self,
        params: &MnlParams,
        dataset: &MnlDataset,
        scenarios: &[Scenario],
    ) -> Result<DVector<f64>> {
        self.check_params(params)?;
        let resolved = self.resolve(dataset, scenarios)?;
        Ok(self
            .evaluate(&params.to_vector(), dataset, &resolved, true)
            .grad)
    }

    /// Observed information (negative Hessian).
    pub fn information(
        &self,
        params: &MnlParams,
        dataset: &MnlDataset,
        scenarios: &[Scenario],
    ) -> Result<DMatrix<f64>> {
        self.check_params(params)?;
        let resolved = self.resolve(dataset, scenarios)?;
        Ok(self
            .evaluate(&params.to_vector(), dataset, &resolved, true)
            .info)
    }

    fn design_row(&self, j: usize, scenario: &Scenario) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_params());
        if let Some(k) = self.alpha_slot(j) {
            x[k] = 1.0;
            x[self.n_params() - 1] = scenario.prices[j];
        }
        x
    }

    fn evaluate(
        &self,
        theta: &DVector<f64>,
        dataset: &MnlDataset,
        resolved: &[&Scenario],
        derivatives: bool,
    ) -> Eval {
        let p = self.n_params();
        let log_floor = PROB_FLOOR.ln();
        let mut ll = 0.0;
        let mut clamped = false;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for (row, scenario) in dataset.rows.iter().zip(resolved) {
            let u = self.utilities_unchecked(theta, scenario);
            let lse = log_sum_exp(&u);
            let total: f64 = row.weights.iter().sum();
            for (j, &d) in row.weights.iter().enumerate() {
                if d > 0.0 {
                    let lp = u[j] - lse;
                    if lp < log_floor {
                        clamped = true;
                    }
                    ll += d * lp.max(log_floor);
                }
            }
            if !derivatives {
                continue;
            }
            let probs: Vec<f64> = u.iter().map(|v| (v - lse).exp()).collect();
            let xs: Vec<DVector<f64>> =
                (0..u.len()).map(|j| self.design_row(j, scenario)).collect();
            let mut xbar = DVector::zeros(p);
            for (x, &pj) in xs.iter().zip(&probs) {
                xbar.axpy(pj, x, 1.0);
            }
            for ((x, &pj), &d) in xs.iter().zip(&probs).zip(&row.weights) {
                grad.axpy(d - total * pj, x, 1.0);
                let dev = x - &xbar;
                info.ger(total * pj, &dev, &dev, 1.0);
            }
        }
        Eval {
            ll,
            clamped,
            grad,
            info,
        }
    }

    /// Backtracking from a full step along `direction`.
    fn line_search(
        &self,
        theta: &DVector<f64>,
        direction: &DVector<f64>,
        eval: &Eval,
        dataset: &MnlDataset,
        resolved: &[&Scenario],
    ) -> Option<DVector<f64>> {
        let slope = direction.dot(&eval.grad);
        // Below this predicted gain, rounding in the log-likelihood decides
        // the Armijo test, so the full step is taken as is.
        let resolution = 64.0 * f64::EPSILON * (1.0 + eval.ll.abs());
        let mut step = 1.0;
        while step > 1e-14 {
            let candidate = theta + direction * step;
            let trial = self.evaluate(&candidate, dataset, resolved, false);
            let below_resolution = step == 1.0 && slope < resolution;
            if trial.ll.is_finite()
                && (below_resolution || trial.ll >= eval.ll + 1e-4 * step * slope)
            {
                return Some(candidate);
            }
            step *= 0.5;
        }
        None
    }

    /// Maximum likelihood by damped Newton ascent from a random start.
    pub fn fit_mle(
        &self,
        dataset: &MnlDataset,
        scenarios: &[Scenario],
        options: &FitOptions,
    ) -> Result<FitResult> {
        let resolved = self.resolve(dataset, scenarios)?;
        if dataset.rows.is_empty() {
            return Err(Error::InsufficientData("empty dataset".into()));
        }
        let mut distinct: Vec<&Vec<f64>> = resolved.iter().map(|s| &s.prices).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite prices"));
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 distinct price scenarios to identify the price coefficient".into(),
            ));
        }

        let p = self.n_params();
        let mut init = rng::stream(options.init_seed, Purpose::FitInit, &[]);
        let mut theta = DVector::from_fn(p, |_, _| init.random_range(-1.0..=1.0));
        let mut eval = self.evaluate(&theta, dataset, &resolved, true);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < options.max_iter {
            if eval.grad.amax() < options.grad_tol {
                converged = true;
                break;
            }
            iterations += 1;
            let newton = eval
                .info
                .clone()
                .cholesky()
                .map(|chol| chol.solve(&eval.grad))
                .filter(|d| d.iter().all(|v| v.is_finite()) && d.dot(&eval.grad) > 0.0);
            // Steepest ascent scaled to unit max-norm, used when the Newton
            // direction is unavailable or its line search fails.
            let ascent = &eval.grad / eval.grad.amax().max(1.0);
            let accepted = newton
                .map(|d| cap_step(d, MAX_STEP))
                .and_then(|d| self.line_search(&theta, &d, &eval, dataset, &resolved))
                .or_else(|| self.line_search(&theta, &ascent, &eval, dataset, &resolved));
            match accepted {
                Some(next) if next != theta => {
                    theta = next;
                    eval = self.evaluate(&theta, dataset, &resolved, true);
                }
                // No ascent possible at machine precision.
                _ => {
                    converged = eval.grad.amax() < options.grad_tol;
                    break;
                }
            }
        }
        if !converged && eval.grad.amax() < options.grad_tol {
            converged = true;
        }

        let (std_errors, degenerate) = standard_errors(&eval.info);
        let normal = Normal::standard();
        let parameters = self
            .parameter_names()
            .into_iter()
            .enumerate()
            .map(|(k, name)| {
                let se = std_errors[k];
                let z = theta[k] / se;
                let p_value = if z.is_finite() {
                    2.0 * (1.0 - normal.cdf(z.abs()))
                } else if se.is_infinite() {
                    1.0
                } else {
                    0.0
                };
                ParameterEstimate {
                    name,
                    estimate: theta[k],
                    se,
                    p_value: p_value.clamp(0.0, 1.0),
                }
            })
            .collect();
        Ok(FitResult {
            parameters,
            log_likelihood: eval.ll,
            n_observations: dataset.total_weight().round() as u64,
            converged,
            iterations,
            degenerate,
            clamped: eval.clamped,
        })
    }
}

fn cap_step(d: DVector<f64>, max: f64) -> DVector<f64> {
    let m = d.amax();
    if m > max {
        d * (max / m)
    } else {
        d
    }
}

/// Square roots of the diagonal of the inverse information.
fn standard_errors(info: &DMatrix<f64>) -> (Vec<f64>, bool) {
    let p = info.nrows();
    match info.clone().cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            let se: Vec<f64> = (0..p)
                .map(|k| {
                    let v = inv[(k, k)];
                    if v.is_finite() && v >= 0.0 {
                        v.sqrt()
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            let degenerate = se.iter().any(|s| s.is_infinite());
            (se, degenerate)
        }
        None => (vec![f64::INFINITY; p], true),
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn logit(utilities: &[f64]) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub rmse: f64,
    pub mae: f64,
}

/// Error of predicted probabilities against ground-truth empirical choice
/// shares, one cell per (test scenario, alternative), cells weighted equally.
pub fn predict_metrics(
    model: &MnlModel,
    params: &MnlParams,
    test_scenarios: &[Scenario],
    ground_truth: &RunPool,
) -> Result<PredictionMetrics> {
    if test_scenarios.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    if ground_truth.alternatives() != model.alternatives.as_slice() {
        return Err(Error::Validation(
            "ground-truth pool alternatives differ from the model's".into(),
        ));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut cells = 0usize;
    for s in test_scenarios {
        let predicted = model.choice_probabilities(params, s)?;
        let observed = empirical_choice_share(ground_truth, &s.id)?;
        for (p, o) in predicted.iter().zip(&observed.values) {
            sq += (p - o).powi(2);
            abs += (p - o).abs();
            cells += 1;
        }
    }
    let n = cells as f64;
    Ok(PredictionMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefVector;
    use crate::estimation::RunRecord;

    fn model() -> MnlModel {
        MnlModel::new(
            vec!["Pampers".into(), "Huggies".into(), "neither".into()],
            2,
        )
        .unwrap()
    }

    fn scen(id: &str, p: f64) -> Scenario {
        Scenario {
            id: id.into(),
            prices: vec![p, 30.0, 0.0],
        }
    }

    fn truth() -> MnlParams {
        MnlParams {
            alpha: vec![32.016, 29.444],
            beta: -0.463,
        }
    }

    #[test]
    fn utilities_examples() {
        let m = model();
        let zero = MnlParams {
            alpha: vec![0.0, 0.0],
            beta: 0.0,
        };
        assert_eq!(
            m.utilities(&zero, &scen("a", 33.0)).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        let u = m.utilities(&truth(), &scen("a", 30.0)).unwrap();
        assert!((u[0] - 18.126).abs() < 1e-12);
        assert_eq!(u[2], 0.0);
        let u31 = m.utilities(&truth(), &scen("a", 31.0)).unwrap();
        assert!((u31[0] - u[0] + 0.463).abs() < 1e-12);
        let bad = MnlParams {
            alpha: vec![1.0],
            beta: 0.0,
        };
        assert!(m.utilities(&bad, &scen("a", 30.0)).is_err());
        let no_outside = Scenario {
            id: "x".into(),
            prices: vec![1.0, 2.0, 3.0],
        };
        assert!(m.utilities(&truth(), &no_outside).is_err());
    }

    #[test]
    fn probabilities_examples() {
        let m = model();
        let zero = MnlParams {
            alpha: vec![0.0, 0.0],
            beta: 0.0,
        };
        for p in m.choice_probabilities(&zero, &scen("a", 30.0)).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = m.choice_probabilities(&truth(), &scen("a", 30.0)).unwrap();
        let want = 1.0 / (1.0 + (-2.572f64).exp() + (-18.126f64).exp());
        assert!((p[0] - want).abs() < 1e-12);
        assert!((p[0] - 0.929).abs() < 5e-4);
        let huge = MnlParams {
            alpha: vec![1e6, 0.0],
            beta: 0.0,
        };
        let p = m.choice_probabilities(&huge, &scen("a", 30.0)).unwrap();
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn log_likelihood_examples() {
        let m = model();
        let zero = MnlParams {
            alpha: vec![0.0, 0.0],
            beta: 0.0,
        };
        let scenarios = vec![scen("a", 25.0), scen("b", 35.0)];
        let mut d = MnlDataset::default();
        d.push("a".into(), vec![1.0, 0.0, 0.0]).unwrap();
        assert!(
            (m.log_likelihood(&zero, &d, &scenarios).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15
        );

        // d = P: L = sum P log P, evaluated by hand
        let params = MnlParams {
            alpha: vec![1.0, 0.5],
            beta: -0.05,
        };
        let mut d = MnlDataset::default();
        let mut want = 0.0;
        for s in &scenarios {
            let u = [1.0 - 0.05 * s.prices[0], 0.5 - 0.05 * 30.0, 0.0];
            let z: f64 = u.iter().map(|v: &f64| v.exp()).sum();
            let p: Vec<f64> = u.iter().map(|v| v.exp() / z).collect();
            want += p.iter().map(|q| q * q.ln()).sum::<f64>();
            d.push(s.id.clone(), p).unwrap();
        }
        let ll = m.log_likelihood(&params, &d, &scenarios).unwrap();
        assert!((ll - want).abs() < 1e-12);
        let doubled = m
            .log_likelihood(&params, &d.scale(2.0), &scenarios)
            .unwrap();
        assert!((doubled - 2.0 * ll).abs() < 1e-12);

        let mut unknown = MnlDataset::default();
        unknown.push("zzz".into(), vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            m.log_likelihood(&params, &unknown, &scenarios),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn score_vanishes_when_data_match_model() {
        let m = model();
        let params = MnlParams {
            alpha: vec![2.0, 1.0],
            beta: -0.1,
        };
        let scenarios: Vec<_> = (0..5)
            .map(|i| scen(&format!("s{i}"), 25.0 + 3.0 * i as f64))
            .collect();
        let mut d = MnlDataset::default();
        for s in &scenarios {
            let p = m.choice_probabilities(&params, s).unwrap();
            d.push(s.id.clone(), p.iter().map(|q| q * 7.0).collect())
                .unwrap();
        }
        let g = m.score(&params, &d, &scenarios).unwrap();
        assert!(g.amax() < 1e-10, "{g}");
    }

    #[test]
    fn price_component_of_score_tracks_share_imbalance() {
        // two alternatives (brand + outside), brand price 10 everywhere
        let m = MnlModel::new(vec!["A".into(), "out".into()], 1).unwrap();
        let scenarios = vec![Scenario {
            id: "s".into(),
            prices: vec![10.0, 0.0],
        }];
        let params = MnlParams {
            alpha: vec![0.0],
            beta: 0.0,
        };
        let mut d = MnlDataset::default();
        d.push("s".into(), vec![0.8, 0.2]).unwrap();
        let g = m.score(&params, &d, &scenarios).unwrap();
        // P = (.5, .5): d_alpha = .8 - .5, d_beta = 10 * (.8 - .5)
        assert!((g[0] - 0.3).abs() < 1e-15);
        assert!((g[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn symmetric_brands_get_equal_intercepts() {
        let m = model();
        let scenarios = vec![
            Scenario {
                id: "a".into(),
                prices: vec![30.0, 30.0, 0.0],
            },
            Scenario {
                id: "b".into(),
                prices: vec![35.0, 35.0, 0.0],
            },
        ];
        let mut d = MnlDataset::default();
        d.push("a".into(), vec![0.4, 0.4, 0.2]).unwrap();
        d.push("b".into(), vec![0.3, 0.3, 0.4]).unwrap();
        let fit = m
            .fit_mle(
                &d,
                &scenarios,
                &FitOptions {
                    init_seed: 3,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(fit.converged);
        let p = fit.params();
        assert!((p.alpha[0] - p.alpha[1]).abs() < 1e-8);
    }

    #[test]
    fn fit_needs_two_price_points() {
        let m = model();
        let scenarios = vec![scen("a", 30.0)];
        let mut d = MnlDataset::default();
        d.push("a".into(), vec![0.5, 0.3, 0.2]).unwrap();
        assert!(matches!(
            m.fit_mle(&d, &scenarios, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn separated_choice_data_does_not_blow_up() {
        let m = model();
        let scenarios: Vec<_> = (25..=28)
            .map(|p| scen(&format!("p{p}"), p as f64))
            .collect();
        let mut d = MnlDataset::default();
        for s in &scenarios {
            d.push(s.id.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        }
        let fit = m.fit_mle(&d, &scenarios, &FitOptions::default()).unwrap();
        assert!(fit.parameters.iter().all(|p| p.estimate.is_finite()));
        assert!(fit
            .parameters
            .iter()
            .all(|p| (0.0..=1.0).contains(&p.p_value)));
        assert!(fit.log_likelihood <= 0.0);
    }

    #[test]
    fn metrics_examples() {
        let m = model();
        let zero = MnlParams {
            alpha: vec![0.0, 0.0],
            beta: 0.0,
        };
        let mut pool = RunPool::new(m.alternatives.clone());
        for i in 0..4 {
            pool.push(RunRecord {
                scenario: "t".into(),
                run_index: i,
                choice: 0,
                belief: BeliefVector::one_hot(3, 0),
                pivot_index: 0,
            })
            .unwrap();
        }
        let t = scen("t", 30.0);
        let met = predict_metrics(&m, &zero, std::slice::from_ref(&t), &pool).unwrap();
        assert!((met.rmse - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
        assert!((met.mae - 4.0 / 9.0).abs() < 1e-15);
        assert!(met.rmse >= met.mae);

        let sure = MnlParams {
            alpha: vec![800.0, 0.0],
            beta: 0.0,
        };
        let met = predict_metrics(&m, &sure, &[t], &pool).unwrap();
        assert_eq!((met.rmse, met.mae), (0.0, 0.0));
        assert!(predict_metrics(&m, &zero, &[], &pool).is_err());
    }

    #[test]
    fn fit_result_serializes_table_fields() {
        let m = model();
        let scenarios: Vec<_> = (25..=30)
            .map(|p| scen(&format!("p{p}"), p as f64))
            .collect();
        let mut d = MnlDataset::default();
        for s in &scenarios {
            d.push(s.id.clone(), m.choice_probabilities(&truth(), s).unwrap())
                .unwrap();
        }
        let fit = m.fit_mle(&d, &scenarios, &FitOptions::default()).unwrap();
        let v = serde_json::to_value(&fit).unwrap();
        assert_eq!(v["parameters"][2]["name"], "beta");
        for key in ["estimate", "se", "p_value"] {
            assert!(v["parameters"][0].get(key).is_some());
        }
        assert!(v.get("log_likelihood").is_some());
        assert_eq!(v["n_observations"], 6);
    }
}
