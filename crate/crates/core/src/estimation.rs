//! Choice and belief share estimators over a pool of runs, their sampling
//! (co)variances, and the run-count arithmetic built on them.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, ExtractionDiagnostics};
use crate::error::{Error, Result};
use crate::ids::{AlternativeId, ScenarioId};
use crate::token::SIMPLEX_TOL;

/// Which per-run outcome an estimator consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// One-hot indicator of the sampled alternative.
    Choice,
    /// Pivot-position belief vector.
    Belief,
}

impl Measure {
    pub const BOTH: [Measure; 2] = [Measure::Choice, Measure::Belief];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Choice => "choice",
            Measure::Belief => "belief",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "choice" => Ok(Measure::Choice),
            "belief" => Ok(Measure::Belief),
            other => Err(Error::Validation(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: ScenarioId,
    pub run_index: u64,
    /// Index of the chosen alternative in the pool's alternative list.
    pub choice: usize,
    pub belief: BeliefVector,
    pub pivot_index: usize,
}

impl RunRecord {
    /// Value of `measure` for alternative `alt` on this run.
    pub fn outcome(&self, measure: Measure, alt: usize) -> f64 {
        match measure {
            Measure::Choice => f64::from(u8::from(self.choice == alt)),
            Measure::Belief => self.belief.values[alt],
        }
    }
}

/// Run records grouped by scenario, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPool {
    alternatives: Vec<AlternativeId>,
    scenarios: IndexMap<ScenarioId, Vec<RunRecord>>,
    pub diagnostics: ExtractionDiagnostics,
}

impl RunPool {
    pub fn new(alternatives: Vec<AlternativeId>) -> Self {
        Self {
            alternatives,
            scenarios: IndexMap::new(),
            diagnostics: ExtractionDiagnostics::default(),
        }
    }

    pub fn alternatives(&self) -> &[AlternativeId] {
        &self.alternatives
    }

    pub fn alternative_index(&self, alt: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a.as_str() == alt)
    }

    pub fn push(&mut self, record: RunRecord) -> Result<()> {
        if record.belief.len() != self.alternatives.len() {
            return Err(Error::DimensionMismatch {
                left: record.belief.len(),
                right: self.alternatives.len(),
            });
        }
        if record.choice >= self.alternatives.len() {
            return Err(Error::Validation(format!(
                "choice index {} out of range",
                record.choice
            )));
        }
        self.scenarios
            .entry(record.scenario.clone())
            .or_default()
            .push(record);
        Ok(())
    }

    /// Makes sure an (empty) entry exists so scenario order is fixed up front.
    pub fn ensure_scenario(&mut self, scenario: &ScenarioId) {
        self.scenarios.entry(scenario.clone()).or_default();
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = RunRecord>) -> Result<()> {
        records.into_iter().try_for_each(|r| self.push(r))
    }

    /// Checks that run indices are unique within every scenario.
    pub fn validate(&self) -> Result<()> {
        for (s, recs) in &self.scenarios {
            let mut seen = HashSet::with_capacity(recs.len());
            if let Some(r) = recs.iter().find(|r| !seen.insert(r.run_index)) {
                return Err(Error::Validation(format!(
                    "duplicate run index {} in scenario {s}",
                    r.run_index
                )));
            }
        }
        Ok(())
    }

    pub fn scenario_ids(&self) -> impl Iterator<Item = &ScenarioId> {
        self.scenarios.keys()
    }

    pub fn records(&self, scenario: &ScenarioId) -> Result<&[RunRecord]> {
        self.scenarios
            .get(scenario)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownScenario(scenario.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RunRecord> {
        self.scenarios.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.scenarios.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn nonempty(&self, scenario: &ScenarioId, min: usize) -> Result<&[RunRecord]> {
        let recs = self.records(scenario)?;
        if recs.len() < min {
            return Err(Error::InsufficientData(format!(
                "scenario {scenario} has {} records, need at least {min}",
                recs.len()
            )));
        }
        Ok(recs)
    }
}

/// An empirical share vector and the number of runs behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareVector {
    pub values: Vec<f64>,
    pub n_runs: usize,
}

impl ShareVector {
    pub fn is_on_simplex(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
            && (self.values.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }
}

fn mean_share(pool: &RunPool, scenario: &ScenarioId, measure: Measure) -> Result<ShareVector> {
    let recs = pool.nonempty(scenario, 1)?;
    let k = pool.alternatives.len();
    let mut acc = vec![0.0; k];
    for r in recs {
        match measure {
            Measure::Choice => acc[r.choice] += 1.0,
            Measure::Belief => acc
                .iter_mut()
                .zip(&r.belief.values)
                .for_each(|(a, b)| *a += b),
        }
    }
    let n = recs.len() as f64;
    Ok(ShareVector {
        values: acc.into_iter().map(|a| a / n).collect(),
        n_runs: recs.len(),
    })
}

/// Fraction of runs choosing each alternative.
pub fn empirical_choice_share(pool: &RunPool, scenario: &ScenarioId) -> Result<ShareVector> {
    mean_share(pool, scenario, Measure::Choice)
}

/// Average belief vector.
pub fn empirical_belief_share(pool: &RunPool, scenario: &ScenarioId) -> Result<ShareVector> {
    mean_share(pool, scenario, Measure::Belief)
}

pub fn empirical_share(
    pool: &RunPool,
    scenario: &ScenarioId,
    measure: Measure,
) -> Result<ShareVector> {
    mean_share(pool, scenario, measure)
}

/// Unbiased (n - 1) sample variance of one alternative's per-run outcome.
pub fn sample_variance(
    pool: &RunPool,
    scenario: &ScenarioId,
    alt: usize,
    measure: Measure,
) -> Result<f64> {
    let recs = pool.nonempty(scenario, 2)?;
    check_alt(pool, alt)?;
    let n = recs.len() as f64;
    let mean = recs.iter().map(|r| r.outcome(measure, alt)).sum::<f64>() / n;
    let ss: f64 = recs
        .iter()
        .map(|r| (r.outcome(measure, alt) - mean).powi(2))
        .sum();
    Ok(ss / (n - 1.0))
}

fn check_alt(pool: &RunPool, alt: usize) -> Result<()> {
    if alt >= pool.alternatives.len() {
        return Err(Error::UnknownAlternative(format!("index {alt}")));
    }
    Ok(())
}

/// Symmetric covariance matrix over the alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                left: m.nrows(),
                right: m.ncols(),
            });
        }
        for i in 0..m.nrows() {
            if m[(i, i)] < 0.0 {
                return Err(Error::Validation(format!(
                    "negative variance {} on the diagonal",
                    m[(i, i)]
                )));
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                left: r.len(),
                right: n,
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Unbiased sample covariance of the per-run outcome vectors.
pub fn sample_covariance(
    pool: &RunPool,
    scenario: &ScenarioId,
    measure: Measure,
) -> Result<CovMatrix> {
    let recs = pool.nonempty(scenario, 2)?;
    let k = pool.alternatives.len();
    let mean = mean_share(pool, scenario, measure)?.values;
    let mut m = DMatrix::zeros(k, k);
    let mut dev = vec![0.0; k];
    for r in recs {
        for (a, d) in dev.iter_mut().enumerate() {
            *d = r.outcome(measure, a) - mean[a];
        }
        for i in 0..k {
            for j in 0..=i {
                m[(i, j)] += dev[i] * dev[j];
            }
        }
    }
    let denom = (recs.len() - 1) as f64;
    for i in 0..k {
        for j in 0..=i {
            let v = m[(i, j)] / denom;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    CovMatrix::new(m)
}

/// Smallest eigenvalue of `sigma_c - sigma_b`; nonnegative (up to noise)
/// means `sigma_b` is below `sigma_c` in the Loewner order.
pub fn loewner_gap(sigma_c: &CovMatrix, sigma_b: &CovMatrix) -> Result<f64> {
    if sigma_c.dim() != sigma_b.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma_c.dim(),
            right: sigma_b.dim(),
        });
    }
    let diff = &sigma_c.0 - &sigma_b.0;
    let eig = diff.symmetric_eigenvalues();
    Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Runs needed for accuracy `epsilon` with probability at least `1 - delta`
/// by Chebyshev: `ceil(variance / (epsilon^2 delta))`, never below one.
pub fn chebyshev_run_count(variance: f64, epsilon: f64, delta: f64) -> Result<u64> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!(
            "variance {variance} must be finite and >= 0"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} must lie in (0, 1)")));
    }
    let n = (variance / (epsilon * epsilon * delta)).ceil();
    Ok((n as u64).max(1))
}

/// Componentwise `|belief share - choice share|`.
pub fn equivalence_gap(pool: &RunPool, scenario: &ScenarioId) -> Result<Vec<f64>> {
    let c = empirical_choice_share(pool, scenario)?;
    let b = empirical_belief_share(pool, scenario)?;
    Ok(b.values
        .iter()
        .zip(&c.values)
        .map(|(b, c)| (b - c).abs())
        .collect())
}

/// Choice-minus-belief sample variance for one alternative, with a standard
/// error for the difference and the mean conditional variance `E[b(1-b)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGap {
    pub choice_variance: f64,
    pub belief_variance: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub mean_conditional_variance: f64,
    pub n: usize,
}

pub fn variance_gap(pool: &RunPool, scenario: &ScenarioId, alt: usize) -> Result<VarianceGap> {
    let recs = pool.nonempty(scenario, 2)?;
    check_alt(pool, alt)?;
    let n = recs.len() as f64;
    let mc = recs
        .iter()
        .map(|r| r.outcome(Measure::Choice, alt))
        .sum::<f64>()
        / n;
    let mb = recs
        .iter()
        .map(|r| r.outcome(Measure::Belief, alt))
        .sum::<f64>()
        / n;
    // Per-run contribution to the variance difference; its spread gives the SE.
    let z: Vec<f64> = recs
        .iter()
        .map(|r| {
            (r.outcome(Measure::Choice, alt) - mc).powi(2)
                - (r.outcome(Measure::Belief, alt) - mb).powi(2)
        })
        .collect();
    let zbar = z.iter().sum::<f64>() / n;
    let zvar = z.iter().map(|v| (v - zbar).powi(2)).sum::<f64>() / (n - 1.0);
    let choice_variance = sample_variance(pool, scenario, alt, Measure::Choice)?;
    let belief_variance = sample_variance(pool, scenario, alt, Measure::Belief)?;
    let mean_conditional_variance = recs
        .iter()
        .map(|r| {
            let b = r.belief.values[alt];
            b * (1.0 - b)
        })
        .sum::<f64>()
        / n;
    Ok(VarianceGap {
        choice_variance,
        belief_variance,
        gap: choice_variance - belief_variance,
        gap_se: (zvar / n).sqrt() * n / (n - 1.0),
        mean_conditional_variance,
        n: recs.len(),
    })
}

/// One row of the per-scenario estimator table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub scenario: String,
    pub alternative: String,
    pub measure: Measure,
    pub share: f64,
    /// Unbiased per-run variance; NaN with fewer than two runs.
    pub variance: f64,
    pub n_effective: usize,
}

pub fn estimator_table(pool: &RunPool) -> Result<Vec<EstimatorRow>> {
    let mut rows = Vec::new();
    for s in pool.scenario_ids() {
        let n = pool.records(s)?.len();
        if n == 0 {
            continue;
        }
        for measure in Measure::BOTH {
            let share = empirical_share(pool, s, measure)?;
            for (a, alt) in pool.alternatives.iter().enumerate() {
                let variance = if n >= 2 {
                    sample_variance(pool, s, a, measure)?
                } else {
                    f64::NAN
                };
                rows.push(EstimatorRow {
                    scenario: s.to_string(),
                    alternative: alt.to_string(),
                    measure,
                    share: share.values[a],
                    variance,
                    n_effective: n,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV columns: scenario, alternative, measure, share, variance, n_effective.
pub fn write_estimator_csv<W: Write>(rows: &[EstimatorRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alts() -> Vec<AlternativeId> {
        vec!["P".into(), "H".into(), "N".into()]
    }

    fn pool_of(rows: &[(usize, [f64; 3])]) -> RunPool {
        let mut pool = RunPool::new(alts());
        for (i, (c, b)) in rows.iter().enumerate() {
            pool.push(RunRecord {
                scenario: "s".into(),
                run_index: i as u64,
                choice: *c,
                belief: BeliefVector::new(b.to_vec(), vec![false; 3]).unwrap(),
                pivot_index: 0,
            })
            .unwrap();
        }
        pool
    }

    fn s() -> ScenarioId {
        "s".into()
    }

    #[test]
    fn choice_share_counts() {
        let u = [1.0, 0.0, 0.0];
        let pool = pool_of(&[(0, u), (0, u), (1, u), (2, u)]);
        assert_eq!(
            empirical_choice_share(&pool, &s()).unwrap().values,
            vec![0.5, 0.25, 0.25]
        );
        let pool = pool_of(&[(0, u), (0, u)]);
        assert_eq!(
            empirical_choice_share(&pool, &s()).unwrap().values,
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn belief_share_averages() {
        let pool = pool_of(&[(0, [0.6, 0.4, 0.0]), (0, [0.2, 0.4, 0.4])]);
        let b = empirical_belief_share(&pool, &s()).unwrap();
        for (g, w) in b.values.iter().zip([0.4, 0.4, 0.2]) {
            assert!((g - w).abs() < 1e-15);
        }
        let pool = pool_of(&[(0, [0.6, 0.3, 0.1])]);
        assert_eq!(
            empirical_belief_share(&pool, &s()).unwrap().values,
            vec![0.6, 0.3, 0.1]
        );
    }

    #[test]
    fn empty_scenario_is_an_error() {
        let mut pool = RunPool::new(alts());
        pool.ensure_scenario(&s());
        assert!(matches!(
            empirical_choice_share(&pool, &s()),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            empirical_choice_share(&pool, &"x".into()),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn variances() {
        let b = [0.3, 0.3, 0.4];
        let pool = pool_of(&[(0, b), (1, b), (0, b)]);
        assert_eq!(
            sample_variance(&pool, &s(), 0, Measure::Belief).unwrap(),
            0.0
        );
        let pool = pool_of(&[(0, b), (1, b)]);
        assert!((sample_variance(&pool, &s(), 0, Measure::Choice).unwrap() - 0.5).abs() < 1e-15);
        let pool = pool_of(&[(0, b)]);
        assert!(matches!(
            sample_variance(&pool, &s(), 0, Measure::Choice),
            Err(Error::InsufficientData(_))
        ));
        assert!(sample_covariance(&pool, &s(), Measure::Choice).is_err());
    }

    #[test]
    fn constant_beliefs_have_zero_covariance() {
        let b = [0.5, 0.25, 0.25];
        let pool = pool_of(&[(0, b), (1, b), (2, b)]);
        let cov = sample_covariance(&pool, &s(), Measure::Belief).unwrap();
        assert!(cov.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loewner_gap_examples() {
        let a = CovMatrix::from_rows(&[&[0.3, -0.1], &[-0.1, 0.2]]).unwrap();
        assert_eq!(loewner_gap(&a, &a).unwrap(), 0.0);
        let two = CovMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 2.0]]).unwrap();
        let one = CovMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((loewner_gap(&two, &one).unwrap() - 1.0).abs() < 1e-15);
        let three =
            CovMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            loewner_gap(&two, &three),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(CovMatrix::from_rows(&[&[1.0, 0.5], &[0.4, 1.0]]).is_err());
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev_run_count(0.0046, 0.0096, 0.05).unwrap(), 999);
        assert_eq!(chebyshev_run_count(0.1109, 0.0471, 0.05).unwrap(), 1000);
        assert_eq!(chebyshev_run_count(0.0, 0.1, 0.5).unwrap(), 1);
        assert!(chebyshev_run_count(0.1, 0.0, 0.5).is_err());
        assert!(chebyshev_run_count(0.1, 0.1, 1.0).is_err());
        assert!(chebyshev_run_count(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn equivalence_gap_single_run() {
        let pool = pool_of(&[(0, [0.6, 0.3, 0.1])]);
        let g = equivalence_gap(&pool, &s()).unwrap();
        for (got, want) in g.iter().zip([0.4, 0.3, 0.1]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_beliefs_close_every_gap() {
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let c = i % 3;
                let mut b = [0.0; 3];
                b[c] = 1.0;
                (c, b)
            })
            .collect();
        let pool = pool_of(&rows);
        assert!(equivalence_gap(&pool, &s())
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
        let vg = variance_gap(&pool, &s(), 0).unwrap();
        assert_eq!(vg.gap, 0.0);
        assert_eq!(vg.mean_conditional_variance, 0.0);
    }

    #[test]
    fn estimator_csv_has_stable_columns() {
        let pool = pool_of(&[(0, [0.6, 0.3, 0.1]), (1, [0.2, 0.7, 0.1])]);
        let rows = estimator_table(&pool).unwrap();
        assert_eq!(rows.len(), 6);
        let mut buf = Vec::new();
        write_estimator_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,alternative,measure,share,variance,n_effective\n"));
        assert!(text.contains("s,P,choice,0.5,0.5,2\n"));
    }
}
