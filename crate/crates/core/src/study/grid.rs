use serde::{Deserialize, Serialize};

use crate::belief::AlternativeSet;
use crate::error::{Error, Result};
use crate::ids::ScenarioId;
use crate::mnl::{MnlModel, Scenario};

/// Focal-brand price grid against a fixed competitor price. The alternative
/// set is ordered focal brand, competitor, outside option.
#[derive(Debug, Clone)]
pub struct ScenarioGrid {
    pub focal_prices: Vec<f64>,
    pub competitor_price: f64,
    pub alternatives: AlternativeSet,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            focal_prices: (25..=40).map(f64::from).collect(),
            competitor_price: 30.0,
            alternatives: default_alternatives(),
        }
    }
}

/// Pampers / Huggies / neither with their common surface forms.
pub fn default_alternatives() -> AlternativeSet {
    AlternativeSet::from_json_str(
        r#"{"alternatives": ["Pampers", "Huggies", "neither"],
            "markers": {"Pampers": [["P"], ["Pamp"]],
                        "Huggies": [["H"], ["Hug"]],
                        "neither": [["neither"], ["Neither"]]}}"#,
    )
    .expect("built-in alternative set is valid")
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<()> {
        if self.focal_prices.is_empty() {
            return Err(Error::Validation("empty focal price list".into()));
        }
        if self.focal_prices.iter().any(|p| !p.is_finite()) || !self.competitor_price.is_finite() {
            return Err(Error::Validation("prices must be finite".into()));
        }
        if self.focal_prices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "focal prices must be strictly increasing".into(),
            ));
        }
        if self.alternatives.len() != 3 {
            return Err(Error::Validation(
                "the price grid expects exactly three alternatives: focal, competitor, outside"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> MnlModel {
        MnlModel::new(self.alternatives.alternatives().to_vec(), 2).expect("three alternatives")
    }
}

pub fn scenario_id(focal_price: f64) -> ScenarioId {
    ScenarioId::new(format!("p{focal_price}"))
}

/// Focal price encoded in a grid scenario id, if `id` is one.
pub fn focal_price_of(id: &ScenarioId) -> Option<f64> {
    let p: f64 = id.as_str().strip_prefix('p')?.parse().ok()?;
    (scenario_id(p) == *id).then_some(p)
}

/// One scenario per focal price; competitor fixed, outside option at 0.
pub fn build_scenarios(grid: &ScenarioGrid) -> Result<Vec<Scenario>> {
    grid.validate()?;
    Ok(grid
        .focal_prices
        .iter()
        .map(|&p| Scenario {
            id: scenario_id(p),
            prices: vec![p, grid.competitor_price, 0.0],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_prices: Vec<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_prices: vec![28.0, 31.0, 37.0],
        }
    }
}

/// Partition by focal price: scenarios whose focal price is listed go to
/// the test side.
pub fn split_train_test(
    scenarios: &[Scenario],
    split: &SplitSpec,
) -> Result<(Vec<Scenario>, Vec<Scenario>)> {
    if let Some(p) = split
        .test_prices
        .iter()
        .find(|p| !scenarios.iter().any(|s| s.prices[0] == **p))
    {
        return Err(Error::Validation(format!(
            "test price {p} is not on the scenario grid"
        )));
    }
    Ok(scenarios
        .iter()
        .cloned()
        .partition(|s| !split.test_prices.contains(&s.prices[0])))
}
