//! Calibrated scripted oracle for the demand study.
//!
//! Pivot beliefs come from a known MNL parameter vector, shifted per response
//! template by an offset on the focal brand's utility. Beliefs therefore
//! depend on the prefix, while the choice distribution of every scenario is
//! known in closed form.

use indexmap::IndexMap;

use crate::error::Result;
use crate::mnl::{logit, MnlModel, MnlParams, Scenario};
use crate::scripted::{build_scripted_lm, ScriptedLmDocument, ScriptedLmSpec, TemplateDocument};

/// Parameters the default oracle is generated from.
pub fn reference_params() -> MnlParams {
    MnlParams {
        alpha: vec![32.016, 29.444],
        beta: -0.463,
    }
}

/// One response pattern of the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplatePreset {
    pub prefix: Vec<&'static str>,
    pub weight: f64,
    /// Added to the focal brand's utility when this template is drawn.
    pub focal_offset: f64,
}

/// Four response patterns: two short, one long, one hedged lead-in. Offsets
/// of +0.5 and -0.5 each carry half the template weight.
pub fn default_templates() -> Vec<TemplatePreset> {
    vec![
        TemplatePreset {
            prefix: vec!["I", " would", " choose", " **"],
            weight: 0.4,
            focal_offset: 0.5,
        },
        TemplatePreset {
            prefix: vec!["I", " would", " choose", " to", " buy", " **"],
            weight: 0.3,
            focal_offset: -0.5,
        },
        TemplatePreset {
            prefix: vec![
                "Based",
                " on",
                " the",
                " information",
                " provided",
                " ,",
                " I",
                " would",
                " choose",
                " **",
            ],
            weight: 0.2,
            focal_offset: -0.5,
        },
        TemplatePreset {
            prefix: vec!["I", " would", " buy", " **"],
            weight: 0.1,
            focal_offset: 0.5,
        },
    ]
}

/// Build the oracle over `scenarios` (focal, competitor, outside order).
pub fn calibrated_oracle(
    model: &MnlModel,
    params: &MnlParams,
    scenarios: &[Scenario],
    templates: &[TemplatePreset],
) -> Result<ScriptedLmSpec> {
    let names: Vec<String> = model.alternatives.iter().map(|a| a.to_string()).collect();
    let mut markers = IndexMap::new();
    markers.insert(names[0].clone(), vec!["P".to_owned(), "Pamp".to_owned()]);
    markers.insert(names[1].clone(), vec!["H".to_owned(), "Hug".to_owned()]);
    markers.insert(
        names[2].clone(),
        vec!["neither".to_owned(), "Neither".to_owned()],
    );

    let mut docs = Vec::with_capacity(templates.len());
    for t in templates {
        let mut beliefs = IndexMap::new();
        for s in scenarios {
            let mut u = model.utilities(params, s)?;
            u[0] += t.focal_offset;
            let b = logit(&u);
            beliefs.insert(
                s.id.to_string(),
                names.iter().cloned().zip(b).collect::<IndexMap<_, _>>(),
            );
        }
        docs.push(TemplateDocument {
            prefix: t.prefix.iter().map(|s| (*s).to_owned()).collect(),
            weight: t.weight,
            pivot_beliefs: beliefs,
        });
    }
    build_scripted_lm(ScriptedLmDocument {
        markers,
        templates: docs,
        filler: vec![".".into(), ",".into(), " the".into(), " diapers".into()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::grid::{build_scenarios, ScenarioGrid};

    #[test]
    fn oracle_covers_grid_with_prefix_dependent_beliefs() {
        let grid = ScenarioGrid::default();
        let scenarios = build_scenarios(&grid).unwrap();
        let lm = calibrated_oracle(
            &grid.model(),
            &reference_params(),
            &scenarios,
            &default_templates(),
        )
        .unwrap();
        assert_eq!(lm.scenarios().len(), 16);
        let s = &scenarios[6].id;
        let b0 = &lm.templates()[0].pivot_beliefs[s];
        let b1 = &lm.templates()[1].pivot_beliefs[s];
        assert!(b0[0] > b1[0]);
        assert!(lm.vocabulary().len() >= 20);
    }
}
