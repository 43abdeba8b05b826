//! Synthesis of the prompt's domain-knowledge block from descriptive
//! statistics and the fitted logistic model.
//!
//! Model-derived facts take precedence: a variable carried by the fitted
//! model always gets a coefficient-based fact, and any descriptive fact
//! for the same variable is discarded. Descriptive facts are admitted for
//! the remaining categorical variables when their yield-rate gap clears a
//! configurable threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logit::{Encoding, LogitModel};
use crate::schema::{VariableCategory, VariableSchema};
use crate::stats::StatsRun;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(
        "provenance mismatch: statistics were computed on partition {stats} but the model \
         was fitted on {model}"
    )]
    ProvenanceMismatch { stats: String, model: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactSource {
    Logit,
    Descriptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increases,
    Decreases,
}

/// Numeric payload backing a fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FactEvidence {
    /// Model coefficient and its odds ratio.
    Coefficient { beta: f64, odds_ratio: f64 },
    /// Yield-rate contrast between two categories (fractions in [0,1]).
    RateGap {
        high_category: String,
        high_rate: f64,
        low_category: String,
        low_rate: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeFact {
    pub category: VariableCategory,
    pub variable: String,
    pub direction: Direction,
    pub magnitude_text: String,
    pub source: FactSource,
    pub evidence: FactEvidence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// Facts ordered by category then variable name.
    pub facts: Vec<KnowledgeFact>,
    pub stats_provenance: String,
    pub model_provenance: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KnowledgeConfig {
    /// Minimum absolute yield-rate gap (fraction) for a descriptive fact.
    pub descriptive_gap_threshold: f64,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            descriptive_gap_threshold: 0.10,
        }
    }
}

/// Integer-rounded percent, the figure style used in the rendered facts.
fn pct(rate: f64) -> i64 {
    (rate * 100.0).round() as i64
}

fn fold_word(direction: Direction) -> &'static str {
    match direction {
        Direction::Increases => "increase",
        Direction::Decreases => "decrease",
    }
}

/// Builds the knowledge base. Statistics and model must come from the same
/// event partition.
pub fn synthesize(
    stats: &StatsRun,
    model: &LogitModel,
    schema: &VariableSchema,
    config: &KnowledgeConfig,
) -> Result<KnowledgeBase, KnowledgeError> {
    if stats.provenance != model.provenance {
        return Err(KnowledgeError::ProvenanceMismatch {
            stats: stats.provenance.clone(),
            model: model.provenance.clone(),
        });
    }

    let mut facts: Vec<KnowledgeFact> = Vec::new();

    // Coefficient-based facts, one per model variable. When several
    // indicator terms of one variable were selected, the largest-|z| term
    // carries the fact.
    let mut model_variables: Vec<&str> = Vec::new();
    for term in &model.terms {
        let variable = term.column.variable.as_str();
        if model_variables.contains(&variable) {
            continue;
        }
        model_variables.push(variable);
        let best = model
            .terms
            .iter()
            .filter(|t| t.column.variable == variable)
            .max_by(|a, b| a.z_score.abs().partial_cmp(&b.z_score.abs()).unwrap())
            .expect("at least one term");
        let Some(spec) = schema.get(variable) else {
            continue;
        };
        let direction = if best.coefficient >= 0.0 {
            Direction::Increases
        } else {
            Direction::Decreases
        };
        let display = spec.display_name();
        let magnitude_text = match &best.column.encoding {
            Encoding::Numeric => {
                let unit = spec.unit.as_deref().unwrap_or("unit");
                format!(
                    "Each 1 {unit} increase in {display} is associated with a {:.2}-fold {} \
                     in the odds of yielding.",
                    best.odds_ratio,
                    fold_word(direction),
                )
            }
            Encoding::Indicator(level) => {
                format!(
                    "{display} = {level} is associated with an odds ratio of {:.2} for \
                     yielding (a {}% {}).",
                    best.odds_ratio,
                    pct(best.odds_ratio - 1.0).abs(),
                    fold_word(direction),
                )
            }
        };
        facts.push(KnowledgeFact {
            category: spec.category,
            variable: variable.to_string(),
            direction,
            magnitude_text,
            source: FactSource::Logit,
            evidence: FactEvidence::Coefficient {
                beta: best.coefficient,
                odds_ratio: best.odds_ratio,
            },
        });
    }

    // Descriptive facts for categorical variables the model does not carry.
    for ct in &stats.crosstabs {
        if model_variables.iter().any(|v| *v == ct.variable) {
            continue;
        }
        let Some(spec) = schema.get(&ct.variable) else {
            continue;
        };
        let populated: Vec<_> = ct.per_category.iter().filter(|c| c.n > 0).collect();
        if populated.len() < 2 {
            continue;
        }
        let hi = populated
            .iter()
            .max_by(|a, b| a.yield_pct.partial_cmp(&b.yield_pct).unwrap())
            .unwrap();
        let lo = populated
            .iter()
            .min_by(|a, b| a.yield_pct.partial_cmp(&b.yield_pct).unwrap())
            .unwrap();
        if hi.yield_pct - lo.yield_pct < config.descriptive_gap_threshold {
            continue;
        }
        let display = spec.display_name();
        let diff = pct(hi.yield_pct) - pct(lo.yield_pct);
        // Binary variables orient on the presence level so the direction
        // speaks about presence; pure categoricals contrast best vs worst.
        let direction = if spec.kind == crate::schema::VariableKind::Binary
            && hi.category == spec.allowed_values[0]
        {
            Direction::Decreases
        } else {
            Direction::Increases
        };
        let magnitude_text = format!(
            "The yielding rate was {}% when {display} = {} versus {}% when {display} = {} \
             ({diff}% higher).",
            pct(hi.yield_pct),
            hi.category,
            pct(lo.yield_pct),
            lo.category,
        );
        facts.push(KnowledgeFact {
            category: spec.category,
            variable: ct.variable.clone(),
            direction,
            magnitude_text,
            source: FactSource::Descriptive,
            evidence: FactEvidence::RateGap {
                high_category: hi.category.clone(),
                high_rate: hi.yield_pct,
                low_category: lo.category.clone(),
                low_rate: lo.yield_pct,
            },
        });
    }

    facts.sort_by(|a, b| a.category.cmp(&b.category).then(a.variable.cmp(&b.variable)));

    Ok(KnowledgeBase {
        facts,
        stats_provenance: stats.provenance.clone(),
        model_provenance: model.provenance.clone(),
    })
}

impl KnowledgeBase {
    pub fn fact_for(&self, variable: &str) -> Option<&KnowledgeFact> {
        self.facts.iter().find(|f| f.variable == variable)
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Category-headed plain-text block; byte-identical across runs for
    /// equal inputs.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for category in VariableCategory::all() {
            let in_cat: Vec<&KnowledgeFact> =
                self.facts.iter().filter(|f| f.category == category).collect();
            if in_cat.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(category.heading());
            out.push('\n');
            for fact in in_cat {
                out.push_str("- ");
                out.push_str(&fact.magnitude_text);
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logit::{ColumnSpec, TermStats};
    use crate::schema::default_schema;
    use crate::stats::{CategoricalCrosstab, CrosstabCell};

    fn term(variable: &str, encoding: Encoding, beta: f64, z: f64) -> TermStats {
        TermStats {
            column: ColumnSpec {
                variable: variable.to_string(),
                encoding,
            },
            coefficient: beta,
            std_error: beta.abs() / z.abs().max(1e-9),
            z_score: z,
            p_value: 0.001,
            odds_ratio: beta.exp(),
        }
    }

    fn model_with(terms: Vec<TermStats>) -> LogitModel {
        LogitModel {
            intercept: -1.0,
            intercept_se: 0.5,
            terms,
            log_likelihood: -100.0,
            n_obs: 500,
            converged: true,
            provenance: "p1".into(),
        }
    }

    fn stats_with(crosstabs: Vec<CategoricalCrosstab>) -> StatsRun {
        StatsRun {
            provenance: "p1".into(),
            crosstabs,
            summaries: vec![],
            site_rates: vec![],
        }
    }

    fn crosstab(variable: &str, cells: &[(&str, f64, usize)]) -> CategoricalCrosstab {
        CategoricalCrosstab {
            variable: variable.to_string(),
            per_category: cells
                .iter()
                .map(|(cat, yld, n)| CrosstabCell {
                    category: cat.to_string(),
                    yield_pct: *yld,
                    nonyield_pct: 1.0 - *yld,
                    n: *n,
                })
                .collect(),
        }
    }

    #[test]
    fn vehicle_speed_fact_uses_fold_phrasing() {
        let schema = default_schema();
        let model = model_with(vec![term("vehicle_speed", Encoding::Numeric, -0.240, -20.99)]);
        let kb = synthesize(&stats_with(vec![]), &model, &schema, &KnowledgeConfig::default())
            .unwrap();
        let fact = kb.fact_for("vehicle_speed").unwrap();
        assert_eq!(fact.source, FactSource::Logit);
        assert_eq!(fact.direction, Direction::Decreases);
        assert!(
            fact.magnitude_text
                .contains("0.79-fold decrease in the odds of yielding"),
            "{}",
            fact.magnitude_text
        );
        assert!(fact.magnitude_text.contains("mph"));
    }

    #[test]
    fn logit_wins_over_conflicting_descriptive() {
        let schema = default_schema();
        // descriptively, parking lots look strongly positive
        let ct = crosstab("parking_lots", &[("No", 0.1596, 1000), ("Yes", 0.5058, 800)]);
        let model = model_with(vec![term(
            "parking_lots",
            Encoding::Indicator("Yes".into()),
            -1.624,
            -6.18,
        )]);
        let kb = synthesize(&stats_with(vec![ct]), &model, &schema, &KnowledgeConfig::default())
            .unwrap();
        let facts: Vec<_> = kb.facts.iter().filter(|f| f.variable == "parking_lots").collect();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].source, FactSource::Logit);
        assert_eq!(facts[0].direction, Direction::Decreases);
        match &facts[0].evidence {
            FactEvidence::Coefficient { beta, odds_ratio } => {
                assert_eq!(*beta, -1.624);
                assert!((odds_ratio - 0.197).abs() < 5e-4);
            }
            other => panic!("expected coefficient evidence, got {other:?}"),
        }
    }

    #[test]
    fn speed_limit_descriptive_fact_renders_paper_style_gap() {
        let schema = default_schema();
        let ct = crosstab("speed_limit", &[("30", 0.4378, 2707), ("35", 0.2537, 607)]);
        let model = model_with(vec![]);
        let kb = synthesize(&stats_with(vec![ct]), &model, &schema, &KnowledgeConfig::default())
            .unwrap();
        let fact = kb.fact_for("speed_limit").unwrap();
        assert_eq!(fact.source, FactSource::Descriptive);
        assert!(
            fact.magnitude_text.contains("19% higher"),
            "{}",
            fact.magnitude_text
        );
        assert!(fact.magnitude_text.contains("44%"));
        assert!(fact.magnitude_text.contains("25%"));
    }

    #[test]
    fn binary_descriptive_direction_follows_presence() {
        let schema = default_schema();
        let ct = crosstab("bike_lanes", &[("No", 0.4365, 500), ("Yes", 0.0822, 300)]);
        let kb = synthesize(
            &stats_with(vec![ct]),
            &model_with(vec![]),
            &schema,
            &KnowledgeConfig::default(),
        )
        .unwrap();
        let fact = kb.fact_for("bike_lanes").unwrap();
        assert_eq!(fact.direction, Direction::Decreases);
    }

    #[test]
    fn below_threshold_gap_is_dropped() {
        let schema = default_schema();
        let ct = crosstab("signage", &[("No", 0.40, 500), ("Yes", 0.45, 300)]);
        let kb = synthesize(
            &stats_with(vec![ct]),
            &model_with(vec![]),
            &schema,
            &KnowledgeConfig::default(),
        )
        .unwrap();
        assert!(kb.fact_for("signage").is_none());
    }

    #[test]
    fn empty_inputs_give_empty_facts() {
        let schema = default_schema();
        let kb = synthesize(
            &stats_with(vec![]),
            &model_with(vec![]),
            &schema,
            &KnowledgeConfig::default(),
        )
        .unwrap();
        assert!(kb.is_empty());
        assert_eq!(kb.render_text(), "");
    }

    #[test]
    fn provenance_mismatch_is_error() {
        let schema = default_schema();
        let mut stats = stats_with(vec![]);
        stats.provenance = "other".into();
        assert!(matches!(
            synthesize(&stats, &model_with(vec![]), &schema, &KnowledgeConfig::default()),
            Err(KnowledgeError::ProvenanceMismatch { .. })
        ));
    }

    #[test]
    fn render_is_category_headed_and_deterministic() {
        let schema = default_schema();
        let model = model_with(vec![
            term("vehicle_speed", Encoding::Numeric, -0.240, -20.99),
            term("crossing_width", Encoding::Numeric, 0.098, 9.38),
        ]);
        let ct = crosstab("markings", &[("Unmarked", 0.0974, 1000), ("Standard", 0.6896, 900), ("Continental", 0.2930, 300)]);
        let kb = synthesize(&stats_with(vec![ct]), &model, &schema, &KnowledgeConfig::default())
            .unwrap();
        let text = kb.render_text();
        assert!(text.contains("Vehicle dynamics and control\n"));
        assert!(text.contains("Road networks and infrastructure\n"));
        let text2 = kb.render_text();
        assert_eq!(text, text2);
        // vehicle dynamics heading precedes road infrastructure
        assert!(
            text.find("Vehicle dynamics").unwrap() < text.find("Road networks").unwrap()
        );
        // one fact line per variable
        assert_eq!(text.matches("- ").count(), 3);
    }

    #[test]
    fn direction_matches_evidence_sign_for_all_facts() {
        let schema = default_schema();
        let model = model_with(vec![
            term("vehicle_speed", Encoding::Numeric, -0.240, -20.99),
            term("crossing_width", Encoding::Numeric, 0.098, 9.38),
            term("restaurants_bars", Encoding::Indicator("Yes".into()), 1.832, 4.48),
        ]);
        let cts = vec![
            crosstab("markings", &[("Unmarked", 0.10, 100), ("Standard", 0.69, 100), ("Continental", 0.29, 100)]),
            crosstab("bike_lanes", &[("No", 0.44, 100), ("Yes", 0.08, 100)]),
        ];
        let kb = synthesize(&stats_with(cts), &model, &schema, &KnowledgeConfig::default())
            .unwrap();
        for fact in &kb.facts {
            match &fact.evidence {
                FactEvidence::Coefficient { beta, .. } => {
                    let expected = if *beta >= 0.0 {
                        Direction::Increases
                    } else {
                        Direction::Decreases
                    };
                    assert_eq!(fact.direction, expected, "{}", fact.variable);
                }
                FactEvidence::RateGap {
                    high_category,
                    high_rate,
                    low_rate,
                    ..
                } => {
                    assert!(high_rate >= low_rate);
                    let spec = schema.get(&fact.variable).unwrap();
                    if spec.kind == crate::schema::VariableKind::Binary {
                        let presence_is_high = *high_category == spec.allowed_values[1];
                        let expected = if presence_is_high {
                            Direction::Increases
                        } else {
                            Direction::Decreases
                        };
                        assert_eq!(fact.direction, expected, "{}", fact.variable);
                    } else {
                        assert_eq!(fact.direction, Direction::Increases, "{}", fact.variable);
                    }
                }
            }
        }
    }
}
