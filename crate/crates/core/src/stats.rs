//! Descriptive statistics: categorical yield/non-yield crosstabs, numeric
//! five-point summaries per outcome class, and per-site yield rates.
//!
//! Proportions are kept as exact fractions and only rendered to fixed
//! decimals at report time. Missing entries are excluded per variable,
//! not listwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{partition_fingerprint, InteractionEvent};
use crate::report::align_table;
use crate::schema::{VariableKind, VariableSchema};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("variable `{0}` is not in the schema")]
    UnknownVariable(String),
    #[error("variable `{variable}` is {kind}, expected {expected}")]
    WrongKind {
        variable: String,
        kind: VariableKind,
        expected: &'static str,
    },
}

/// Per-category yield/non-yield shares for one categorical variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalCrosstab {
    pub variable: String,
    /// Category value → cell; iteration order is the schema's level order.
    pub per_category: Vec<CrosstabCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrosstabCell {
    pub category: String,
    /// Fraction of this category's events where the driver yielded.
    pub yield_pct: f64,
    pub nonyield_pct: f64,
    pub n: usize,
}

impl CategoricalCrosstab {
    pub fn cell(&self, category: &str) -> Option<&CrosstabCell> {
        self.per_category.iter().find(|c| c.category == category)
    }
}

/// Outcome class a summary is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeClass {
    Yield,
    NonYield,
}

/// Five-point summary of a numeric variable within one outcome class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericSummary {
    pub variable: String,
    pub class: OutcomeClass,
    pub n: usize,
    /// min/q25/mean/q75/max; None when the class has no observations.
    pub min: Option<f64>,
    pub q25: Option<f64>,
    pub mean: Option<f64>,
    pub q75: Option<f64>,
    pub max: Option<f64>,
}

/// Yield/non-yield counts and rate for one site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteYieldSummary {
    pub site_id: u32,
    pub n_yield: usize,
    pub n_nonyield: usize,
    pub yield_rate: f64,
}

/// Linear-interpolation quantile between order statistics (the common
/// "type 7" rule). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Yield/non-yield shares within each category of a categorical or binary
/// variable. Missing entries are excluded from the counts.
pub fn crosstab(
    events: &[&InteractionEvent],
    variable: &str,
    schema: &VariableSchema,
) -> Result<CategoricalCrosstab, StatsError> {
    let spec = schema
        .get(variable)
        .ok_or_else(|| StatsError::UnknownVariable(variable.to_string()))?;
    if spec.kind == VariableKind::Numeric {
        return Err(StatsError::WrongKind {
            variable: variable.to_string(),
            kind: spec.kind,
            expected: "categorical or binary",
        });
    }
    let mut yields: BTreeMap<&str, usize> = BTreeMap::new();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for ev in events.iter().copied() {
        if let Some(cat) = ev.value(variable).as_category() {
            if let Some(canonical) = spec.canonical_value(cat) {
                *totals.entry(canonical).or_default() += 1;
                if ev.outcome {
                    *yields.entry(canonical).or_default() += 1;
                }
            }
        }
    }
    let per_category = spec
        .allowed_values
        .iter()
        .map(|level| {
            let n = totals.get(level.as_str()).copied().unwrap_or(0);
            let y = yields.get(level.as_str()).copied().unwrap_or(0);
            let (yield_pct, nonyield_pct) = if n > 0 {
                let yp = y as f64 / n as f64;
                (yp, 1.0 - yp)
            } else {
                (0.0, 0.0)
            };
            CrosstabCell {
                category: level.clone(),
                yield_pct,
                nonyield_pct,
                n,
            }
        })
        .collect();
    Ok(CategoricalCrosstab {
        variable: variable.to_string(),
        per_category,
    })
}

fn summarize_class(variable: &str, class: OutcomeClass, values: &mut Vec<f64>) -> NumericSummary {
    if values.is_empty() {
        return NumericSummary {
            variable: variable.to_string(),
            class,
            n: 0,
            min: None,
            q25: None,
            mean: None,
            q75: None,
            max: None,
        };
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in data"));
    let n = values.len();
    NumericSummary {
        variable: variable.to_string(),
        class,
        n,
        min: Some(values[0]),
        q25: Some(quantile_type7(values, 0.25)),
        mean: Some(values.iter().sum::<f64>() / n as f64),
        q75: Some(quantile_type7(values, 0.75)),
        max: Some(values[n - 1]),
    }
}

/// Five-point summaries of a numeric variable, one per outcome class.
/// Missing entries are excluded. Returns (yield, non-yield).
pub fn numeric_summary(
    events: &[&InteractionEvent],
    variable: &str,
    schema: &VariableSchema,
) -> Result<(NumericSummary, NumericSummary), StatsError> {
    let spec = schema
        .get(variable)
        .ok_or_else(|| StatsError::UnknownVariable(variable.to_string()))?;
    if spec.kind != VariableKind::Numeric {
        return Err(StatsError::WrongKind {
            variable: variable.to_string(),
            kind: spec.kind,
            expected: "numeric",
        });
    }
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for ev in events.iter().copied() {
        if let Some(x) = ev.value(variable).as_numeric() {
            if ev.outcome {
                yes.push(x);
            } else {
                no.push(x);
            }
        }
    }
    Ok((
        summarize_class(variable, OutcomeClass::Yield, &mut yes),
        summarize_class(variable, OutcomeClass::NonYield, &mut no),
    ))
}

/// One yield-rate summary per site present in the events, ascending site id.
pub fn site_yield_rates(events: &[&InteractionEvent]) -> Vec<SiteYieldSummary> {
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for ev in events.iter().copied() {
        let entry = counts.entry(ev.site_id).or_default();
        if ev.outcome {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(site_id, (n_yield, n_nonyield))| SiteYieldSummary {
            site_id,
            n_yield,
            n_nonyield,
            yield_rate: n_yield as f64 / (n_yield + n_nonyield) as f64,
        })
        .collect()
}

/// All descriptive statistics for one event partition, tagged with the
/// partition fingerprint so downstream consumers can verify provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRun {
    pub provenance: String,
    pub crosstabs: Vec<CategoricalCrosstab>,
    /// (yield summary, non-yield summary) per numeric variable.
    pub summaries: Vec<(NumericSummary, NumericSummary)>,
    pub site_rates: Vec<SiteYieldSummary>,
}

/// Computes crosstabs for every categorical/binary variable, summaries for
/// every numeric variable, and per-site yield rates.
pub fn compute_stats(
    events: &[&InteractionEvent],
    schema: &VariableSchema,
) -> Result<StatsRun, StatsError> {
    let mut crosstabs = Vec::new();
    let mut summaries = Vec::new();
    for spec in &schema.variables {
        match spec.kind {
            VariableKind::Numeric => summaries.push(numeric_summary(events, &spec.name, schema)?),
            _ => crosstabs.push(crosstab(events, &spec.name, schema)?),
        }
    }
    Ok(StatsRun {
        provenance: partition_fingerprint(events.iter().copied()),
        crosstabs,
        summaries,
        site_rates: site_yield_rates(events),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

impl StatsRun {
    /// Human-readable aligned-text report.
    pub fn render_text(&self, schema: &VariableSchema) -> String {
        let mut out = String::new();
        out.push_str("Categorical variables: yield share by category\n");
        let mut rows = Vec::new();
        for ct in &self.crosstabs {
            let display = schema
                .get(&ct.variable)
                .map(|s| s.display_name())
                .unwrap_or_else(|| ct.variable.clone());
            for cell in &ct.per_category {
                rows.push(vec![
                    display.clone(),
                    cell.category.clone(),
                    format!("{:.2}", cell.yield_pct * 100.0),
                    format!("{:.2}", cell.nonyield_pct * 100.0),
                    cell.n.to_string(),
                ]);
            }
        }
        out.push_str(&align_table(
            &["variable", "category", "yield %", "non-yield %", "n"],
            &rows,
        ));

        out.push_str("\nNumeric variables: five-point summary per outcome class\n");
        let mut rows = Vec::new();
        for (y, n) in &self.summaries {
            for s in [y, n] {
                let display = schema
                    .get(&s.variable)
                    .map(|v| {
                        let d = v.display_name();
                        match &v.unit {
                            Some(u) => format!("{d} ({u})"),
                            None => d,
                        }
                    })
                    .unwrap_or_else(|| s.variable.clone());
                rows.push(vec![
                    display,
                    match s.class {
                        OutcomeClass::Yield => "yielding".into(),
                        OutcomeClass::NonYield => "non-yielding".into(),
                    },
                    fmt_opt(s.min),
                    fmt_opt(s.q25),
                    fmt_opt(s.mean),
                    fmt_opt(s.q75),
                    fmt_opt(s.max),
                    s.n.to_string(),
                ]);
            }
        }
        out.push_str(&align_table(
            &["variable", "class", "min", "25%", "mean", "75%", "max", "n"],
            &rows,
        ));

        out.push_str("\nPer-site yield rates\n");
        let rows: Vec<Vec<String>> = self
            .site_rates
            .iter()
            .map(|s| {
                vec![
                    s.site_id.to_string(),
                    s.n_yield.to_string(),
                    s.n_nonyield.to_string(),
                    format!("{:.4}", s.yield_rate),
                ]
            })
            .collect();
        out.push_str(&align_table(&["site", "yield", "non-yield", "rate"], &rows));
        out
    }

    /// Machine-readable delimited report (CSV).
    pub fn render_delimited(&self) -> String {
        let mut out = String::new();
        out.push_str("section,variable,key,yield,nonyield,n\n");
        for ct in &self.crosstabs {
            for cell in &ct.per_category {
                out.push_str(&format!(
                    "crosstab,{},{},{:.6},{:.6},{}\n",
                    ct.variable, cell.category, cell.yield_pct, cell.nonyield_pct, cell.n
                ));
            }
        }
        for (y, n) in &self.summaries {
            for s in [y, n] {
                let class = match s.class {
                    OutcomeClass::Yield => "yield",
                    OutcomeClass::NonYield => "nonyield",
                };
                out.push_str(&format!(
                    "summary,{},{},{},{},{}\n",
                    s.variable,
                    class,
                    fmt_opt(s.min),
                    fmt_opt(s.max),
                    s.n
                ));
                out.push_str(&format!(
                    "summary_mid,{},{},{},{},{}\n",
                    s.variable,
                    class,
                    fmt_opt(s.q25),
                    fmt_opt(s.q75),
                    fmt_opt(s.mean)
                ));
            }
        }
        for s in &self.site_rates {
            out.push_str(&format!(
                "site_rate,site_{},rate,{:.6},{:.6},{}\n",
                s.site_id,
                s.yield_rate,
                1.0 - s.yield_rate,
                s.n_yield + s.n_nonyield
            ));
        }
        out
    }
}
