//! Design-matrix construction: deterministic one-hot expansion of
//! categorical variables (schema level order, first level dropped as the
//! reference) and listwise removal of rows with missing selected values.

use serde::{Deserialize, Serialize};

use crate::data::{partition_fingerprint, InteractionEvent, Value};
use crate::logit::LogitError;
use crate::schema::{VariableKind, VariableSchema};

/// How one design column reads its value off an event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    /// Numeric value used as-is.
    Numeric,
    /// 1.0 when the categorical value equals this level, else 0.0.
    Indicator(String),
}

/// One column of the design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub variable: String,
    pub encoding: Encoding,
}

impl ColumnSpec {
    pub fn name(&self) -> String {
        match &self.encoding {
            Encoding::Numeric => self.variable.clone(),
            Encoding::Indicator(level) => format!("{}={}", self.variable, level),
        }
    }

    /// Encodes one event into this column's value. Missing or mistyped
    /// values are errors at this level.
    pub fn encode(&self, event: &InteractionEvent) -> Result<f64, LogitError> {
        match event.value(&self.variable) {
            Value::Missing => Err(LogitError::MissingFeature(self.variable.clone())),
            Value::Numeric(x) => match &self.encoding {
                Encoding::Numeric => Ok(*x),
                Encoding::Indicator(_) => Err(LogitError::WrongValueKind {
                    variable: self.variable.clone(),
                    expected: "categorical",
                }),
            },
            Value::Categorical(s) => match &self.encoding {
                Encoding::Numeric => Err(LogitError::WrongValueKind {
                    variable: self.variable.clone(),
                    expected: "numeric",
                }),
                Encoding::Indicator(level) => Ok(if s == level { 1.0 } else { 0.0 }),
            },
        }
    }
}

/// Expands schema variables into design columns. Categorical and binary
/// variables contribute one indicator per non-reference level.
pub fn expand_columns(
    features: &[String],
    schema: &VariableSchema,
) -> Result<Vec<ColumnSpec>, LogitError> {
    let mut columns = Vec::new();
    for name in features {
        let spec = schema
            .get(name)
            .ok_or_else(|| LogitError::UnknownFeature(name.clone()))?;
        match spec.kind {
            VariableKind::Numeric => columns.push(ColumnSpec {
                variable: name.clone(),
                encoding: Encoding::Numeric,
            }),
            VariableKind::Categorical | VariableKind::Binary => {
                for level in spec.allowed_values.iter().skip(1) {
                    columns.push(ColumnSpec {
                        variable: name.clone(),
                        encoding: Encoding::Indicator(level.clone()),
                    });
                }
            }
        }
    }
    Ok(columns)
}

/// Numeric feature rows plus labels, ready for fitting. The intercept
/// column is implicit and added by the fitter.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub columns: Vec<ColumnSpec>,
    /// Row-major feature values, rows.len() == labels.len().
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// Rows dropped because a selected value was missing.
    pub n_dropped: usize,
    /// Fingerprint of the input event partition (before dropping).
    pub provenance: String,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// A copy restricted to the given column indices (rows unchanged).
    pub fn select(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| indices.iter().map(|&i| r[i]).collect())
                .collect(),
            labels: self.labels.clone(),
            n_dropped: self.n_dropped,
            provenance: self.provenance.clone(),
        }
    }
}

/// Builds the design matrix for the given features over an event partition.
/// Rows with any missing selected value are dropped and counted.
pub fn build_design(
    events: &[&InteractionEvent],
    features: &[String],
    schema: &VariableSchema,
) -> Result<DesignMatrix, LogitError> {
    let columns = expand_columns(features, schema)?;
    let mut rows = Vec::with_capacity(events.len());
    let mut labels = Vec::with_capacity(events.len());
    let mut n_dropped = 0usize;
    for ev in events.iter().copied() {
        let mut row = Vec::with_capacity(columns.len());
        let mut complete = true;
        for col in &columns {
            match col.encode(ev) {
                Ok(x) => row.push(x),
                Err(LogitError::MissingFeature(_)) => {
                    complete = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if complete {
            rows.push(row);
            labels.push(ev.outcome);
        } else {
            n_dropped += 1;
        }
    }
    Ok(DesignMatrix {
        columns,
        rows,
        labels,
        n_dropped,
        provenance: partition_fingerprint(events.iter().copied()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Value;
    use crate::schema::{VariableCategory::*, VariableKind::*, VariableSpec};
    use std::collections::HashMap;

    fn schema() -> VariableSchema {
        VariableSchema::new(vec![
            VariableSpec {
                name: "speed".into(),
                kind: Numeric,
                category: VehicleDynamics,
                allowed_values: vec![],
                unit: Some("mph".into()),
            },
            VariableSpec {
                name: "signage".into(),
                kind: Binary,
                category: RoadInfrastructure,
                allowed_values: vec!["No".into(), "Yes".into()],
                unit: None,
            },
            VariableSpec {
                name: "markings".into(),
                kind: Categorical,
                category: RoadInfrastructure,
                allowed_values: vec!["Unmarked".into(), "Standard".into(), "Continental".into()],
                unit: None,
            },
        ])
        .unwrap()
    }

    fn ev(id: &str, speed: Option<f64>, signage: &str, markings: &str, outcome: bool) -> InteractionEvent {
        let mut values = HashMap::new();
        values.insert(
            "speed".into(),
            speed.map(Value::Numeric).unwrap_or(Value::Missing),
        );
        values.insert("signage".into(), Value::Categorical(signage.into()));
        values.insert("markings".into(), Value::Categorical(markings.into()));
        InteractionEvent {
            event_id: id.into(),
            site_id: 1,
            values,
            outcome,
        }
    }

    #[test]
    fn binary_expands_to_one_indicator() {
        let cols = expand_columns(&["signage".into()], &schema()).unwrap();
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].name(), "signage=Yes");
    }

    #[test]
    fn three_level_categorical_expands_to_two_indicators_in_schema_order() {
        let cols = expand_columns(&["markings".into()], &schema()).unwrap();
        let names: Vec<String> = cols.iter().map(|c| c.name()).collect();
        assert_eq!(names, ["markings=Standard", "markings=Continental"]);
    }

    #[test]
    fn unknown_feature_is_error() {
        assert!(matches!(
            expand_columns(&["nope".into()], &schema()),
            Err(LogitError::UnknownFeature(_))
        ));
    }

    #[test]
    fn missing_value_drops_row_and_counts_it() {
        let events = vec![
            ev("a", Some(10.0), "Yes", "Standard", true),
            ev("b", None, "No", "Unmarked", false),
            ev("c", Some(30.0), "No", "Continental", false),
        ];
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let design =
            build_design(&refs, &["speed".into(), "markings".into()], &schema()).unwrap();
        assert_eq!(design.n_rows(), 2);
        assert_eq!(design.n_dropped, 1);
        assert_eq!(design.rows[0], vec![10.0, 1.0, 0.0]);
        assert_eq!(design.rows[1], vec![30.0, 0.0, 1.0]);
        assert_eq!(design.labels, vec![true, false]);
    }

    #[test]
    fn select_restricts_columns() {
        let events = vec![
            ev("a", Some(10.0), "Yes", "Standard", true),
            ev("c", Some(30.0), "No", "Continental", false),
        ];
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let design = build_design(
            &refs,
            &["speed".into(), "signage".into(), "markings".into()],
            &schema(),
        )
        .unwrap();
        let sub = design.select(&[0, 2]);
        assert_eq!(sub.n_cols(), 2);
        assert_eq!(sub.columns[1].name(), "markings=Standard");
        assert_eq!(sub.rows[0], vec![10.0, 1.0]);
    }
}
