//! Variable schema: names, kinds, categories, and allowed values for the
//! predictor variables of an interaction dataset.
//!
//! A 19-variable default schema ships built in; any schema can also be
//! loaded from a TOML file so the harness generalizes to other datasets.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse schema file {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("duplicate variable name `{0}` in schema")]
    DuplicateName(String),
    #[error("variable `{0}`: categorical variables need at least 2 allowed values")]
    TooFewLevels(String),
    #[error("variable `{0}`: binary variables need exactly 2 allowed values")]
    BadBinaryLevels(String),
    #[error("variable `{0}`: numeric variables must not declare allowed values")]
    NumericWithLevels(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// How a variable's values are typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Numeric,
    Categorical,
    Binary,
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKind::Numeric => write!(f, "numeric"),
            VariableKind::Categorical => write!(f, "categorical"),
            VariableKind::Binary => write!(f, "binary"),
        }
    }
}

/// The three analysis dimensions every variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableCategory {
    VehicleDynamics,
    RoadInfrastructure,
    PedestrianInteraction,
}

impl VariableCategory {
    /// Human-readable heading used in reports and prompts.
    pub fn heading(&self) -> &'static str {
        match self {
            VariableCategory::VehicleDynamics => "Vehicle dynamics and control",
            VariableCategory::RoadInfrastructure => "Road networks and infrastructure",
            VariableCategory::PedestrianInteraction => "Pedestrian mobility and interaction",
        }
    }

    pub fn all() -> [VariableCategory; 3] {
        [
            VariableCategory::VehicleDynamics,
            VariableCategory::RoadInfrastructure,
            VariableCategory::PedestrianInteraction,
        ]
    }
}

impl fmt::Display for VariableCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.heading())
    }
}

/// Declaration of a single predictor variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub category: VariableCategory,
    /// Allowed values, in canonical order; first value is the reference
    /// level when the variable is one-hot expanded. Empty for numerics.
    #[serde(default)]
    pub allowed_values: Vec<String>,
    /// Measurement unit for numeric variables (e.g. mph, ft, miles).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl VariableSpec {
    /// Display name: identifier with underscores spelled as spaces.
    pub fn display_name(&self) -> String {
        self.name.replace('_', " ")
    }

    /// Canonical allowed value matching `raw` case-insensitively after
    /// trimming, if any.
    pub fn canonical_value(&self, raw: &str) -> Option<&str> {
        let trimmed = raw.trim();
        self.allowed_values
            .iter()
            .find(|v| v.eq_ignore_ascii_case(trimmed))
            .map(|v| v.as_str())
    }
}

/// An ordered set of variable declarations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSchema {
    #[serde(rename = "variable")]
    pub variables: Vec<VariableSpec>,
}

impl VariableSchema {
    /// Validates the schema invariants and returns it.
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.name.clone()) {
                return Err(SchemaError::DuplicateName(v.name.clone()));
            }
            match v.kind {
                VariableKind::Numeric => {
                    if !v.allowed_values.is_empty() {
                        return Err(SchemaError::NumericWithLevels(v.name.clone()));
                    }
                }
                VariableKind::Categorical => {
                    if v.allowed_values.len() < 2 {
                        return Err(SchemaError::TooFewLevels(v.name.clone()));
                    }
                }
                VariableKind::Binary => {
                    if v.allowed_values.len() != 2 {
                        return Err(SchemaError::BadBinaryLevels(v.name.clone()));
                    }
                }
            }
        }
        Ok(VariableSchema { variables })
    }

    pub fn get(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&VariableSpec, SchemaError> {
        self.get(name)
            .ok_or_else(|| SchemaError::UnknownVariable(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Loads a schema from a TOML file of `[[variable]]` tables.
    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed: VariableSchema =
            toml::from_str(&text).map_err(|source| SchemaError::Parse {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        VariableSchema::new(parsed.variables)
    }

    /// Serializes the schema to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }
}

fn var(
    name: &str,
    kind: VariableKind,
    category: VariableCategory,
    allowed: &[&str],
    unit: Option<&str>,
) -> VariableSpec {
    VariableSpec {
        name: name.to_string(),
        kind,
        category,
        allowed_values: allowed.iter().map(|s| s.to_string()).collect(),
        unit: unit.map(|s| s.to_string()),
    }
}

/// The built-in 19-variable schema for the Minnesota-style interaction data.
pub fn default_schema() -> VariableSchema {
    use VariableCategory::*;
    use VariableKind::*;
    let yes_no: &[&str] = &["No", "Yes"];
    VariableSchema::new(vec![
        // Vehicle dynamics and control
        var("vehicle_speed", Numeric, VehicleDynamics, &[], Some("mph")),
        var(
            "opposite_direction_yield",
            Categorical,
            VehicleDynamics,
            &["None", "Yield", "Not yield"],
            None,
        ),
        var(
            "speed_limit",
            Categorical,
            VehicleDynamics,
            &["30", "35"],
            None,
        ),
        // Road networks and infrastructure
        var(
            "crossing_width",
            Numeric,
            RoadInfrastructure,
            &[],
            Some("ft"),
        ),
        var("bike_lanes", Binary, RoadInfrastructure, yes_no, None),
        var("signage", Binary, RoadInfrastructure, yes_no, None),
        var(
            "markings",
            Categorical,
            RoadInfrastructure,
            &["Unmarked", "Standard", "Continental"],
            None,
        ),
        var("number_of_bus_stops", Numeric, RoadInfrastructure, &[], None),
        var(
            "single_family_housing",
            Binary,
            RoadInfrastructure,
            yes_no,
            None,
        ),
        var("apartments", Binary, RoadInfrastructure, yes_no, None),
        var(
            "commercial_buildings",
            Binary,
            RoadInfrastructure,
            yes_no,
            None,
        ),
        var(
            "gas_station_convenience_store",
            Binary,
            RoadInfrastructure,
            yes_no,
            None,
        ),
        var("restaurants_bars", Binary, RoadInfrastructure, yes_no, None),
        var("parking_lots", Binary, RoadInfrastructure, yes_no, None),
        var(
            "on_street_parking",
            Categorical,
            RoadInfrastructure,
            &["No parking", "One-sided parking", "Two-sided parking"],
            None,
        ),
        var(
            "distance_to_nearest_park",
            Numeric,
            RoadInfrastructure,
            &[],
            Some("miles"),
        ),
        var(
            "distance_to_nearest_school",
            Numeric,
            RoadInfrastructure,
            &[],
            Some("miles"),
        ),
        // Pedestrian mobility and interaction
        var(
            "number_of_pedestrians",
            Numeric,
            PedestrianInteraction,
            &[],
            None,
        ),
        var(
            "pedestrian_type",
            Categorical,
            PedestrianInteraction,
            &[
                "Foot",
                "Bike",
                "Vehicle",
                "Walking bike",
                "With a dog",
                "Stroller/Child",
                "Mix",
                "Other",
            ],
            None,
        ),
    ])
    .expect("default schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_19_variables() {
        let schema = default_schema();
        assert_eq!(schema.len(), 19);
        for cat in VariableCategory::all() {
            assert!(schema.variables.iter().any(|v| v.category == cat));
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let v = var(
            "x",
            VariableKind::Numeric,
            VariableCategory::VehicleDynamics,
            &[],
            None,
        );
        let err = VariableSchema::new(vec![v.clone(), v]).unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateName(_)));
    }

    #[test]
    fn categorical_needs_two_levels() {
        let v = var(
            "m",
            VariableKind::Categorical,
            VariableCategory::RoadInfrastructure,
            &["only"],
            None,
        );
        assert!(matches!(
            VariableSchema::new(vec![v]),
            Err(SchemaError::TooFewLevels(_))
        ));
    }

    #[test]
    fn canonical_value_is_case_insensitive_and_trimmed() {
        let schema = default_schema();
        let markings = schema.get("markings").unwrap();
        assert_eq!(markings.canonical_value("  standard "), Some("Standard"));
        assert_eq!(markings.canonical_value("CONTINENTAL"), Some("Continental"));
        assert_eq!(markings.canonical_value("Diagonal"), None);
    }

    #[test]
    fn toml_round_trip() {
        let schema = default_schema();
        let text = schema.to_toml();
        let parsed: VariableSchema = toml::from_str(&text).unwrap();
        let parsed = VariableSchema::new(parsed.variables).unwrap();
        assert_eq!(parsed.len(), schema.len());
        assert_eq!(
            parsed.get("vehicle_speed").unwrap().unit.as_deref(),
            Some("mph")
        );
    }

    #[test]
    fn display_name_spells_underscores() {
        let schema = default_schema();
        assert_eq!(
            schema.get("vehicle_speed").unwrap().display_name(),
            "vehicle speed"
        );
    }
}
