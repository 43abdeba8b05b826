//! Dataset ingestion: interaction events, site attributes, and the
//! site-based train/test split.
//!
//! Events and sites are comma-delimited UTF-8 files with a header row;
//! missing values are the literal token `NA`. No imputation happens here —
//! missingness is carried through as a first-class marker and handled at
//! the prompt layer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{SchemaError, VariableKind, VariableSchema};

/// Missing-value token used in data files.
pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed row {row}: {message}")]
    MalformedRow {
        path: String,
        row: usize,
        message: String,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path} row {row}: variable `{variable}`: {message}")]
    Validation {
        path: String,
        row: usize,
        variable: String,
        message: String,
    },
    #[error("event `{event_id}` references unknown site {site_id}")]
    UnknownSite { event_id: String, site_id: u32 },
    #[error("split spec invalid: {0}")]
    BadSplit(String),
    #[error("event `{event_id}` (site {site_id}) is in neither split partition")]
    UnsplitEvent { event_id: String, site_id: u32 },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// One observed value of a predictor variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            Value::Numeric(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Categorical(s) => Some(s.as_str()),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Numeric(x) => write!(f, "{x}"),
            Value::Categorical(s) => write!(f, "{s}"),
            Value::Missing => write!(f, "{MISSING_TOKEN}"),
        }
    }
}

/// One pedestrian–driver interaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub site_id: u32,
    /// Variable name → observed value; every schema variable has an entry.
    pub values: HashMap<String, Value>,
    /// true = driver yielded.
    pub outcome: bool,
}

impl InteractionEvent {
    pub fn value(&self, variable: &str) -> &Value {
        self.values.get(variable).unwrap_or(&Value::Missing)
    }
}

/// Crosswalk striping style at a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Markings {
    Unmarked,
    Standard,
    Continental,
}

impl Markings {
    fn parse(raw: &str) -> Option<Self> {
        let t = raw.trim();
        if t.eq_ignore_ascii_case("unmarked") {
            Some(Markings::Unmarked)
        } else if t.eq_ignore_ascii_case("standard") {
            Some(Markings::Standard)
        } else if t.eq_ignore_ascii_case("continental") {
            Some(Markings::Continental)
        } else {
            None
        }
    }
}

impl fmt::Display for Markings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Markings::Unmarked => write!(f, "Unmarked"),
            Markings::Standard => write!(f, "Standard"),
            Markings::Continental => write!(f, "Continental"),
        }
    }
}

/// Intersection geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteShape {
    TShape,
    FourWay,
}

impl SiteShape {
    fn parse(raw: &str) -> Option<Self> {
        let t = raw.trim();
        if t.eq_ignore_ascii_case("t-shape") {
            Some(SiteShape::TShape)
        } else if t.eq_ignore_ascii_case("four-way") {
            Some(SiteShape::FourWay)
        } else {
            None
        }
    }
}

impl fmt::Display for SiteShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteShape::TShape => write!(f, "T-shape"),
            SiteShape::FourWay => write!(f, "Four-way"),
        }
    }
}

/// Static attributes of one monitored intersection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Site {
    pub site_id: u32,
    pub lanes: u32,
    pub speed_limit: u32,
    pub markings: Markings,
    /// Annual average daily traffic, vehicles/day.
    pub aadt: u32,
    pub shape: SiteShape,
    /// Representative photo of the intersection, if configured.
    pub image_path: Option<String>,
}

/// Site-based train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_sites: BTreeSet<u32>,
    pub test_sites: BTreeSet<u32>,
}

impl SplitSpec {
    pub fn new(
        train_sites: impl IntoIterator<Item = u32>,
        test_sites: impl IntoIterator<Item = u32>,
    ) -> Result<Self, DataError> {
        let spec = SplitSpec {
            train_sites: train_sites.into_iter().collect(),
            test_sites: test_sites.into_iter().collect(),
        };
        if let Some(overlap) = spec.train_sites.intersection(&spec.test_sites).next() {
            return Err(DataError::BadSplit(format!(
                "site {overlap} appears in both train and test"
            )));
        }
        Ok(spec)
    }

    pub fn is_train(&self, site_id: u32) -> bool {
        self.train_sites.contains(&site_id)
    }

    pub fn is_test(&self, site_id: u32) -> bool {
        self.test_sites.contains(&site_id)
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::MalformedRow {
                path: path.display().to_string(),
                row: 0,
                message: e.to_string(),
            },
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            row: i + 2,
            message: e.to_string(),
        })?;
        rows.push(record);
    }
    Ok((headers, rows))
}

fn column_index(
    path: &Path,
    headers: &[String],
    name: &str,
) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
}

/// Loads and validates the events and sites files against a schema.
///
/// Every row becomes one event; values are validated against the schema
/// (categoricals matched case-insensitively, canonical casing stored) and
/// each event's `site_id` must resolve to a site.
pub fn load_dataset(
    events_file: &Path,
    sites_file: &Path,
    schema: &VariableSchema,
) -> Result<(Vec<InteractionEvent>, Vec<Site>), DataError> {
    let sites = load_sites(sites_file)?;
    let events = load_events(events_file, schema)?;
    let known: BTreeSet<u32> = sites.iter().map(|s| s.site_id).collect();
    for ev in &events {
        if !known.contains(&ev.site_id) {
            return Err(DataError::UnknownSite {
                event_id: ev.event_id.clone(),
                site_id: ev.site_id,
            });
        }
    }
    Ok((events, sites))
}

/// Loads the sites file (columns: site_id, lanes, speed_limit, markings,
/// aadt, shape, image_path; the last is optional).
pub fn load_sites(path: &Path) -> Result<Vec<Site>, DataError> {
    let (headers, rows) = read_csv(path)?;
    let idx_site = column_index(path, &headers, "site_id")?;
    let idx_lanes = column_index(path, &headers, "lanes")?;
    let idx_speed = column_index(path, &headers, "speed_limit")?;
    let idx_markings = column_index(path, &headers, "markings")?;
    let idx_aadt = column_index(path, &headers, "aadt")?;
    let idx_shape = column_index(path, &headers, "shape")?;
    let idx_image = headers.iter().position(|h| h == "image_path");

    let mut sites = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (i, row) in rows.iter().enumerate() {
        let rownum = i + 2;
        let field = |idx: usize, name: &str| -> Result<&str, DataError> {
            row.get(idx).ok_or_else(|| DataError::MalformedRow {
                path: path.display().to_string(),
                row: rownum,
                message: format!("missing field `{name}`"),
            })
        };
        let parse_u32 = |idx: usize, name: &str| -> Result<u32, DataError> {
            field(idx, name)?.replace(',', "").parse().map_err(|_| {
                DataError::Validation {
                    path: path.display().to_string(),
                    row: rownum,
                    variable: name.to_string(),
                    message: format!("`{}` is not a non-negative integer", row.get(idx).unwrap_or("")),
                }
            })
        };
        let site_id = parse_u32(idx_site, "site_id")?;
        if !seen.insert(site_id) {
            return Err(DataError::Validation {
                path: path.display().to_string(),
                row: rownum,
                variable: "site_id".to_string(),
                message: format!("duplicate site_id {site_id}"),
            });
        }
        let aadt = parse_u32(idx_aadt, "aadt")?;
        if aadt == 0 {
            return Err(DataError::Validation {
                path: path.display().to_string(),
                row: rownum,
                variable: "aadt".to_string(),
                message: "aadt must be positive".to_string(),
            });
        }
        let markings_raw = field(idx_markings, "markings")?;
        let markings = Markings::parse(markings_raw).ok_or_else(|| DataError::Validation {
            path: path.display().to_string(),
            row: rownum,
            variable: "markings".to_string(),
            message: format!("unknown markings `{markings_raw}`"),
        })?;
        let shape_raw = field(idx_shape, "shape")?;
        let shape = SiteShape::parse(shape_raw).ok_or_else(|| DataError::Validation {
            path: path.display().to_string(),
            row: rownum,
            variable: "shape".to_string(),
            message: format!("unknown shape `{shape_raw}`"),
        })?;
        let image_path = idx_image
            .and_then(|idx| row.get(idx))
            .filter(|s| !s.is_empty() && *s != MISSING_TOKEN)
            .map(|s| s.to_string());
        sites.push(Site {
            site_id,
            lanes: parse_u32(idx_lanes, "lanes")?,
            speed_limit: parse_u32(idx_speed, "speed_limit")?,
            markings,
            aadt,
            shape,
            image_path,
        });
    }
    Ok(sites)
}

/// Loads the events file. Header must include `event_id`, `site_id`,
/// `outcome` plus one column per schema variable.
pub fn load_events(
    path: &Path,
    schema: &VariableSchema,
) -> Result<Vec<InteractionEvent>, DataError> {
    let (headers, rows) = read_csv(path)?;
    let idx_event = column_index(path, &headers, "event_id")?;
    let idx_site = column_index(path, &headers, "site_id")?;
    let idx_outcome = column_index(path, &headers, "outcome")?;
    let mut var_idx = Vec::with_capacity(schema.len());
    for v in &schema.variables {
        var_idx.push((v, column_index(path, &headers, &v.name)?));
    }

    let mut events = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rownum = i + 2;
        let malformed = |message: String| DataError::MalformedRow {
            path: path.display().to_string(),
            row: rownum,
            message,
        };
        let event_id = row
            .get(idx_event)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed("empty event_id".to_string()))?
            .to_string();
        let site_id: u32 = row
            .get(idx_site)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("site_id is not an integer".to_string()))?;
        let outcome = match row.get(idx_outcome) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(malformed(format!(
                    "outcome must be 0 or 1, got `{}`",
                    other.unwrap_or("")
                )))
            }
        };

        let mut values = HashMap::with_capacity(schema.len());
        for (spec, idx) in &var_idx {
            let raw = row
                .get(*idx)
                .ok_or_else(|| malformed(format!("missing field `{}`", spec.name)))?;
            let value = if raw == MISSING_TOKEN || raw.is_empty() {
                Value::Missing
            } else {
                match spec.kind {
                    VariableKind::Numeric => {
                        let x: f64 = raw.parse().map_err(|_| DataError::Validation {
                            path: path.display().to_string(),
                            row: rownum,
                            variable: spec.name.clone(),
                            message: format!("`{raw}` is not numeric"),
                        })?;
                        Value::Numeric(x)
                    }
                    VariableKind::Categorical | VariableKind::Binary => {
                        let canonical =
                            spec.canonical_value(raw).ok_or_else(|| DataError::Validation {
                                path: path.display().to_string(),
                                row: rownum,
                                variable: spec.name.clone(),
                                message: format!(
                                    "`{raw}` is not one of [{}]",
                                    spec.allowed_values.join(", ")
                                ),
                            })?;
                        Value::Categorical(canonical.to_string())
                    }
                }
            };
            values.insert(spec.name.clone(), value);
        }
        events.push(InteractionEvent {
            event_id,
            site_id,
            values,
            outcome,
        });
    }
    Ok(events)
}

/// Writes events back out in the events-file format, schema column order.
pub fn write_events(
    path: &Path,
    events: &[InteractionEvent],
    schema: &VariableSchema,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let mut header = vec!["event_id".to_string(), "site_id".to_string(), "outcome".to_string()];
    header.extend(schema.names().map(|s| s.to_string()));
    let io_err = |e: csv::Error| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    writer.write_record(&header).map_err(io_err)?;
    for ev in events {
        let mut record = vec![
            ev.event_id.clone(),
            ev.site_id.to_string(),
            if ev.outcome { "1" } else { "0" }.to_string(),
        ];
        for name in schema.names() {
            record.push(ev.value(name).to_string());
        }
        writer.write_record(&record).map_err(io_err)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Writes the sites file.
pub fn write_sites(path: &Path, sites: &[Site]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let io_err = |e: csv::Error| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    writer
        .write_record(["site_id", "lanes", "speed_limit", "markings", "aadt", "shape", "image_path"])
        .map_err(io_err)?;
    for s in sites {
        writer
            .write_record([
                s.site_id.to_string(),
                s.lanes.to_string(),
                s.speed_limit.to_string(),
                s.markings.to_string(),
                s.aadt.to_string(),
                s.shape.to_string(),
                s.image_path.clone().unwrap_or_default(),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Partitions events by site id. Ordering within partitions is the input
/// order; every event must fall in exactly one partition.
pub fn split<'a>(
    events: &'a [InteractionEvent],
    spec: &SplitSpec,
) -> Result<(Vec<&'a InteractionEvent>, Vec<&'a InteractionEvent>), DataError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ev in events {
        if spec.is_train(ev.site_id) {
            train.push(ev);
        } else if spec.is_test(ev.site_id) {
            test.push(ev);
        } else {
            return Err(DataError::UnsplitEvent {
                event_id: ev.event_id.clone(),
                site_id: ev.site_id,
            });
        }
    }
    Ok((train, test))
}

/// Count of explicit-missing entries per variable.
pub fn missing_report(
    events: &[&InteractionEvent],
    schema: &VariableSchema,
) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        schema.names().map(|n| (n.to_string(), 0)).collect();
    for ev in events {
        for (name, count) in counts.iter_mut() {
            if ev.value(name).is_missing() {
                *count += 1;
            }
        }
    }
    counts
}

/// Order-insensitive fingerprint of an event collection, used to tie
/// descriptive statistics and fitted models back to the partition they
/// were computed on.
pub fn partition_fingerprint<'a, I>(events: I) -> String
where
    I: IntoIterator<Item = &'a InteractionEvent>,
{
    let mut ids: Vec<&str> = events.into_iter().map(|e| e.event_id.as_str()).collect();
    ids.sort_unstable();
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
