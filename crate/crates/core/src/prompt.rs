//! Prompt assembly: task framing, domain-knowledge block, four-step
//! thinking guidance, two few-shot exemplars, per-event description,
//! missing-data instruction, and an optional site image.
//!
//! Assembly is a pure function of its inputs: identical inputs and
//! template version serialize to identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InteractionEvent, SplitSpec, Value};
use crate::knowledge::KnowledgeBase;
use crate::schema::{VariableCategory, VariableKind, VariableSchema};
use crate::stats::quantile_type7;

/// Bump when any template text changes, so runs stay attributable.
pub const TEMPLATE_VERSION: &str = "v1";

/// The four reasoning-step headers, in the order they must appear.
pub const STEP_HEADERS: [&str; 4] = [
    "Step 1: Vehicle Dynamics and Control Analysis",
    "Step 2: Road Networks and Infrastructure Evaluation",
    "Step 3: Pedestrian Mobility and Interaction Assessment",
    "Step 4: Yielding Behavior Inference",
];

/// Rigid final-line contract for model output.
pub const DECISION_YIELD: &str = "DECISION: YIELD";
pub const DECISION_NO_YIELD: &str = "DECISION: NO-YIELD";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("training partition has no {0} events; cannot pick exemplars")]
    MissingClass(&'static str),
    #[error("exemplar `{event_id}` comes from test site {site_id}: training-data leakage")]
    ExemplarLeakage { event_id: String, site_id: u32 },
    #[error("exemplar `{0}` lacks the four step markers in order")]
    MalformedExemplar(String),
    #[error("knowledge block is empty; synthesize facts before assembling prompts")]
    EmptyKnowledge,
    #[error("failed to read site image {path}: {source}")]
    ImageIo {
        path: String,
        source: std::io::Error,
    },
}

/// One worked training example embedded in the prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub event_id: String,
    pub site_id: u32,
    pub rendered_input: String,
    pub worked_reasoning: String,
    /// true = yield.
    pub label: bool,
}

impl FewShotExemplar {
    /// The worked reasoning must walk the four steps in order.
    pub fn validate(&self) -> Result<(), PromptError> {
        let mut from = 0usize;
        for marker in ["Step 1:", "Step 2:", "Step 3:", "Step 4:"] {
            match self.worked_reasoning[from..].find(marker) {
                Some(pos) => from += pos + marker.len(),
                None => return Err(PromptError::MalformedExemplar(self.event_id.clone())),
            }
        }
        Ok(())
    }

    pub fn decision_line(&self) -> &'static str {
        if self.label {
            DECISION_YIELD
        } else {
            DECISION_NO_YIELD
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// Inline image payload attached to a message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePart {
    pub media_type: String,
    pub base64_data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContentPart {
    Text(String),
    Image(ImagePart),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptMetadata {
    pub event_id: String,
    pub site_id: u32,
    pub template_version: String,
}

/// A fully assembled prompt: one system message first, then one user
/// message whose parts are the exemplars-plus-query text and, when a site
/// image is configured, one inline image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub messages: Vec<Message>,
    pub metadata: PromptMetadata,
}

impl AssembledPrompt {
    pub fn has_image(&self) -> bool {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .any(|p| matches!(p, ContentPart::Image(_)))
    }

    pub fn system_text(&self) -> &str {
        match self.messages.first().map(|m| &m.parts[..]) {
            Some([ContentPart::Text(t), ..]) => t,
            _ => "",
        }
    }

    pub fn user_text(&self) -> &str {
        match self.messages.get(1).map(|m| &m.parts[..]) {
            Some([ContentPart::Text(t), ..]) => t,
            _ => "",
        }
    }

    /// Serialized preview with an image placeholder marker instead of the
    /// raw payload; used for human audit and golden tests.
    pub fn render_preview(&self) -> String {
        let mut out = String::new();
        for message in &self.messages {
            out.push_str(match message.role {
                Role::System => "=== system ===\n",
                Role::User => "=== user ===\n",
            });
            for part in &message.parts {
                match part {
                    ContentPart::Text(text) => {
                        out.push_str(text);
                        if !text.ends_with('\n') {
                            out.push('\n');
                        }
                    }
                    ContentPart::Image(img) => {
                        out.push_str(&format!(
                            "[attached image: {}, {} base64 bytes]\n",
                            img.media_type,
                            img.base64_data.len()
                        ));
                    }
                }
            }
        }
        out.push_str(&format!(
            "=== metadata ===\nevent_id: {}\nsite_id: {}\ntemplate_version: {}\n",
            self.metadata.event_id, self.metadata.site_id, self.metadata.template_version
        ));
        out
    }
}

fn format_numeric(x: f64) -> String {
    if x == x.trunc() {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// One line per schema variable, "name (unit): value"; missing values
/// render as "unknown".
pub fn render_event(event: &InteractionEvent, schema: &VariableSchema) -> String {
    let mut out = String::new();
    for spec in &schema.variables {
        let label = match &spec.unit {
            Some(unit) => format!("{} ({unit})", spec.display_name()),
            None => spec.display_name(),
        };
        let value = match event.value(&spec.name) {
            Value::Missing => "unknown".to_string(),
            Value::Numeric(x) => format_numeric(*x),
            Value::Categorical(s) => s.clone(),
        };
        out.push_str(&format!("{label}: {value}\n"));
    }
    out
}

struct ClassProfile {
    /// variable → (median, iqr) for numerics.
    numeric: Vec<(String, f64, f64)>,
    /// variable → modal category.
    modal: Vec<(String, String)>,
}

fn class_profile(events: &[&InteractionEvent], schema: &VariableSchema) -> ClassProfile {
    let mut numeric = Vec::new();
    let mut modal = Vec::new();
    for spec in &schema.variables {
        match spec.kind {
            VariableKind::Numeric => {
                let mut values: Vec<f64> = events
                    .iter()
                    .filter_map(|e| e.value(&spec.name).as_numeric())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = quantile_type7(&values, 0.5);
                let iqr = quantile_type7(&values, 0.75) - quantile_type7(&values, 0.25);
                numeric.push((spec.name.clone(), median, iqr));
            }
            _ => {
                // mode with ties broken by schema level order
                let mut best: Option<(usize, &str)> = None;
                for level in &spec.allowed_values {
                    let count = events
                        .iter()
                        .filter(|e| e.value(&spec.name).as_category() == Some(level.as_str()))
                        .count();
                    if best.map(|(c, _)| count > c).unwrap_or(true) {
                        best = Some((count, level));
                    }
                }
                if let Some((_, level)) = best {
                    modal.push((spec.name.clone(), level.to_string()));
                }
            }
        }
    }
    ClassProfile { numeric, modal }
}

/// Distance of an event from its class profile: numeric dimensions are
/// |x - median| / IQR (IQR floor 1), categorical dimensions are 0/1
/// against the mode; missing values cost 1.
fn profile_distance(event: &InteractionEvent, profile: &ClassProfile) -> f64 {
    let mut d = 0.0;
    for (name, median, iqr) in &profile.numeric {
        d += match event.value(name).as_numeric() {
            Some(x) => (x - median).abs() / iqr.max(1.0),
            None => 1.0,
        };
    }
    for (name, mode) in &profile.modal {
        d += match event.value(name).as_category() {
            Some(c) if c == mode => 0.0,
            _ => 1.0,
        };
    }
    d
}

/// Deterministic per-step commentary derived from the event values.
fn worked_reasoning(event: &InteractionEvent, schema: &VariableSchema, label: bool) -> String {
    let speed = event.value("vehicle_speed").as_numeric();
    let step1 = match speed {
        Some(s) if s <= 15.0 => format!(
            "Step 1: the vehicle approaches at {} mph, slow enough to stop comfortably; \
             low approach speed is the strongest indicator in favour of yielding.",
            format_numeric(s)
        ),
        Some(s) => format!(
            "Step 1: the vehicle approaches at {} mph; at this speed braking for the \
             pedestrian is costly, which argues against yielding.",
            format_numeric(s)
        ),
        None => "Step 1: vehicle speed is unknown, so vehicle dynamics give no strong \
                 signal either way."
            .to_string(),
    };

    let infra: Vec<String> = schema
        .variables
        .iter()
        .filter(|v| v.category == VariableCategory::RoadInfrastructure)
        .filter_map(|v| match event.value(&v.name) {
            Value::Missing => None,
            value => Some(format!("{} = {}", v.display_name(), value)),
        })
        .take(4)
        .collect();
    let step2 = format!(
        "Step 2: the crossing context ({}) shapes how exposed the pedestrian appears \
         to the driver.",
        if infra.is_empty() {
            "no road attributes recorded".to_string()
        } else {
            infra.join(", ")
        }
    );

    let ped = event
        .value("pedestrian_type")
        .as_category()
        .unwrap_or("unknown type");
    let n_ped = event
        .value("number_of_pedestrians")
        .as_numeric()
        .map(|n| format_numeric(n))
        .unwrap_or_else(|| "an unknown number of".to_string());
    let step3 = format!(
        "Step 3: {n_ped} pedestrian(s) of type {ped} are waiting; larger or more \
         vulnerable groups tend to prompt yielding."
    );

    let step4 = if label {
        "Step 4: taken together, the vehicle can stop and the context favours \
         compliance, so the driver yields."
    } else {
        "Step 4: taken together, the approach dynamics dominate the context, so the \
         driver does not yield."
    };
    format!("{step1}\n{step2}\n{step3}\n{step4}")
}

/// Picks one exemplar per class from the training partition: the event
/// closest to its class's per-feature median/mode profile, ties broken by
/// event id. Returns (yield exemplar, non-yield exemplar).
pub fn select_exemplars(
    train_events: &[&InteractionEvent],
    schema: &VariableSchema,
) -> Result<(FewShotExemplar, FewShotExemplar), PromptError> {
    let pick = |label: bool| -> Result<FewShotExemplar, PromptError> {
        let class: Vec<&InteractionEvent> = train_events
            .iter()
            .copied()
            .filter(|e| e.outcome == label)
            .collect();
        if class.is_empty() {
            return Err(PromptError::MissingClass(if label {
                "yield"
            } else {
                "non-yield"
            }));
        }
        let profile = class_profile(&class, schema);
        let best = class
            .iter()
            .map(|e| (profile_distance(e, &profile), e.event_id.as_str(), *e))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)))
            .map(|(_, _, e)| e)
            .expect("class not empty");
        Ok(FewShotExemplar {
            event_id: best.event_id.clone(),
            site_id: best.site_id,
            rendered_input: render_event(best, schema),
            worked_reasoning: worked_reasoning(best, schema, label),
            label,
        })
    };
    let yield_exemplar = pick(true)?;
    let nonyield_exemplar = pick(false)?;
    yield_exemplar.validate()?;
    nonyield_exemplar.validate()?;
    Ok((yield_exemplar, nonyield_exemplar))
}

fn system_text(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    out.push_str(
        "You are a traffic safety analyst. Given one recorded pedestrian-driver \
         interaction at an unsignalized intersection, decide whether the driver yields \
         to the pedestrian.\n\n",
    );
    out.push_str("## Domain knowledge\n");
    out.push_str(&kb.render_text());
    out.push_str("\n## Thinking guidance\nWork through the four steps in order.\n");
    out.push_str(&format!(
        "{}. Weigh vehicle speed, the behaviour of opposite-direction traffic, and the \
         posted speed limit.\n",
        STEP_HEADERS[0]
    ));
    out.push_str(&format!(
        "{}. Weigh crossing width, markings, signage, bus stops, surrounding land use, \
         and distances to parks and schools.\n",
        STEP_HEADERS[1]
    ));
    out.push_str(&format!(
        "{}. Weigh the number of pedestrians and the pedestrian type for cues about \
         intent and vulnerability.\n",
        STEP_HEADERS[2]
    ));
    out.push_str(&format!(
        "{}. Combine the three analyses above into a single yielding decision.\n",
        STEP_HEADERS[3]
    ));
    out.push_str(&format!(
        "\n## Output format\nWrite your Step 1-4 analysis, then end with exactly one \
         final line reading either `{DECISION_YIELD}` or `{DECISION_NO_YIELD}`.\n"
    ));
    out
}

const MISSING_DATA_INSTRUCTION: &str = "Some attribute values above are `unknown`. Judge \
whether each missing attribute would materially change the assessment, reason with the \
available context, and still commit to a decision.";

/// Builds the full prompt for one query event.
///
/// The system message carries the task framing, knowledge block, step
/// guidance, and output contract; the user message carries both exemplars,
/// the query event, the missing-data instruction when the query has gaps,
/// and the optional inline site image.
pub fn assemble(
    event: &InteractionEvent,
    kb: &KnowledgeBase,
    exemplars: &(FewShotExemplar, FewShotExemplar),
    split: &SplitSpec,
    site_image: Option<ImagePart>,
    schema: &VariableSchema,
) -> Result<AssembledPrompt, PromptError> {
    if kb.is_empty() {
        return Err(PromptError::EmptyKnowledge);
    }
    for exemplar in [&exemplars.0, &exemplars.1] {
        exemplar.validate()?;
        if split.is_test(exemplar.site_id) {
            return Err(PromptError::ExemplarLeakage {
                event_id: exemplar.event_id.clone(),
                site_id: exemplar.site_id,
            });
        }
    }

    let mut user = String::new();
    for (i, exemplar) in [&exemplars.0, &exemplars.1].iter().enumerate() {
        user.push_str(&format!("## Example {}\n", i + 1));
        user.push_str(&exemplar.rendered_input);
        user.push_str("Reasoning:\n");
        user.push_str(&exemplar.worked_reasoning);
        user.push('\n');
        user.push_str(exemplar.decision_line());
        user.push_str("\n\n");
    }
    user.push_str("## Interaction to assess\n");
    user.push_str(&render_event(event, schema));
    let has_missing = schema
        .variables
        .iter()
        .any(|v| event.value(&v.name).is_missing());
    if has_missing {
        user.push('\n');
        user.push_str(MISSING_DATA_INSTRUCTION);
        user.push('\n');
    }
    if site_image.is_some() {
        user.push_str("\nA representative photo of this intersection is attached.\n");
    }

    let mut user_parts = vec![ContentPart::Text(user)];
    if let Some(image) = site_image {
        user_parts.push(ContentPart::Image(image));
    }

    Ok(AssembledPrompt {
        messages: vec![
            Message {
                role: Role::System,
                parts: vec![ContentPart::Text(system_text(kb))],
            },
            Message {
                role: Role::User,
                parts: user_parts,
            },
        ],
        metadata: PromptMetadata {
            event_id: event.event_id.clone(),
            site_id: event.site_id,
            template_version: TEMPLATE_VERSION.to_string(),
        },
    })
}

/// Reads an image file into an inline part; media type from the extension.
pub fn load_site_image(path: &std::path::Path) -> Result<ImagePart, PromptError> {
    use base64::Engine;
    let bytes = std::fs::read(path).map_err(|source| PromptError::ImageIo {
        path: path.display().to_string(),
        source,
    })?;
    let media_type = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    Ok(ImagePart {
        media_type: media_type.to_string(),
        base64_data: base64::engine::general_purpose::STANDARD.encode(bytes),
    })
}
