//! Stepwise variable selection: alternating forward addition (smallest
//! p-value below `alpha_enter`) and backward elimination (largest p-value
//! above `alpha_remove`) until neither applies. Ties break on column name
//! so selection is fully deterministic.

use serde::{Deserialize, Serialize};

use crate::data::InteractionEvent;
use crate::logit::design::{build_design, DesignMatrix};
use crate::logit::fit::{fit, intercept_only, LogitModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::logit::LogitError;
use crate::schema::VariableSchema;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepwiseConfig {
    /// Significance required to enter the model.
    pub alpha_enter: f64,
    /// Significance beyond which an included term is dropped.
    pub alpha_remove: f64,
    /// Upper bound on add/drop actions.
    pub max_steps: usize,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        StepwiseConfig {
            alpha_enter: 0.05,
            alpha_remove: 0.10,
            max_steps: 100,
        }
    }
}

impl StepwiseConfig {
    fn validate(&self) -> Result<(), LogitError> {
        // alpha_enter <= alpha_remove prevents add/drop cycling
        if self.alpha_enter > self.alpha_remove {
            return Err(LogitError::BadStepwiseConfig {
                enter: self.alpha_enter,
                remove: self.alpha_remove,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepAction {
    Added,
    Dropped,
}

/// One executed selection action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: StepAction,
    pub column: String,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    /// Names of the selected design columns, in inclusion order.
    pub selected: Vec<String>,
    pub model: LogitModel,
    pub trace: Vec<StepRecord>,
}

fn fit_subset(full: &DesignMatrix, indices: &[usize]) -> Result<LogitModel, LogitError> {
    fit(&full.select(indices), DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Runs the alternating forward/backward selection over the expanded
/// design columns of `candidates`.
///
/// Rows with a missing value in any candidate are dropped once up front so
/// every submodel sees the same observations. Candidates whose trial fit
/// fails (separation, collinearity) are skipped in that round rather than
/// aborting the search. No candidate ever entering is not an error: the
/// result then carries an intercept-only model.
pub fn stepwise_select(
    events: &[&InteractionEvent],
    candidates: &[String],
    schema: &VariableSchema,
    config: &StepwiseConfig,
) -> Result<StepwiseResult, LogitError> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(LogitError::NoCandidates);
    }
    let full = build_design(events, candidates, schema)?;
    if full.n_rows() == 0 {
        return Err(LogitError::EmptyDesign);
    }

    let mut included: Vec<usize> = Vec::new();
    let mut trace: Vec<StepRecord> = Vec::new();
    let mut step = 0usize;

    loop {
        if step >= config.max_steps {
            break;
        }
        let mut changed = false;

        // Forward: the not-yet-included column with the smallest p-value
        // in its trial fit enters if below alpha_enter.
        let mut best: Option<(f64, String, usize)> = None;
        for idx in 0..full.n_cols() {
            if included.contains(&idx) {
                continue;
            }
            let mut trial: Vec<usize> = included.clone();
            trial.push(idx);
            trial.sort_unstable();
            let pos = trial.iter().position(|&i| i == idx).unwrap();
            let Ok(model) = fit_subset(&full, &trial) else {
                continue;
            };
            let p = model.terms[pos].p_value;
            let name = full.columns[idx].name();
            let better = match &best {
                None => true,
                Some((bp, bname, _)) => p < *bp || (p == *bp && name < *bname),
            };
            if better {
                best = Some((p, name, idx));
            }
        }
        if let Some((p, name, idx)) = best {
            if p < config.alpha_enter {
                included.push(idx);
                included.sort_unstable();
                step += 1;
                trace.push(StepRecord {
                    step,
                    action: StepAction::Added,
                    column: name,
                    p_value: p,
                });
                changed = true;
            }
        }

        // Backward: the included column with the largest p-value leaves if
        // above alpha_remove.
        if !included.is_empty() && step < config.max_steps {
            let model = fit_subset(&full, &included)?;
            let mut worst: Option<(f64, String, usize)> = None;
            for (pos, term) in model.terms.iter().enumerate() {
                let p = term.p_value;
                let name = term.column.name();
                let worse = match &worst {
                    None => true,
                    Some((wp, wname, _)) => p > *wp || (p == *wp && name < *wname),
                };
                if worse {
                    worst = Some((p, name, pos));
                }
            }
            if let Some((p, name, pos)) = worst {
                if p > config.alpha_remove {
                    included.remove(pos);
                    step += 1;
                    trace.push(StepRecord {
                        step,
                        action: StepAction::Dropped,
                        column: name,
                        p_value: p,
                    });
                    changed = true;
                }
            }
        }

        if !changed {
            break;
        }
    }

    let model = if included.is_empty() {
        intercept_only(&full.labels, &full.provenance)?
    } else {
        fit_subset(&full, &included)?
    };
    let selected = trace_selection(&trace);
    Ok(StepwiseResult {
        selected,
        model,
        trace,
    })
}

/// Columns still included after replaying the trace, in inclusion order.
fn trace_selection(trace: &[StepRecord]) -> Vec<String> {
    let mut selected: Vec<String> = Vec::new();
    for record in trace {
        match record.action {
            StepAction::Added => selected.push(record.column.clone()),
            StepAction::Dropped => selected.retain(|c| c != &record.column),
        }
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Value;
    use crate::schema::{VariableCategory::*, VariableKind::*, VariableSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn numeric_schema(names: &[&str]) -> VariableSchema {
        VariableSchema::new(
            names
                .iter()
                .map(|n| VariableSpec {
                    name: n.to_string(),
                    kind: Numeric,
                    category: VehicleDynamics,
                    allowed_values: vec![],
                    unit: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn event(id: usize, vals: &[(&str, f64)], outcome: bool) -> InteractionEvent {
        InteractionEvent {
            event_id: format!("E{id:05}"),
            site_id: 1,
            values: vals
                .iter()
                .map(|(k, v)| (k.to_string(), Value::Numeric(*v)))
                .collect::<HashMap<_, _>>(),
            outcome,
        }
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// n=2000 seeded fixture: one real signal, one independent noise
    /// column. Verified once offline that the noise p-value lands above
    /// 0.05 for this seed.
    fn signal_noise_fixture() -> (Vec<InteractionEvent>, VariableSchema) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut events = Vec::with_capacity(2000);
        for i in 0..2000 {
            let signal: f64 = rng.random_range(-2.0..2.0);
            let noise: f64 = rng.random_range(-2.0..2.0);
            let p = sigmoid(0.3 + 1.5 * signal);
            let y = rng.random::<f64>() < p;
            events.push(event(i, &[("signal", signal), ("noise", noise)], y));
        }
        (events, numeric_schema(&["signal", "noise"]))
    }

    #[test]
    fn noise_candidate_not_selected() {
        let (events, schema) = signal_noise_fixture();
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let result = stepwise_select(
            &refs,
            &["signal".into(), "noise".into()],
            &schema,
            &StepwiseConfig::default(),
        )
        .unwrap();
        assert_eq!(result.selected, vec!["signal".to_string()]);
        assert!(result.model.term("noise").is_none());
        assert!(result.model.term("signal").unwrap().p_value < 0.05);
    }

    #[test]
    fn all_noise_gives_intercept_only_without_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let events: Vec<InteractionEvent> = (0..400)
            .map(|i| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let y = rng.random::<f64>() < 0.4;
                event(i, &[("a", a), ("b", b)], y)
            })
            .collect();
        let schema = numeric_schema(&["a", "b"]);
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let result = stepwise_select(
            &refs,
            &["a".into(), "b".into()],
            &schema,
            &StepwiseConfig::default(),
        )
        .unwrap();
        assert!(result.selected.is_empty());
        assert!(result.trace.is_empty());
        assert!(result.model.terms.is_empty());
        // intercept reproduces the base rate
        let base = events.iter().filter(|e| e.outcome).count() as f64 / events.len() as f64;
        assert!((sigmoid(result.model.intercept) - base).abs() < 1e-9);
    }

    /// Independent greedy re-execution of the selection rule, used as an
    /// oracle for the trace bookkeeping.
    fn oracle_trace(
        events: &[&InteractionEvent],
        candidates: &[String],
        schema: &VariableSchema,
        config: &StepwiseConfig,
    ) -> Vec<(StepAction, String)> {
        let full = build_design(events, candidates, schema).unwrap();
        let mut inside: Vec<usize> = vec![];
        let mut log = vec![];
        loop {
            let mut acted = false;
            let mut candidates_p: Vec<(f64, String, usize)> = (0..full.n_cols())
                .filter(|i| !inside.contains(i))
                .filter_map(|i| {
                    let mut sel = inside.clone();
                    sel.push(i);
                    sel.sort_unstable();
                    let pos = sel.iter().position(|&j| j == i).unwrap();
                    fit(&full.select(&sel), DEFAULT_TOL, DEFAULT_MAX_ITER)
                        .ok()
                        .map(|m| (m.terms[pos].p_value, full.columns[i].name(), i))
                })
                .collect();
            candidates_p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            if let Some((p, name, i)) = candidates_p.first() {
                if *p < config.alpha_enter {
                    inside.push(*i);
                    inside.sort_unstable();
                    log.push((StepAction::Added, name.clone()));
                    acted = true;
                }
            }
            if !inside.is_empty() {
                let m = fit(&full.select(&inside), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
                let mut terms: Vec<(f64, String, usize)> = m
                    .terms
                    .iter()
                    .enumerate()
                    .map(|(pos, t)| (t.p_value, t.column.name(), pos))
                    .collect();
                terms.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                if let Some((p, name, pos)) = terms.first() {
                    if *p > config.alpha_remove {
                        inside.remove(*pos);
                        log.push((StepAction::Dropped, name.clone()));
                        acted = true;
                    }
                }
            }
            if !acted {
                break;
            }
        }
        log
    }

    #[test]
    fn trace_matches_independent_greedy_execution() {
        // 3 features: strong, medium, and one that is a weak proxy of the
        // strong one (so ordering and possible drops are exercised)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let events: Vec<InteractionEvent> = (0..600)
            .map(|i| {
                let strong: f64 = rng.random_range(-2.0..2.0);
                let medium: f64 = rng.random_range(-2.0..2.0);
                let proxy = strong + rng.random_range(-0.8..0.8);
                let p = sigmoid(-0.2 + 1.8 * strong + 0.7 * medium);
                let y = rng.random::<f64>() < p;
                event(i, &[("strong", strong), ("medium", medium), ("proxy", proxy)], y)
            })
            .collect();
        let schema = numeric_schema(&["medium", "proxy", "strong"]);
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let candidates = vec!["medium".into(), "proxy".into(), "strong".into()];
        let cfg = StepwiseConfig::default();
        let result = stepwise_select(&refs, &candidates, &schema, &cfg).unwrap();
        let oracle = oracle_trace(&refs, &candidates, &schema, &cfg);
        let got: Vec<(StepAction, String)> = result
            .trace
            .iter()
            .map(|r| (r.action, r.column.clone()))
            .collect();
        assert_eq!(got, oracle);
        assert!(!result.selected.is_empty());
    }

    #[test]
    fn selection_is_deterministic() {
        let (events, schema) = signal_noise_fixture();
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let candidates = vec!["signal".into(), "noise".into()];
        let cfg = StepwiseConfig::default();
        let r1 = stepwise_select(&refs, &candidates, &schema, &cfg).unwrap();
        let r2 = stepwise_select(&refs, &candidates, &schema, &cfg).unwrap();
        assert_eq!(r1.selected, r2.selected);
        assert_eq!(r1.trace.len(), r2.trace.len());
        for (a, b) in r1.trace.iter().zip(&r2.trace) {
            assert_eq!(a.column, b.column);
            assert_eq!(a.p_value, b.p_value);
        }
    }

    #[test]
    fn final_model_respects_alpha_remove() {
        let (events, schema) = signal_noise_fixture();
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let cfg = StepwiseConfig::default();
        let result = stepwise_select(
            &refs,
            &["signal".into(), "noise".into()],
            &schema,
            &cfg,
        )
        .unwrap();
        for t in &result.model.terms {
            assert!(t.p_value <= cfg.alpha_remove);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = StepwiseConfig {
            alpha_enter: 0.2,
            alpha_remove: 0.1,
            max_steps: 10,
        };
        let (events, schema) = signal_noise_fixture();
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        assert!(matches!(
            stepwise_select(&refs, &["signal".into()], &schema, &cfg),
            Err(LogitError::BadStepwiseConfig { .. })
        ));
    }
}
