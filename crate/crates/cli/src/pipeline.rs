//! Subcommand implementations over the resolved run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use yieldbench_core::cost;
use yieldbench_core::data::{load_dataset, split, InteractionEvent, Site};
use yieldbench_core::eval::{
    aggregate, confusion, render_report, roc_points, ConfusionMatrix, ReportFormat,
};
use yieldbench_core::inference::{run_batch, BatchContext, RunManifest};
use yieldbench_core::knowledge::{synthesize, KnowledgeBase};
use yieldbench_core::llm::{ChatClient, CompletionMode, ProviderFile, ReplayCache};
use yieldbench_core::logit::{stepwise_select, StepwiseResult};
use yieldbench_core::prompt::{assemble, select_exemplars, FewShotExemplar};
use yieldbench_core::schema::{default_schema, VariableSchema};
use yieldbench_core::stats::compute_stats;
use yieldbench_core::{datagen, prompt};

use crate::config::{FailedParsePolicy, RunConfig};
use crate::CliError;

/// Loaded dataset plus schema, shared by every subcommand.
pub struct Loaded {
    pub schema: VariableSchema,
    pub events: Vec<InteractionEvent>,
    pub sites: Vec<Site>,
}

pub fn load(config: &RunConfig) -> Result<Loaded, CliError> {
    let schema = match &config.schema {
        Some(path) => VariableSchema::load(path)?,
        None => default_schema(),
    };
    let (events, sites) = load_dataset(&config.events, &config.sites, &schema)?;
    Ok(Loaded {
        schema,
        events,
        sites,
    })
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Training-partition analysis bundle used by knowledge/prompt/predict.
pub struct TrainAnalysis {
    pub stepwise: StepwiseResult,
    pub kb: KnowledgeBase,
    pub exemplars: (FewShotExemplar, FewShotExemplar),
}

pub fn analyze_train(
    loaded: &Loaded,
    config: &RunConfig,
) -> Result<TrainAnalysis, CliError> {
    let (train, _) = split(&loaded.events, &config.split)?;
    let stats = compute_stats(&train, &loaded.schema)?;
    let candidates: Vec<String> = loaded.schema.names().map(|s| s.to_string()).collect();
    let stepwise = stepwise_select(&train, &candidates, &loaded.schema, &config.stepwise)?;
    let kb = synthesize(&stats, &stepwise.model, &loaded.schema, &config.knowledge)?;
    let exemplars = select_exemplars(&train, &loaded.schema)?;
    Ok(TrainAnalysis {
        stepwise,
        kb,
        exemplars,
    })
}

/// `stats`: descriptive statistics of the training partition.
pub fn cmd_stats(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let (train, _) = split(&loaded.events, &config.split)?;
    let stats = compute_stats(&train, &loaded.schema)?;
    write_output(&config.output_dir, "stats.txt", &stats.render_text(&loaded.schema))?;
    write_output(&config.output_dir, "stats.csv", &stats.render_delimited())?;
    Ok(())
}

/// `fit`: stepwise logistic baseline on the training partition.
pub fn cmd_fit(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let analysis = analyze_train(&loaded, config)?;
    let model = &analysis.stepwise.model;
    write_output(&config.output_dir, "model_summary.txt", &model.render_summary())?;
    write_output(&config.output_dir, "model.csv", &model.render_delimited())?;
    let mut trace = String::from("step,action,column,p_value\n");
    for record in &analysis.stepwise.trace {
        trace.push_str(&format!(
            "{},{:?},{},{:.6e}\n",
            record.step, record.action, record.column, record.p_value
        ));
    }
    write_output(&config.output_dir, "selection_trace.csv", &trace)?;
    Ok(())
}

/// `knowledge`: synthesized domain-knowledge block as standalone text.
pub fn cmd_knowledge(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let analysis = analyze_train(&loaded, config)?;
    write_output(&config.output_dir, "knowledge.txt", &analysis.kb.render_text())?;
    Ok(())
}

fn pick_event<'a>(
    events: &'a [&'a InteractionEvent],
    wanted: Option<&str>,
) -> Result<&'a InteractionEvent, CliError> {
    match wanted {
        Some(id) => events
            .iter()
            .copied()
            .find(|e| e.event_id == id)
            .ok_or_else(|| CliError::Usage(format!("event `{id}` is not in the test partition"))),
        None => events
            .first()
            .copied()
            .ok_or_else(|| CliError::Usage("test partition is empty".into())),
    }
}

/// `prompt-preview`: serialized prompt for one test event.
pub fn cmd_prompt_preview(
    config: &RunConfig,
    event_id: Option<&str>,
) -> Result<(), CliError> {
    let loaded = load(config)?;
    let analysis = analyze_train(&loaded, config)?;
    let (_, test) = split(&loaded.events, &config.split)?;
    let event = pick_event(&test, event_id)?;
    let image = match (&config.images_dir, site_image_path(&loaded.sites, event.site_id)) {
        (Some(dir), Some(rel)) => Some(prompt::load_site_image(&dir.join(rel))?),
        _ => None,
    };
    let assembled = assemble(
        event,
        &analysis.kb,
        &analysis.exemplars,
        &config.split,
        image,
        &loaded.schema,
    )?;
    let preview = assembled.render_preview();
    print!("{preview}");
    write_output(&config.output_dir, "prompt_preview.txt", &preview)?;
    Ok(())
}

fn site_image_path(sites: &[Site], site_id: u32) -> Option<String> {
    sites
        .iter()
        .find(|s| s.site_id == site_id)
        .and_then(|s| s.image_path.clone())
}

fn completion_mode(config: &RunConfig) -> Result<CompletionMode, CliError> {
    let cache = |config: &RunConfig| -> Result<Arc<ReplayCache>, CliError> {
        let path = config.cache.as_ref().ok_or_else(|| {
            CliError::Usage("record/replay mode needs paths.cache in the config".into())
        })?;
        Ok(Arc::new(ReplayCache::open(path)?))
    };
    match config.mode.as_str() {
        "live" => Ok(CompletionMode::Live),
        "record" => Ok(CompletionMode::Record(cache(config)?)),
        "replay" => Ok(CompletionMode::Replay(cache(config)?)),
        "mock" => Ok(CompletionMode::Mock(config.mock_response.clone())),
        other => Err(CliError::Usage(format!(
            "mode must be live|record|replay|mock, got `{other}`"
        ))),
    }
}

/// `predict`: batch inference over the test partition; writes the run
/// manifest.
pub fn cmd_predict(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let analysis = analyze_train(&loaded, config)?;
    let (_, test) = split(&loaded.events, &config.split)?;

    let providers = ProviderFile::load(&config.providers)?;
    let provider = providers.get(&config.provider)?.clone();
    let client = ChatClient::new(provider, completion_mode(config)?)?;

    let ctx = BatchContext {
        schema: &loaded.schema,
        kb: &analysis.kb,
        exemplars: &analysis.exemplars,
        split: &config.split,
        sites: &loaded.sites,
        images_dir: config.images_dir.as_deref(),
        template_version: config.template_version.clone(),
    };
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create output dir: {e}")))?;
    let journal = config.output_dir.join("manifest.partial");
    let manifest = run_batch(&test, &ctx, &client, config.parallelism, Some(&journal))?;
    let manifest_path = config.output_dir.join("manifest.jsonl");
    manifest.write(&manifest_path)?;
    let _ = std::fs::remove_file(&journal);
    println!(
        "wrote {} ({} predictions, {} failed)",
        manifest_path.display(),
        manifest.predictions.len(),
        manifest.n_failed()
    );
    if manifest.degraded {
        eprintln!(
            "warning: degraded run: {}/{} predictions failed",
            manifest.n_failed(),
            manifest.predictions.len()
        );
        return Err(CliError::Degraded);
    }
    Ok(())
}

fn truth_map(events: &[InteractionEvent]) -> BTreeMap<&str, (u32, bool)> {
    events
        .iter()
        .map(|e| (e.event_id.as_str(), (e.site_id, e.outcome)))
        .collect()
}

fn manifest_confusions(
    manifest: &RunManifest,
    truths: &BTreeMap<&str, (u32, bool)>,
    policy: FailedParsePolicy,
) -> Result<BTreeMap<u32, ConfusionMatrix>, CliError> {
    let mut by_site: BTreeMap<u32, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    for prediction in &manifest.predictions {
        let Some(&(site_id, truth)) = truths.get(prediction.event_id.as_str()) else {
            return Err(CliError::Data(format!(
                "manifest event `{}` is not in the dataset",
                prediction.event_id
            )));
        };
        let decision = match (prediction.decision, policy) {
            (Some(d), _) => d,
            (None, FailedParsePolicy::AsNonYield) => false,
            (None, FailedParsePolicy::Exclude) => continue,
        };
        let entry = by_site.entry(site_id).or_default();
        entry.0.push(decision);
        entry.1.push(truth);
    }
    let mut confusions = BTreeMap::new();
    for (site_id, (preds, truth)) in by_site {
        confusions.insert(site_id, confusion(&preds, &truth)?);
    }
    Ok(confusions)
}

fn render_metrics_files(
    config: &RunConfig,
    manifest: &RunManifest,
    truths: &BTreeMap<&str, (u32, bool)>,
) -> Result<(), CliError> {
    let n_failed = manifest.n_failed();
    let mut text = String::new();
    let primary = manifest_confusions(manifest, truths, config.failed_parses)?;
    let primary_report = aggregate(&primary)?;
    let policy_name = match config.failed_parses {
        FailedParsePolicy::Exclude => "exclude-failures",
        FailedParsePolicy::AsNonYield => "failures-as-nonyield",
    };
    text.push_str(&format!(
        "scoring: {policy_name}\nparse_failures: {n_failed}\n\n"
    ));
    text.push_str(&render_report(&primary_report, ReportFormat::AlignedText));
    if n_failed > 0 {
        let alternate_policy = match config.failed_parses {
            FailedParsePolicy::Exclude => FailedParsePolicy::AsNonYield,
            FailedParsePolicy::AsNonYield => FailedParsePolicy::Exclude,
        };
        let alternate = manifest_confusions(manifest, truths, alternate_policy)?;
        let alternate_report = aggregate(&alternate)?;
        let alternate_name = match alternate_policy {
            FailedParsePolicy::Exclude => "exclude-failures",
            FailedParsePolicy::AsNonYield => "failures-as-nonyield",
        };
        eprintln!("warning: {n_failed} prediction(s) failed to parse; reporting both scoring modes");
        text.push_str(&format!("\nalternate scoring: {alternate_name}\n\n"));
        text.push_str(&render_report(&alternate_report, ReportFormat::AlignedText));
    }
    write_output(&config.output_dir, "metrics.txt", &text)?;
    write_output(
        &config.output_dir,
        "metrics.csv",
        &render_report(&primary_report, ReportFormat::Delimited),
    )?;
    write_output(
        &config.output_dir,
        "metrics.md",
        &render_report(&primary_report, ReportFormat::MarkupTable),
    )?;
    Ok(())
}

fn render_cost_files(config: &RunConfig, manifest: &RunManifest) -> Result<(), CliError> {
    let providers = ProviderFile::load(&config.providers)?;
    let provider = providers.get(&manifest.provider)?;
    let exchanges = manifest.exchanges();
    let report = cost::estimate(&exchanges, &manifest.provider, &provider.pricing)?;
    write_output(&config.output_dir, "cost.txt", &report.render_text())?;
    write_output(&config.output_dir, "cost.csv", &report.render_delimited())?;
    Ok(())
}

/// `evaluate --manifest`: per-site and overall metrics plus the cost
/// report for one run manifest.
pub fn cmd_evaluate_manifest(config: &RunConfig, manifest_path: &Path) -> Result<(), CliError> {
    let loaded = load(config)?;
    let manifest = RunManifest::read(manifest_path)?;
    let truths = truth_map(&loaded.events);
    render_metrics_files(config, &manifest, &truths)?;
    render_cost_files(config, &manifest)?;
    Ok(())
}

/// `evaluate` without a manifest: the no-LLM logistic baseline. Fits on
/// the training partition, classifies the test partition at the
/// configured threshold, and emits the ROC point file with an AUC line.
pub fn cmd_evaluate_baseline(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let analysis = analyze_train(&loaded, config)?;
    let (_, test) = split(&loaded.events, &config.split)?;
    let model = &analysis.stepwise.model;

    let mut by_site: BTreeMap<u32, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    let mut scores = Vec::new();
    let mut truths = Vec::new();
    let mut skipped_missing = 0usize;
    for event in &test {
        let p = match model.predict_proba(event) {
            Ok(p) => p,
            Err(yieldbench_core::logit::LogitError::MissingFeature(_)) => {
                skipped_missing += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        scores.push(p);
        truths.push(event.outcome);
        let entry = by_site.entry(event.site_id).or_default();
        entry.0.push(p >= config.classification_threshold);
        entry.1.push(event.outcome);
    }

    let mut confusions = BTreeMap::new();
    for (site_id, (preds, truth)) in by_site {
        confusions.insert(site_id, confusion(&preds, &truth)?);
    }
    let report = aggregate(&confusions)?;
    let mut text = format!(
        "baseline: stepwise logistic regression at threshold {:.2}\n",
        config.classification_threshold
    );
    if skipped_missing > 0 {
        text.push_str(&format!(
            "events skipped for missing model features: {skipped_missing}\n"
        ));
    }
    text.push('\n');
    text.push_str(&render_report(&report, ReportFormat::AlignedText));

    let roc = roc_points(&scores, &truths)?;
    text.push_str(&format!("\nAUC: {:.4}\n", roc.auc));
    write_output(&config.output_dir, "baseline_metrics.txt", &text)?;
    write_output(
        &config.output_dir,
        "baseline_metrics.csv",
        &render_report(&report, ReportFormat::Delimited),
    )?;
    write_output(&config.output_dir, "roc_points.csv", &roc.render_points())?;
    write_output(&config.output_dir, "auc.txt", &format!("{:.6}\n", roc.auc))?;
    Ok(())
}

/// `cost --manifest`: cost report only.
pub fn cmd_cost(config: &RunConfig, manifest_path: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::read(manifest_path)?;
    render_cost_files(config, &manifest)?;
    Ok(())
}

/// `gen-data`: writes a seeded synthetic dataset (events, sites, schema).
pub fn cmd_gen_data(layout: &str, seed: u64, out: &Path) -> Result<(), CliError> {
    let counts = match layout {
        "full" => datagen::full_site_counts(),
        "demo" => datagen::demo_site_counts(),
        other => {
            return Err(CliError::Usage(format!(
                "layout must be `full` or `demo`, got `{other}`"
            )))
        }
    };
    let missing_rate = if layout == "demo" { 0.04 } else { 0.005 };
    let (events, sites) = datagen::generate(seed, &counts, missing_rate);
    let schema = default_schema();
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    yieldbench_core::data::write_events(&out.join("events.csv"), &events, &schema)?;
    yieldbench_core::data::write_sites(&out.join("sites.csv"), &sites)?;
    std::fs::write(out.join("schema.toml"), schema.to_toml())
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "wrote {} events across {} sites under {}",
        events.len(),
        sites.len(),
        out.display()
    );
    Ok(())
}
