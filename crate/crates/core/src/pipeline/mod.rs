//! Batch orchestration: run configured methods over a prompt dataset,
//! persist per-prompt artifacts and evaluation records, aggregate reports,
//! and resume idempotently from a previous partial run.

pub mod config;
pub mod dataset;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{self, BaselineSpec};
use crate::control::{self, ControlDirective};
use crate::corpus::{build_corpus, score_corpus, ScoredCorpus};
use crate::errors::{Error, Result};
use crate::eval::{self, AggregateReport, EvalRecord};
use crate::graph::{
    build_attribute_graphs, export_dot, rank_graph, select_key_tokens, KeyTokenSet,
};
use crate::task::Task;

use config::{ArtifactRetention, Backends, Method, PipelineConfig};
use dataset::{sanitize_id, DatasetRecord};
use manifest::{content_hash, write_atomic, Manifest, SkippedUnit, UnitRecord};

/// Exit status contract: 0 success, 1 config error (surfaced as `Err`
/// before any work), 2 partial failures, 3 total failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub records_written: usize,
    pub skipped: Vec<SkippedUnit>,
    pub resumed_units: usize,
}

/// Intermediate DATG artifacts for one prompt, shared by DATG-L and DATG-P.
struct StageArtifacts {
    corpus: ScoredCorpus,
    keys: KeyTokenSet,
    pos_dot: String,
    neg_dot: String,
    warnings: Vec<String>,
}

/// Stages 1-3 for one prompt: sample the contextual corpus, score it, build
/// and rank the attribute graphs, and select key tokens.
fn datg_stages(
    prompt: &str,
    config: &PipelineConfig,
    backends: &Backends,
) -> Result<StageArtifacts> {
    let build = build_corpus(
        prompt,
        config.control.corpus_size,
        &config.generation,
        backends.generator.as_ref(),
        config.retry_budget,
        backends.generation_parallelism,
    )?;
    let warnings: Vec<String> = build
        .dropped
        .iter()
        .map(|d| format!("corpus sample {} dropped: {}", d.index, d.reason))
        .collect();
    let corpus = score_corpus(build.sentences, backends.classifier.as_ref(), prompt)?;
    let (positive, negative) = build_attribute_graphs(&corpus);
    let ranks_pos = rank_graph(&positive, &config.control.selection)?;
    let ranks_neg = rank_graph(&negative, &config.control.selection)?;
    let keys = select_key_tokens(&ranks_pos, &ranks_neg, &config.control.selection)?;
    Ok(StageArtifacts {
        corpus,
        keys,
        pos_dot: export_dot(&positive),
        neg_dot: export_dot(&negative),
        warnings,
    })
}

/// Generate one completion with `method`. Returns the completion plus the
/// control directive to persist, when the method has one.
fn run_method(
    method: Method,
    record: &DatasetRecord,
    stages: Option<&StageArtifacts>,
    config: &PipelineConfig,
    backends: &Backends,
) -> Result<(String, Option<ControlDirective>)> {
    let prompts = config.templates.for_task(record.task);
    let spec = BaselineSpec {
        injection_prompt: Some(prompts.injection.clone()),
        fudge_top_k: config.fudge_top_k,
        fudge_alpha: config.fudge_alpha,
        preadd_alpha: config.preadd_alpha,
        preadd_prefix: prompts.preadd_prefix.clone(),
    };
    match method {
        Method::Continuation => {
            let completion = baselines::continuation(
                &record.prompt,
                &config.generation,
                backends.generator.as_ref(),
            )?;
            Ok((completion, None))
        }
        Method::Injection => {
            let completion = baselines::injection(
                &record.prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
            )?;
            Ok((completion, None))
        }
        Method::Fudge => {
            let completion = baselines::fudge_generate(
                &record.prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
                backends.classifier.as_ref(),
            )?;
            Ok((completion, None))
        }
        Method::Preadd => {
            let completion = baselines::preadd_generate(
                &record.prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
            )?;
            Ok((completion, None))
        }
        Method::DatgL => {
            let stages = stages.expect("DATG stages computed before DATG methods");
            let mapper = backends.mapper.as_ref().ok_or(Error::CapabilityMissing {
                capability: "vocabulary mapping",
            })?;
            let (completion, bias) = control::regenerate_logits_boost(
                &record.prompt,
                &stages.keys,
                &config.control,
                &config.generation,
                backends.generator.as_ref(),
                mapper.as_ref(),
            )?;
            Ok((completion, Some(ControlDirective::logits_boost(&bias))))
        }
        Method::DatgP => {
            let stages = stages.expect("DATG stages computed before DATG methods");
            let (completion, prefixed) = control::regenerate_prefix(
                &record.prompt,
                &stages.keys,
                &config.control,
                &config.generation,
                backends.generator.as_ref(),
            )?;
            Ok((completion, Some(ControlDirective::prefix_prompt(&prefixed))))
        }
    }
}

/// Compute the metric fields for one completion against its original prompt.
fn evaluate(
    record: &DatasetRecord,
    method: Method,
    completion: String,
    elapsed_seconds: f64,
    config: &PipelineConfig,
    backends: &Backends,
    warnings: &[String],
) -> EvalRecord {
    let mut flags: Vec<String> = warnings.to_vec();

    let attribute_score = match backends.classifier.classify(&completion) {
        Ok(score) => Some(score),
        Err(e) => {
            flags.push(format!("classifier failed: {e}"));
            None
        }
    };
    let success = attribute_score.map(|s| s > config.success_threshold);

    let perplexity = if completion.is_empty() {
        flags.push("empty completion: perplexity undefined".to_string());
        None
    } else {
        match eval::perplexity(&record.prompt, &completion, backends.scorer.as_ref()) {
            Ok(p) => Some(p),
            Err(e) => {
                flags.push(format!("perplexity unavailable: {e}"));
                None
            }
        }
    };

    let relevance = match eval::relevance(&record.prompt, &completion, backends.embedder.as_ref()) {
        Ok(r) => Some(r),
        Err(e) => {
            flags.push(format!("relevance unavailable: {e}"));
            None
        }
    };

    EvalRecord {
        prompt_id: record.id.clone(),
        method: method.as_str().to_string(),
        completion,
        attribute_score,
        success,
        perplexity,
        relevance,
        elapsed_seconds,
        flags,
    }
}

/// Everything one prompt produced: per-method results plus the resume count.
struct UnitOutput {
    results: Vec<(Method, std::result::Result<UnitRecord, String>)>,
    resumed: usize,
}

fn process_prompt(
    record: &DatasetRecord,
    config: &PipelineConfig,
    backends: &Backends,
) -> UnitOutput {
    let sid = sanitize_id(&record.id);
    let out_dir = &config.output_dir;
    let retain = config.artifact_retention == ArtifactRetention::Full;

    let mut resumed = 0usize;
    let mut pending: Vec<Method> = Vec::new();
    let mut results: Vec<(Method, std::result::Result<UnitRecord, String>)> = Vec::new();
    for &method in &config.methods {
        let unit_path = UnitRecord::path(out_dir, &sid, method.as_str());
        match UnitRecord::load_verified(&unit_path, out_dir) {
            Some(unit) if unit.record.method == method.as_str() => {
                resumed += 1;
                results.push((method, Ok(unit)));
            }
            _ => pending.push(method),
        }
    }

    // Stages 1-3 run once per prompt when any pending method needs them.
    let needs_stages = pending.iter().any(Method::is_datg);
    let mut stage_artifacts: BTreeMap<String, String> = BTreeMap::new();
    let stages: Option<StageArtifacts> = if needs_stages {
        match datg_stages(&record.prompt, config, backends) {
            Ok(stages) => {
                if retain {
                    let mut write = |rel: String, bytes: &[u8]| -> Result<()> {
                        write_atomic(&out_dir.join(&rel), bytes)?;
                        stage_artifacts.insert(rel, content_hash(bytes));
                        Ok(())
                    };
                    let persist = (|| -> Result<()> {
                        write(
                            format!("corpus/{sid}.jsonl"),
                            stages.corpus.to_jsonl().as_bytes(),
                        )?;
                        write(format!("graphs/{sid}.pos.dot"), stages.pos_dot.as_bytes())?;
                        write(format!("graphs/{sid}.neg.dot"), stages.neg_dot.as_bytes())?;
                        let mut keys_json = serde_json::to_string_pretty(&stages.keys)
                            .expect("key tokens serialize");
                        keys_json.push('\n');
                        write(format!("keys/{sid}.json"), keys_json.as_bytes())?;
                        Ok(())
                    })();
                    if let Err(e) = persist {
                        for method in pending {
                            results.push((method, Err(format!("stage artifacts: {e}"))));
                        }
                        results.sort_by_key(|(m, _)| config.methods.iter().position(|x| x == m));
                        return UnitOutput { results, resumed };
                    }
                }
                Some(stages)
            }
            Err(e) => {
                // Baselines can still run; only DATG methods lose their input.
                let reason = format!("DATG stages failed: {e}");
                let (datg, rest): (Vec<Method>, Vec<Method>) =
                    pending.iter().partition(|m| m.is_datg());
                for method in datg {
                    results.push((method, Err(reason.clone())));
                }
                pending = rest;
                None
            }
        }
    } else {
        None
    };

    for method in pending {
        let started = Instant::now();
        let outcome = run_method(method, record, stages.as_ref(), config, backends);
        let elapsed = if config.record_timings {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        match outcome {
            Ok((completion, directive)) => {
                let warnings: Vec<String> = match (&stages, method.is_datg()) {
                    (Some(stages), true) => stages.warnings.clone(),
                    _ => Vec::new(),
                };
                let eval_record = evaluate(
                    record, method, completion, elapsed, config, backends, &warnings,
                );
                let mut artifacts = if method.is_datg() {
                    stage_artifacts.clone()
                } else {
                    BTreeMap::new()
                };
                if retain {
                    if let Some(directive) = &directive {
                        let rel = format!("directives/{sid}.{}.json", method.as_str());
                        let mut json =
                            serde_json::to_string_pretty(directive).expect("directive serializes");
                        json.push('\n');
                        if let Err(e) = write_atomic(&out_dir.join(&rel), json.as_bytes()) {
                            results.push((method, Err(format!("directive write: {e}"))));
                            continue;
                        }
                        artifacts.insert(rel, content_hash(json.as_bytes()));
                    }
                }
                let unit = UnitRecord {
                    record: eval_record,
                    artifacts,
                };
                let unit_path = UnitRecord::path(out_dir, &sid, method.as_str());
                match unit.write(&unit_path) {
                    Ok(()) => results.push((method, Ok(unit))),
                    Err(e) => results.push((method, Err(format!("record write: {e}")))),
                }
            }
            Err(e) => results.push((method, Err(e.to_string()))),
        }
    }

    results.sort_by_key(|(method, _)| config.methods.iter().position(|m| m == method));
    UnitOutput { results, resumed }
}

/// Run the pipeline over the dataset. The dataset must be non-empty and the
/// output directory is only mutated after validation passes.
pub fn run(config: &PipelineConfig, dataset: &[DatasetRecord]) -> Result<RunOutcome> {
    if dataset.is_empty() {
        return Err(Error::invalid_input("dataset must be non-empty"));
    }
    let backends = config.build_backends()?;
    std::fs::create_dir_all(&config.output_dir)?;

    let unit_outputs: Mutex<Vec<Option<UnitOutput>>> =
        Mutex::new((0..dataset.len()).map(|_| None).collect());
    let cursor = Mutex::new(0usize);
    let workers = config.concurrency_limit.clamp(1, dataset.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = {
                    let mut next = cursor.lock().unwrap();
                    if *next >= dataset.len() {
                        break;
                    }
                    let i = *next;
                    *next += 1;
                    i
                };
                let output = process_prompt(&dataset[index], config, &backends);
                unit_outputs.lock().unwrap()[index] = Some(output);
            });
        }
    });

    finalize(config, dataset, unit_outputs.into_inner().unwrap())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    tasks: BTreeMap<String, &'a AggregateReport>,
    skipped: &'a [SkippedUnit],
}

fn finalize(
    config: &PipelineConfig,
    dataset: &[DatasetRecord],
    unit_outputs: Vec<Option<UnitOutput>>,
) -> Result<RunOutcome> {
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut skipped: Vec<SkippedUnit> = Vec::new();
    let mut artifacts: BTreeMap<String, String> = BTreeMap::new();
    let mut resumed_units = 0usize;

    for (record, output) in dataset.iter().zip(unit_outputs) {
        let output = output.expect("every prompt was processed");
        resumed_units += output.resumed;
        let sid = sanitize_id(&record.id);
        for (method, result) in output.results {
            match result {
                Ok(unit) => {
                    for (rel, hash) in &unit.artifacts {
                        artifacts.insert(rel.clone(), hash.clone());
                    }
                    let unit_rel = format!("records/{sid}.{}.json", method.as_str());
                    let unit_bytes = std::fs::read(config.output_dir.join(&unit_rel))?;
                    artifacts.insert(unit_rel, content_hash(&unit_bytes));
                    records.push(unit.record);
                }
                Err(reason) => skipped.push(SkippedUnit {
                    prompt_id: record.id.clone(),
                    method: method.as_str().to_string(),
                    reason,
                }),
            }
        }
    }

    let mut records_jsonl = String::new();
    for record in &records {
        records_jsonl.push_str(&serde_json::to_string(record).expect("record serializes"));
        records_jsonl.push('\n');
    }
    write_atomic(
        &config.output_dir.join("records.jsonl"),
        records_jsonl.as_bytes(),
    )?;
    artifacts.insert(
        "records.jsonl".to_string(),
        content_hash(records_jsonl.as_bytes()),
    );

    // One report table per task present in the dataset.
    let task_of: BTreeMap<&str, Task> = dataset.iter().map(|r| (r.id.as_str(), r.task)).collect();
    let mut by_task: BTreeMap<Task, Vec<EvalRecord>> = BTreeMap::new();
    for record in &records {
        if let Some(task) = task_of.get(record.prompt_id.as_str()) {
            by_task.entry(*task).or_default().push(record.clone());
        }
    }
    let mut task_reports: BTreeMap<String, AggregateReport> = BTreeMap::new();
    let mut markdown = String::from("# Run report\n\n");
    for (task, task_records) in &by_task {
        let report = eval::aggregate(task_records)?.with_improvements(*task);
        markdown.push_str(&report.to_markdown(*task));
        markdown.push('\n');
        task_reports.insert(task.to_string(), report);
    }
    if !skipped.is_empty() {
        markdown.push_str("## Skipped units\n\n");
        for skip in &skipped {
            markdown.push_str(&format!(
                "- {} / {}: {}\n",
                skip.prompt_id, skip.method, skip.reason
            ));
        }
    }
    write_atomic(&config.output_dir.join("report.md"), markdown.as_bytes())?;
    artifacts.insert("report.md".to_string(), content_hash(markdown.as_bytes()));

    let json_report = JsonReport {
        tasks: task_reports.iter().map(|(k, v)| (k.clone(), v)).collect(),
        skipped: &skipped,
    };
    let mut report_json = serde_json::to_string_pretty(&json_report).expect("report serializes");
    report_json.push('\n');
    write_atomic(
        &config.output_dir.join("report.json"),
        report_json.as_bytes(),
    )?;
    artifacts.insert(
        "report.json".to_string(),
        content_hash(report_json.as_bytes()),
    );

    let manifest = Manifest {
        artifacts,
        skipped: skipped.clone(),
    };
    write_atomic(
        &config.output_dir.join(manifest::MANIFEST_FILE),
        manifest.to_json().as_bytes(),
    )?;

    let exit_code = if records.is_empty() {
        3
    } else if skipped.is_empty() {
        0
    } else {
        2
    };
    Ok(RunOutcome {
        exit_code,
        records_written: records.len(),
        skipped,
        resumed_units,
    })
}

/// The stage-3-only entry point behind the `graph` subcommand: read a scored
/// corpus, build and rank the dual graphs, and write the DOT exports and the
/// key-token JSON next to each other.
pub fn run_graph_stage(
    corpus_path: &Path,
    out_dir: &Path,
    selection: &crate::graph::SelectionConfig,
) -> Result<Vec<std::path::PathBuf>> {
    let stem = corpus_path
        .file_stem()
        .map(|s| sanitize_id(&s.to_string_lossy()))
        .unwrap_or_else(|| "corpus".to_string());
    let jsonl = std::fs::read_to_string(corpus_path)?;
    let corpus = ScoredCorpus::from_jsonl("", &jsonl)?;
    let (positive, negative) = build_attribute_graphs(&corpus);
    let ranks_pos = rank_graph(&positive, selection)?;
    let ranks_neg = rank_graph(&negative, selection)?;
    let keys = select_key_tokens(&ranks_pos, &ranks_neg, selection)?;

    let pos_path = out_dir.join(format!("{stem}.pos.dot"));
    let neg_path = out_dir.join(format!("{stem}.neg.dot"));
    let keys_path = out_dir.join(format!("{stem}.keys.json"));
    write_atomic(&pos_path, export_dot(&positive).as_bytes())?;
    write_atomic(&neg_path, export_dot(&negative).as_bytes())?;
    let mut keys_json = serde_json::to_string_pretty(&keys).expect("key tokens serialize");
    keys_json.push('\n');
    write_atomic(&keys_path, keys_json.as_bytes())?;
    Ok(vec![pos_path, neg_path, keys_path])
}
