//! Metrics and aggregate reporting: attribute score, success rate,
//! conditional perplexity, prompt-completion relevance, and the per-method
//! means with relative-improvement arithmetic behind the report tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::hashed::cosine;
use crate::backends::{AttributeClassifier, Embedder, Generator};
use crate::errors::{Error, Result};
use crate::task::Task;

/// Default decision boundary for success; strictly above counts as success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.5;

/// Conditional perplexity of the completion given the prompt: `exp` of the
/// scorer's mean per-token negative log-likelihood.
pub fn perplexity(prompt: &str, completion: &str, scorer: &dyn Generator) -> Result<f64> {
    if !scorer.capabilities().supports_sequence_scoring {
        return Err(Error::CapabilityMissing {
            capability: "sequence scoring",
        });
    }
    if completion.is_empty() {
        return Err(Error::invalid_input(
            "perplexity is undefined for an empty completion",
        ));
    }
    Ok(scorer.score_sequence(prompt, completion)?.exp())
}

/// Whether the completion's classifier score clears the threshold.
pub fn success(
    completion: &str,
    classifier: &dyn AttributeClassifier,
    threshold: f64,
) -> Result<bool> {
    Ok(classifier.classify(completion)? > threshold)
}

/// Cosine similarity between the prompt and completion embeddings; 0 when
/// either embedding is the zero vector.
pub fn relevance(prompt: &str, completion: &str, embedder: &dyn Embedder) -> Result<f64> {
    let a = embedder.embed(prompt)?;
    let b = embedder.embed(completion)?;
    Ok(cosine(&a, &b))
}

/// Per-prompt, per-method evaluation result. Metric fields are `None` when
/// the metric could not be computed; `flags` say why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prompt_id: String,
    pub method: String,
    pub completion: String,
    pub attribute_score: Option<f64>,
    pub success: Option<bool>,
    pub perplexity: Option<f64>,
    pub relevance: Option<f64>,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Arithmetic means for one method over its non-flagged records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub records: usize,
    /// Records with at least one flagged (missing) metric.
    pub errors: usize,
    pub mean_attribute_score: Option<f64>,
    pub success_rate: Option<f64>,
    pub mean_perplexity: Option<f64>,
    pub mean_relevance: Option<f64>,
    pub mean_elapsed_seconds: Option<f64>,
}

/// Direction of a metric for improvement arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    LowerIsBetter,
    HigherIsBetter,
}

/// Relative improvement of `method_value` over `baseline_value`, in percent.
/// Lower-is-better metrics use `(baseline - method) / baseline`; higher-is-
/// better metrics use `(method - baseline) / baseline`.
pub fn relative_improvement_percent(
    direction: MetricDirection,
    method_value: f64,
    baseline_value: f64,
) -> f64 {
    let ratio = match direction {
        MetricDirection::LowerIsBetter => (baseline_value - method_value) / baseline_value,
        MetricDirection::HigherIsBetter => (method_value - baseline_value) / baseline_value,
    };
    ratio * 100.0
}

/// One improvement cell: `method` versus `baseline` on `metric`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub metric: String,
    pub method: String,
    pub baseline: String,
    pub percent: f64,
}

/// Per-method means plus cross-method improvement arithmetic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub methods: BTreeMap<String, MethodAggregate>,
    pub improvements: Vec<Improvement>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Fold records into per-method means. Flagged metrics are excluded from
/// their mean; a record with any flag counts in the `errors` column.
pub fn aggregate(records: &[EvalRecord]) -> Result<AggregateReport> {
    if records.is_empty() {
        return Err(Error::invalid_input("cannot aggregate zero records"));
    }
    let mut by_method: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    for record in records {
        by_method
            .entry(record.method.clone())
            .or_default()
            .push(record);
    }

    let mut methods = BTreeMap::new();
    for (method, records) in by_method {
        let collect = |extract: fn(&EvalRecord) -> Option<f64>| -> Vec<f64> {
            records.iter().filter_map(|r| extract(r)).collect()
        };
        let aggregate = MethodAggregate {
            records: records.len(),
            errors: records.iter().filter(|r| !r.flags.is_empty()).count(),
            mean_attribute_score: mean(&collect(|r| r.attribute_score)),
            success_rate: mean(
                &records
                    .iter()
                    .filter_map(|r| r.success.map(|s| if s { 1.0 } else { 0.0 }))
                    .collect::<Vec<_>>(),
            ),
            mean_perplexity: mean(&collect(|r| r.perplexity)),
            mean_relevance: mean(&collect(|r| r.relevance)),
            mean_elapsed_seconds: mean(&collect(|r| Some(r.elapsed_seconds))),
        };
        methods.insert(method, aggregate);
    }
    Ok(AggregateReport {
        methods,
        improvements: Vec::new(),
    })
}

/// The metric columns a task reports, in table order.
fn metric_columns(task: Task) -> Vec<(&'static str, MetricDirection)> {
    let attribute = if task.reports_inverted_attribute() {
        ("Toxicity", MetricDirection::LowerIsBetter)
    } else {
        ("Success", MetricDirection::HigherIsBetter)
    };
    vec![
        ("Relevance", MetricDirection::HigherIsBetter),
        ("Perplexity", MetricDirection::LowerIsBetter),
        attribute,
    ]
}

fn metric_value(task: Task, metric: &str, aggregate: &MethodAggregate) -> Option<f64> {
    match metric {
        "Relevance" => aggregate.mean_relevance,
        "Perplexity" => aggregate.mean_perplexity,
        // Attribute consistency is re-expressed lower-is-better for the
        // toxicity task so the column reads as a toxicity level.
        "Toxicity" => aggregate.mean_attribute_score.map(|s| 1.0 - s),
        "Success" if task.reports_inverted_attribute() => None,
        "Success" => aggregate.success_rate,
        _ => None,
    }
}

impl AggregateReport {
    /// Fill the improvement table: every method against every other method
    /// on every metric column the task reports.
    pub fn with_improvements(mut self, task: Task) -> Self {
        let mut improvements = Vec::new();
        for (metric, direction) in metric_columns(task) {
            for (method, method_aggregate) in &self.methods {
                for (baseline, baseline_aggregate) in &self.methods {
                    if method == baseline {
                        continue;
                    }
                    let (Some(m), Some(b)) = (
                        metric_value(task, metric, method_aggregate),
                        metric_value(task, metric, baseline_aggregate),
                    ) else {
                        continue;
                    };
                    if b == 0.0 {
                        continue;
                    }
                    improvements.push(Improvement {
                        metric: metric.to_string(),
                        method: method.clone(),
                        baseline: baseline.clone(),
                        percent: relative_improvement_percent(direction, m, b),
                    });
                }
            }
        }
        self.improvements = improvements;
        self
    }

    pub fn improvement(&self, metric: &str, method: &str, baseline: &str) -> Option<f64> {
        self.improvements
            .iter()
            .find(|i| i.metric == metric && i.method == method && i.baseline == baseline)
            .map(|i| i.percent)
    }

    /// Render the Markdown table for one task: a method per row, metric
    /// columns with their direction arrows, then record and error counts.
    pub fn to_markdown(&self, task: Task) -> String {
        let columns = metric_columns(task);
        let mut out = String::new();
        out.push_str(&format!("## Task: {task}\n\n"));
        out.push_str("| Method |");
        for (name, direction) in &columns {
            let arrow = match direction {
                MetricDirection::HigherIsBetter => "\u{2191}",
                MetricDirection::LowerIsBetter => "\u{2193}",
            };
            out.push_str(&format!(" {name} {arrow} |"));
        }
        out.push_str(" Records | Errors |\n");
        out.push_str("|---|");
        for _ in &columns {
            out.push_str("---|");
        }
        out.push_str("---|---|\n");
        for (method, aggregate) in &self.methods {
            out.push_str(&format!("| {method} |"));
            for (name, _) in &columns {
                match metric_value(task, name, aggregate) {
                    Some(v) => out.push_str(&format!(" {v:.4} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push_str(&format!(
                " {} | {} |\n",
                aggregate.records, aggregate.errors
            ));
        }
        out
    }
}
