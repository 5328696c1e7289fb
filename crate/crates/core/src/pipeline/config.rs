//! Pipeline configuration: the TOML schema, validation that reports every
//! violation at once, and construction of the configured backends.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{
    AttributeClassifier, Embedder, GenerationConfig, Generator, HashedEmbedder, HttpClassifier,
    HttpClientConfig, HttpEmbedder, HttpGenerator, LexiconClassifier, LexiconClassifierSpec,
    NGramGenerator,
};
use crate::control::{ControlConfig, ControlStrategy, FileVocabularyMapper, VocabularyMapper};
use crate::errors::{Error, Result};
use crate::graph::{default_stopwords, SelectionConfig, SelectionMode};
use crate::task::TaskTemplates;

/// Generation method names as they appear in output records and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Continuation,
    Injection,
    Fudge,
    Preadd,
    DatgL,
    DatgP,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Continuation,
        Method::Injection,
        Method::Fudge,
        Method::Preadd,
        Method::DatgL,
        Method::DatgP,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Continuation => "CONTINUATION",
            Method::Injection => "INJECTION",
            Method::Fudge => "FUDGE",
            Method::Preadd => "PREADD",
            Method::DatgL => "DATG-L",
            Method::DatgP => "DATG-P",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .find(|m| m.as_str() == name)
            .copied()
            .ok_or_else(|| {
                Error::invalid_input(format!(
                    "unknown method {name:?}; valid methods: {}",
                    Method::ALL.map(|m| m.as_str()).join(", ")
                ))
            })
    }

    /// DATG methods share the corpus/graph/key-token stages per prompt.
    pub fn is_datg(&self) -> bool {
        matches!(self, Method::DatgL | Method::DatgP)
    }

    /// Methods that need raw next-token distributions from the generator.
    pub fn needs_full_distribution(&self) -> bool {
        matches!(self, Method::Fudge | Method::Preadd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What happens to per-prompt stage artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRetention {
    /// Keep corpus JSONL, DOT graphs, key-token and directive JSON.
    Full,
    /// Keep only records, reports, and the manifest.
    ReportsOnly,
}

// ---------------------------------------------------------------------------
// Raw TOML schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    backends: RawBackends,
    generation: GenerationConfig,
    control: RawControl,
    baselines: RawBaselines,
    pipeline: RawPipeline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawBackends {
    generator: String,
    classifier: String,
    embedder: String,
    scorer: String,
    seed_corpus: Option<PathBuf>,
    http: RawHttp,
    lexicon: RawLexicon,
    embedding: RawEmbedding,
}

impl Default for RawBackends {
    fn default() -> Self {
        Self {
            generator: "ngram".to_string(),
            classifier: "lexicon".to_string(),
            embedder: "hashed".to_string(),
            scorer: "generator".to_string(),
            seed_corpus: None,
            http: RawHttp::default(),
            lexicon: RawLexicon::default(),
            embedding: RawEmbedding::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawHttp {
    generator_url: String,
    classifier_url: String,
    embedder_url: String,
    vocabulary_file: Option<PathBuf>,
    model: Option<String>,
    max_in_flight: usize,
    timeout_seconds: u64,
}

impl Default for RawHttp {
    fn default() -> Self {
        Self {
            generator_url: String::new(),
            classifier_url: String::new(),
            embedder_url: String::new(),
            vocabulary_file: None,
            model: None,
            max_in_flight: 4,
            timeout_seconds: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLexicon {
    positive_terms: Vec<String>,
    negative_terms: Vec<String>,
    positive_file: Option<PathBuf>,
    negative_file: Option<PathBuf>,
    smoothing: f64,
}

impl Default for RawLexicon {
    fn default() -> Self {
        Self {
            positive_terms: Vec::new(),
            negative_terms: Vec::new(),
            positive_file: None,
            negative_file: None,
            smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawEmbedding {
    dimension: usize,
}

impl Default for RawEmbedding {
    fn default() -> Self {
        Self { dimension: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawControl {
    alpha: f64,
    beta: f64,
    corpus_size: usize,
    strategy: ControlStrategy,
    prefix_max_words: usize,
    selection: RawSelection,
}

impl Default for RawControl {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 6.0,
            corpus_size: 30,
            strategy: ControlStrategy::LogitsBoost,
            prefix_max_words: 10,
            selection: RawSelection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSelection {
    top_k: usize,
    theta_p: Option<f64>,
    theta_n: Option<f64>,
    damping: f64,
    tolerance: f64,
    max_iterations: usize,
    stopwords_file: Option<PathBuf>,
}

impl Default for RawSelection {
    fn default() -> Self {
        Self {
            top_k: 10,
            theta_p: None,
            theta_n: None,
            damping: 0.85,
            tolerance: 1e-8,
            max_iterations: 100,
            stopwords_file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawBaselines {
    fudge_top_k: usize,
    fudge_alpha: f64,
    preadd_alpha: f64,
    task_templates: Option<PathBuf>,
}

impl Default for RawBaselines {
    fn default() -> Self {
        Self {
            fudge_top_k: 100,
            fudge_alpha: 0.5,
            preadd_alpha: 1.0,
            task_templates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPipeline {
    methods: Vec<String>,
    output_dir: PathBuf,
    concurrency_limit: usize,
    artifact_retention: ArtifactRetention,
    success_threshold: f64,
    retry_budget: usize,
    record_timings: bool,
}

impl Default for RawPipeline {
    fn default() -> Self {
        Self {
            methods: vec!["CONTINUATION".to_string(), "DATG-L".to_string()],
            output_dir: PathBuf::from("out"),
            concurrency_limit: 4,
            artifact_retention: ArtifactRetention::Full,
            success_threshold: 0.5,
            retry_budget: 2,
            record_timings: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Validated configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum GeneratorSelection {
    Ngram {
        seed_corpus: PathBuf,
    },
    Http {
        url: String,
        model: Option<String>,
        vocabulary_file: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub enum ClassifierSelection {
    Lexicon(LexiconClassifierSpec),
    Http { url: String },
}

#[derive(Debug, Clone)]
pub enum EmbedderSelection {
    Hashed { dimension: usize },
    Http { url: String, dimension: usize },
}

#[derive(Debug, Clone)]
pub enum ScorerSelection {
    /// Reuse the generator backend for perplexity scoring.
    Generator,
    /// Score with a dedicated built-in n-gram model.
    Ngram { seed_corpus: PathBuf },
}

/// Fully validated pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub generator: GeneratorSelection,
    pub classifier: ClassifierSelection,
    pub embedder: EmbedderSelection,
    pub scorer: ScorerSelection,
    pub http: HttpClientConfig,
    pub generation: GenerationConfig,
    pub control: ControlConfig,
    pub fudge_top_k: usize,
    pub fudge_alpha: f64,
    pub preadd_alpha: f64,
    pub templates: TaskTemplates,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub concurrency_limit: usize,
    pub artifact_retention: ArtifactRetention,
    pub success_threshold: f64,
    pub retry_budget: usize,
    pub record_timings: bool,
}

/// Parse and validate a config file. Relative paths resolve against the
/// config file's directory. Every violation is reported, not just the first.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    let raw = std::fs::read_to_string(path)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    parse_config(&raw, &base)
}

/// Parse and validate config text, resolving relative paths against `base`.
pub fn parse_config(raw: &str, base: &Path) -> Result<PipelineConfig> {
    let raw: RawConfig = toml::from_str(raw)
        .map_err(|e| Error::InvalidConfig(vec![format!("config parse error: {e}")]))?;
    let mut errors: Vec<String> = Vec::new();
    let resolve = |p: &PathBuf| -> PathBuf {
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    };

    errors.extend(raw.generation.validation_errors());

    // --- methods --------------------------------------------------------
    let mut methods = Vec::new();
    if raw.pipeline.methods.is_empty() {
        errors.push("pipeline.methods must be non-empty".to_string());
    }
    for name in &raw.pipeline.methods {
        match Method::parse(name) {
            Ok(method) => {
                if !methods.contains(&method) {
                    methods.push(method);
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }

    // --- selection mode ---------------------------------------------------
    let mode = match (raw.control.selection.theta_p, raw.control.selection.theta_n) {
        (None, None) => SelectionMode::TopK {
            k: raw.control.selection.top_k,
        },
        (Some(theta_p), Some(theta_n)) => SelectionMode::Threshold { theta_p, theta_n },
        _ => {
            errors.push("selection thresholds require both theta_p and theta_n".to_string());
            SelectionMode::TopK {
                k: raw.control.selection.top_k,
            }
        }
    };

    let stopwords = match &raw.control.selection.stopwords_file {
        None => default_stopwords(),
        Some(path) => {
            let path = resolve(path);
            match std::fs::read_to_string(&path) {
                Ok(text) => text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_string)
                    .collect(),
                Err(e) => {
                    errors.push(format!("stopwords file {}: {e}", path.display()));
                    BTreeSet::new()
                }
            }
        }
    };

    let control = ControlConfig {
        alpha: raw.control.alpha,
        beta: raw.control.beta,
        corpus_size: raw.control.corpus_size,
        selection: SelectionConfig {
            mode,
            stopwords,
            damping: raw.control.selection.damping,
            tolerance: raw.control.selection.tolerance,
            max_iterations: raw.control.selection.max_iterations,
        },
        strategy: raw.control.strategy,
        prefix_max_words: raw.control.prefix_max_words,
    };
    errors.extend(control.validation_errors());

    // --- backends ---------------------------------------------------------
    let seed_corpus = raw.backends.seed_corpus.as_ref().map(resolve);
    let needs_seed_corpus = raw.backends.generator == "ngram" || raw.backends.scorer == "ngram";
    if needs_seed_corpus {
        match &seed_corpus {
            None => errors.push(
                "backends.seed_corpus is required for the ngram generator/scorer".to_string(),
            ),
            Some(path) if !path.exists() => {
                errors.push(format!("seed corpus {} does not exist", path.display()));
            }
            Some(_) => {}
        }
    }

    let generator = match raw.backends.generator.as_str() {
        "ngram" => GeneratorSelection::Ngram {
            seed_corpus: seed_corpus.clone().unwrap_or_default(),
        },
        "http" => {
            if raw.backends.http.generator_url.is_empty() {
                errors.push("backends.http.generator_url is required".to_string());
            }
            GeneratorSelection::Http {
                url: raw.backends.http.generator_url.clone(),
                model: raw.backends.http.model.clone(),
                vocabulary_file: raw.backends.http.vocabulary_file.as_ref().map(resolve),
            }
        }
        other => {
            errors.push(format!("unknown generator backend {other:?} (ngram, http)"));
            GeneratorSelection::Ngram {
                seed_corpus: PathBuf::new(),
            }
        }
    };

    // Capability mismatches are config errors, not run-time surprises.
    if let GeneratorSelection::Http {
        vocabulary_file, ..
    } = &generator
    {
        for method in &methods {
            if method.needs_full_distribution() {
                errors.push(format!(
                    "{method} needs full next-token distributions, which the HTTP generator \
                     does not expose"
                ));
            }
        }
        if methods.contains(&Method::DatgL) && vocabulary_file.is_none() {
            errors.push(
                "DATG-L over the HTTP generator requires backends.http.vocabulary_file".to_string(),
            );
        }
    }

    let classifier = match raw.backends.classifier.as_str() {
        "lexicon" => {
            let mut positive: BTreeSet<String> = raw
                .backends
                .lexicon
                .positive_terms
                .iter()
                .cloned()
                .collect();
            let mut negative: BTreeSet<String> = raw
                .backends
                .lexicon
                .negative_terms
                .iter()
                .cloned()
                .collect();
            for (file, target) in [
                (&raw.backends.lexicon.positive_file, &mut positive),
                (&raw.backends.lexicon.negative_file, &mut negative),
            ] {
                if let Some(path) = file {
                    let path = resolve(path);
                    match std::fs::read_to_string(&path) {
                        Ok(text) => target.extend(
                            text.lines()
                                .map(str::trim)
                                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                                .map(str::to_string),
                        ),
                        Err(e) => errors.push(format!("lexicon file {}: {e}", path.display())),
                    }
                }
            }
            if positive.is_empty() && negative.is_empty() {
                errors.push(
                    "lexicon classifier needs positive/negative terms (inline or files)"
                        .to_string(),
                );
            }
            let spec = LexiconClassifierSpec {
                positive_terms: positive,
                negative_terms: negative,
                smoothing: raw.backends.lexicon.smoothing,
            };
            errors.extend(spec.validation_errors());
            ClassifierSelection::Lexicon(spec)
        }
        "http" => {
            if raw.backends.http.classifier_url.is_empty() {
                errors.push("backends.http.classifier_url is required".to_string());
            }
            ClassifierSelection::Http {
                url: raw.backends.http.classifier_url.clone(),
            }
        }
        other => {
            errors.push(format!(
                "unknown classifier backend {other:?} (lexicon, http)"
            ));
            ClassifierSelection::Http { url: String::new() }
        }
    };

    let embedder = match raw.backends.embedder.as_str() {
        "hashed" => EmbedderSelection::Hashed {
            dimension: raw.backends.embedding.dimension,
        },
        "http" => {
            if raw.backends.http.embedder_url.is_empty() {
                errors.push("backends.http.embedder_url is required".to_string());
            }
            EmbedderSelection::Http {
                url: raw.backends.http.embedder_url.clone(),
                dimension: raw.backends.embedding.dimension,
            }
        }
        other => {
            errors.push(format!("unknown embedder backend {other:?} (hashed, http)"));
            EmbedderSelection::Hashed { dimension: 256 }
        }
    };
    if raw.backends.embedding.dimension == 0 {
        errors.push("embedding dimension must be >= 1".to_string());
    }

    let scorer = match raw.backends.scorer.as_str() {
        "generator" => {
            if matches!(generator, GeneratorSelection::Http { .. }) {
                errors.push(
                    "the HTTP generator cannot score sequences; set backends.scorer = \"ngram\""
                        .to_string(),
                );
            }
            ScorerSelection::Generator
        }
        "ngram" => ScorerSelection::Ngram {
            seed_corpus: seed_corpus.clone().unwrap_or_default(),
        },
        other => {
            errors.push(format!(
                "unknown scorer backend {other:?} (generator, ngram)"
            ));
            ScorerSelection::Generator
        }
    };

    // --- templates and baselines -------------------------------------------
    let templates = match &raw.baselines.task_templates {
        None => TaskTemplates::bundled(),
        Some(path) => {
            let path = resolve(path);
            match TaskTemplates::from_file(&path) {
                Ok(t) => t,
                Err(e) => {
                    errors.push(format!("task templates {}: {e}", path.display()));
                    TaskTemplates::bundled()
                }
            }
        }
    };
    if raw.baselines.fudge_top_k == 0 {
        errors.push("baselines.fudge_top_k must be >= 1".to_string());
    }

    // --- pipeline settings --------------------------------------------------
    if raw.pipeline.concurrency_limit == 0 {
        errors.push("pipeline.concurrency_limit must be >= 1".to_string());
    }
    if !(0.0..=1.0).contains(&raw.pipeline.success_threshold) {
        errors.push("pipeline.success_threshold must be in [0, 1]".to_string());
    }
    if raw.backends.http.max_in_flight == 0 {
        errors.push("backends.http.max_in_flight must be >= 1".to_string());
    }

    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }

    Ok(PipelineConfig {
        generator,
        classifier,
        embedder,
        scorer,
        http: HttpClientConfig {
            max_in_flight: raw.backends.http.max_in_flight,
            timeout_seconds: raw.backends.http.timeout_seconds,
        },
        generation: raw.generation,
        control,
        fudge_top_k: raw.baselines.fudge_top_k,
        fudge_alpha: raw.baselines.fudge_alpha,
        preadd_alpha: raw.baselines.preadd_alpha,
        templates,
        methods,
        output_dir: resolve(&raw.pipeline.output_dir),
        concurrency_limit: raw.pipeline.concurrency_limit,
        artifact_retention: raw.pipeline.artifact_retention,
        success_threshold: raw.pipeline.success_threshold,
        retry_budget: raw.pipeline.retry_budget,
        record_timings: raw.pipeline.record_timings,
    })
}

/// The instantiated backends for a run.
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub classifier: Arc<dyn AttributeClassifier>,
    pub embedder: Arc<dyn Embedder>,
    pub scorer: Arc<dyn Generator>,
    /// Word-to-id mapping for logit bias; absent when the generator exposes
    /// no vocabulary and no local table was configured.
    pub mapper: Option<Arc<dyn VocabularyMapper>>,
    /// Fan-out bound for corpus construction.
    pub generation_parallelism: usize,
}

impl PipelineConfig {
    pub fn build_backends(&self) -> Result<Backends> {
        let (generator, mapper, generation_parallelism): (
            Arc<dyn Generator>,
            Option<Arc<dyn VocabularyMapper>>,
            usize,
        ) = match &self.generator {
            GeneratorSelection::Ngram { seed_corpus } => {
                let model = Arc::new(NGramGenerator::from_corpus_file(seed_corpus)?);
                (model.clone(), Some(model), 1)
            }
            GeneratorSelection::Http {
                url,
                model,
                vocabulary_file,
            } => {
                let mut client = HttpGenerator::new(url.clone(), &self.http);
                if let Some(model) = model {
                    client = client.with_model(model.clone());
                }
                let mapper: Option<Arc<dyn VocabularyMapper>> = match vocabulary_file {
                    Some(path) => Some(Arc::new(FileVocabularyMapper::from_file(path)?)),
                    None => None,
                };
                (Arc::new(client), mapper, self.http.max_in_flight)
            }
        };

        let classifier: Arc<dyn AttributeClassifier> = match &self.classifier {
            ClassifierSelection::Lexicon(spec) => Arc::new(LexiconClassifier::new(spec.clone())?),
            ClassifierSelection::Http { url } => {
                Arc::new(HttpClassifier::new(url.clone(), &self.http))
            }
        };

        let embedder: Arc<dyn Embedder> = match &self.embedder {
            EmbedderSelection::Hashed { dimension } => Arc::new(HashedEmbedder::new(*dimension)),
            EmbedderSelection::Http { url, dimension } => Arc::new(
                HttpEmbedder::new(url.clone(), &self.http).with_expected_dimension(*dimension),
            ),
        };

        let scorer: Arc<dyn Generator> = match &self.scorer {
            ScorerSelection::Generator => generator.clone(),
            ScorerSelection::Ngram { seed_corpus } => {
                Arc::new(NGramGenerator::from_corpus_file(seed_corpus)?)
            }
        };

        Ok(Backends {
            generator,
            classifier,
            embedder,
            scorer,
            mapper,
            generation_parallelism,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_seed_corpus(dir: &Path) -> PathBuf {
        let path = dir.join("seed.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "the good dog plays\nthe bad dog bites").unwrap();
        path
    }

    fn minimal_config(dir: &Path) -> String {
        write_seed_corpus(dir);
        r#"
            [backends]
            seed_corpus = "seed.txt"

            [backends.lexicon]
            positive_terms = ["good"]
            negative_terms = ["bad"]
        "#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_reference_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config(&minimal_config(dir.path()), dir.path()).unwrap();
        assert_eq!(config.control.alpha, 4.0);
        assert_eq!(config.control.beta, 6.0);
        assert_eq!(config.control.corpus_size, 30);
        assert_eq!(config.generation.max_new_tokens, 32);
        assert_eq!(config.generation.top_k, 200);
        assert_eq!(config.generation.top_p, 0.9);
        assert_eq!(config.generation.temperature, 0.7);
        assert_eq!(config.fudge_top_k, 100);
        assert_eq!(config.fudge_alpha, 0.5);
        assert_eq!(config.preadd_alpha, 1.0);
        assert!(matches!(
            config.control.selection.mode,
            SelectionMode::TopK { k: 10 }
        ));
        assert!(!config.record_timings);
    }

    #[test]
    fn violations_are_collected_together() {
        let dir = tempfile::tempdir().unwrap();
        let raw = format!(
            "{}\n[generation]\ntemperature = 0.0\ntop_p = 0.0\n",
            minimal_config(dir.path())
        );
        match parse_config(&raw, dir.path()) {
            Err(Error::InvalidConfig(errors)) => {
                assert!(
                    errors.iter().any(|e| e.contains("temperature must be > 0")),
                    "{errors:?}"
                );
                assert!(errors.iter().any(|e| e.contains("top_p")), "{errors:?}");
            }
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn unknown_method_lists_valid_names() {
        let dir = tempfile::tempdir().unwrap();
        let raw = format!(
            "{}\n[pipeline]\nmethods = [\"DATG-X\"]\n",
            minimal_config(dir.path())
        );
        match parse_config(&raw, dir.path()) {
            Err(Error::InvalidConfig(errors)) => {
                let message = errors.join("; ");
                assert!(message.contains("DATG-X"));
                for method in Method::ALL {
                    assert!(
                        message.contains(method.as_str()),
                        "missing {method} in {message}"
                    );
                }
            }
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn one_sided_threshold_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let raw = format!(
            "{}\n[control.selection]\ntheta_p = 0.1\n",
            minimal_config(dir.path())
        );
        assert!(parse_config(&raw, dir.path()).is_err());
    }

    #[test]
    fn both_thresholds_switch_the_mode() {
        let dir = tempfile::tempdir().unwrap();
        let raw = format!(
            "{}\n[control.selection]\ntheta_p = 0.1\ntheta_n = 0.2\n",
            minimal_config(dir.path())
        );
        let config = parse_config(&raw, dir.path()).unwrap();
        assert!(matches!(
            config.control.selection.mode,
            SelectionMode::Threshold { theta_p, theta_n } if theta_p == 0.1 && theta_n == 0.2
        ));
    }

    #[test]
    fn http_generator_rejects_distribution_methods() {
        let dir = tempfile::tempdir().unwrap();
        let raw = r#"
            [backends]
            generator = "http"
            scorer = "ngram"
            seed_corpus = "seed.txt"

            [backends.http]
            generator_url = "http://127.0.0.1:9/v1/completions"

            [backends.lexicon]
            positive_terms = ["good"]
            negative_terms = ["bad"]

            [pipeline]
            methods = ["FUDGE", "PREADD", "DATG-L"]
        "#;
        write_seed_corpus(dir.path());
        match parse_config(raw, dir.path()) {
            Err(Error::InvalidConfig(errors)) => {
                let message = errors.join("; ");
                assert!(message.contains("FUDGE"));
                assert!(message.contains("PREADD"));
                assert!(message.contains("vocabulary_file"));
            }
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn http_generator_with_vocabulary_supports_datg_l() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("vocab.json"), r#"{"good": 1, "bad": 2}"#).unwrap();
        write_seed_corpus(dir.path());
        let raw = r#"
            [backends]
            generator = "http"
            scorer = "ngram"
            seed_corpus = "seed.txt"

            [backends.http]
            generator_url = "http://127.0.0.1:9/v1/completions"
            vocabulary_file = "vocab.json"

            [backends.lexicon]
            positive_terms = ["good"]
            negative_terms = ["bad"]

            [pipeline]
            methods = ["CONTINUATION", "DATG-L", "DATG-P"]
        "#;
        let config = parse_config(raw, dir.path()).unwrap();
        let backends = config.build_backends().unwrap();
        assert!(backends.mapper.is_some());
        assert!(!backends.generator.capabilities().supports_full_distribution);
    }

    #[test]
    fn missing_seed_corpus_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let raw = r#"
            [backends.lexicon]
            positive_terms = ["good"]
            negative_terms = ["bad"]
        "#;
        match parse_config(raw, dir.path()) {
            Err(Error::InvalidConfig(errors)) => {
                assert!(
                    errors.iter().any(|e| e.contains("seed_corpus")),
                    "{errors:?}"
                );
            }
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let raw = format!(
            "{}\n[pipeline]\nmystery_knob = 3\n",
            minimal_config(dir.path())
        );
        assert!(parse_config(&raw, dir.path()).is_err());
    }

    #[test]
    fn built_backends_are_wired_from_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config(&minimal_config(dir.path()), dir.path()).unwrap();
        let backends = config.build_backends().unwrap();
        assert!(backends.generator.capabilities().supports_full_distribution);
        assert!(backends.mapper.is_some());
        let score = backends.classifier.classify("good good bad").unwrap();
        assert!((score - 0.6).abs() < 1e-12);
    }
}
