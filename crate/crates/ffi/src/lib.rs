//! C ABI over the controlled-generation pipeline.
//!
//! The surface is handle-based: load a pipeline from a config file, then run
//! individual prompts through any method, extract key tokens, or build the
//! prefix prompt. Every call returns a status code; on failure the
//! thread-local message behind [`datg_last_error`] explains what happened.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`datg_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, c_double};

use datg_core::baselines::{self, BaselineSpec};
use datg_core::control;
use datg_core::corpus::{build_corpus, score_corpus};
use datg_core::errors::Error;
use datg_core::graph::{build_attribute_graphs, rank_graph, select_key_tokens, KeyTokenSet};
use datg_core::pipeline::config::{validate_config, Backends, Method, PipelineConfig};
use datg_core::task::Task;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatgStatus {
    DatgOk = 0,
    /// A pointer argument was null or a string was not valid UTF-8.
    DatgInvalidArgument = 1,
    /// The config file failed to parse or validate.
    DatgConfigError = 2,
    /// A backend call failed (generation, classification, ranking).
    DatgBackendError = 3,
    /// The requested method or task name is unknown.
    DatgUnknownName = 4,
    /// A panic was caught at the boundary; state may be inconsistent.
    DatgInternalError = 5,
}

/// Opaque pipeline handle: validated config plus instantiated backends.
pub struct DatgPipeline {
    config: PipelineConfig,
    backends: Backends,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(error: &Error) -> DatgStatus {
    match error {
        Error::InvalidConfig(_) => DatgStatus::DatgConfigError,
        Error::InvalidInput(_) => DatgStatus::DatgInvalidArgument,
        _ => DatgStatus::DatgBackendError,
    }
}

/// Last error message for the calling thread. The pointer stays valid until
/// the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn datg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string; never free it.
#[no_mangle]
pub extern "C" fn datg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn required_str<'a>(pointer: *const c_char, name: &str) -> Result<&'a str, DatgStatus> {
    if pointer.is_null() {
        set_last_error(&format!("{name} must not be null"));
        return Err(DatgStatus::DatgInvalidArgument);
    }
    CStr::from_ptr(pointer).to_str().map_err(|_| {
        set_last_error(&format!("{name} must be valid UTF-8"));
        DatgStatus::DatgInvalidArgument
    })
}

fn return_string(out: *mut *mut c_char, value: String) -> DatgStatus {
    let sanitized = value.replace('\0', " ");
    match CString::new(sanitized) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            DatgStatus::DatgOk
        }
        Err(_) => {
            set_last_error("result could not be represented as a C string");
            DatgStatus::DatgInternalError
        }
    }
}

fn guarded<F: FnOnce() -> DatgStatus>(body: F) -> DatgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            DatgStatus::DatgInternalError
        }
    }
}

/// Load and validate a pipeline from a TOML config file, instantiating the
/// configured backends. On success `*out` owns the handle; release it with
/// [`datg_pipeline_free`].
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn datg_pipeline_new(
    config_path: *const c_char,
    out: *mut *mut DatgPipeline,
) -> DatgStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("out must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let path = match required_str(config_path, "config_path") {
            Ok(path) => path,
            Err(status) => return status,
        };
        let config = match validate_config(Path::new(path)) {
            Ok(config) => config,
            Err(e) => {
                set_last_error(&e.to_string());
                return DatgStatus::DatgConfigError;
            }
        };
        let backends = match config.build_backends() {
            Ok(backends) => backends,
            Err(e) => {
                set_last_error(&e.to_string());
                return status_for(&e);
            }
        };
        *out = Box::into_raw(Box::new(DatgPipeline { config, backends }));
        DatgStatus::DatgOk
    })
}

/// Release a pipeline handle. A null pointer is a no-op.
///
/// # Safety
/// `pipeline` must have come from [`datg_pipeline_new`] and not been freed.
#[no_mangle]
pub unsafe extern "C" fn datg_pipeline_free(pipeline: *mut DatgPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Release a string returned through an out-parameter. Null is a no-op.
///
/// # Safety
/// `string` must have been returned by this library and not been freed.
#[no_mangle]
pub unsafe extern "C" fn datg_string_free(string: *mut c_char) {
    if !string.is_null() {
        drop(CString::from_raw(string));
    }
}

fn parse_task(name: &str) -> Result<Task, DatgStatus> {
    Task::ALL
        .iter()
        .find(|t| t.as_str() == name)
        .copied()
        .ok_or_else(|| {
            set_last_error(&format!(
                "unknown task {name:?}; valid tasks: {}",
                Task::ALL.map(|t| t.as_str()).join(", ")
            ));
            DatgStatus::DatgUnknownName
        })
}

fn datg_stage_keys(pipeline: &DatgPipeline, prompt: &str) -> Result<KeyTokenSet, Error> {
    let config = &pipeline.config;
    let backends = &pipeline.backends;
    let build = build_corpus(
        prompt,
        config.control.corpus_size,
        &config.generation,
        backends.generator.as_ref(),
        config.retry_budget,
        backends.generation_parallelism,
    )?;
    let corpus = score_corpus(build.sentences, backends.classifier.as_ref(), prompt)?;
    let (positive, negative) = build_attribute_graphs(&corpus);
    let ranks_pos = rank_graph(&positive, &config.control.selection)?;
    let ranks_neg = rank_graph(&negative, &config.control.selection)?;
    select_key_tokens(&ranks_pos, &ranks_neg, &config.control.selection)
}

/// Run stages 1-3 for a prompt and return the selected key tokens as JSON:
/// `{"positive": [[token, rank], ...], "negative": [...]}`.
///
/// # Safety
/// All pointers must be valid; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn datg_key_tokens_json(
    pipeline: *const DatgPipeline,
    prompt: *const c_char,
    out_json: *mut *mut c_char,
) -> DatgStatus {
    guarded(|| {
        if pipeline.is_null() || out_json.is_null() {
            set_last_error("pipeline and out_json must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let prompt = match required_str(prompt, "prompt") {
            Ok(prompt) => prompt,
            Err(status) => return status,
        };
        match datg_stage_keys(&*pipeline, prompt) {
            Ok(keys) => return_string(
                out_json,
                serde_json::to_string(&keys).expect("key tokens serialize"),
            ),
            Err(e) => {
                set_last_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Build the prefix prompt for a prompt (stages 1-3 plus the template).
///
/// # Safety
/// All pointers must be valid; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn datg_prefix_prompt(
    pipeline: *const DatgPipeline,
    prompt: *const c_char,
    out_text: *mut *mut c_char,
) -> DatgStatus {
    guarded(|| {
        if pipeline.is_null() || out_text.is_null() {
            set_last_error("pipeline and out_text must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let prompt = match required_str(prompt, "prompt") {
            Ok(prompt) => prompt,
            Err(status) => return status,
        };
        let handle = &*pipeline;
        match datg_stage_keys(handle, prompt) {
            Ok(keys) => return_string(
                out_text,
                control::build_prefix_prompt(&keys, prompt, handle.config.control.prefix_max_words),
            ),
            Err(e) => {
                set_last_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Generate one completion for `prompt` with `method` ("CONTINUATION",
/// "INJECTION", "FUDGE", "PREADD", "DATG-L", "DATG-P") under `task`
/// ("toxicity_mitigation", "sentiment_to_positive", "sentiment_to_negative").
///
/// # Safety
/// All pointers must be valid; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn datg_generate(
    pipeline: *const DatgPipeline,
    prompt: *const c_char,
    task: *const c_char,
    method: *const c_char,
    out_text: *mut *mut c_char,
) -> DatgStatus {
    guarded(|| {
        if pipeline.is_null() || out_text.is_null() {
            set_last_error("pipeline and out_text must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let prompt = match required_str(prompt, "prompt") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let task = match required_str(task, "task").map(parse_task) {
            Ok(Ok(task)) => task,
            Ok(Err(status)) => return status,
            Err(status) => return status,
        };
        let method = match required_str(method, "method") {
            Ok(name) => match Method::parse(name) {
                Ok(method) => method,
                Err(e) => {
                    set_last_error(&e.to_string());
                    return DatgStatus::DatgUnknownName;
                }
            },
            Err(status) => return status,
        };

        let handle = &*pipeline;
        let config = &handle.config;
        let backends = &handle.backends;
        let prompts = config.templates.for_task(task);
        let spec = BaselineSpec {
            injection_prompt: Some(prompts.injection.clone()),
            fudge_top_k: config.fudge_top_k,
            fudge_alpha: config.fudge_alpha,
            preadd_alpha: config.preadd_alpha,
            preadd_prefix: prompts.preadd_prefix.clone(),
        };

        let completion = match method {
            Method::Continuation => {
                baselines::continuation(prompt, &config.generation, backends.generator.as_ref())
            }
            Method::Injection => baselines::injection(
                prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
            ),
            Method::Fudge => baselines::fudge_generate(
                prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
                backends.classifier.as_ref(),
            ),
            Method::Preadd => baselines::preadd_generate(
                prompt,
                &spec,
                &config.generation,
                backends.generator.as_ref(),
            ),
            Method::DatgL => datg_stage_keys(handle, prompt).and_then(|keys| {
                let mapper = backends.mapper.as_ref().ok_or(Error::CapabilityMissing {
                    capability: "vocabulary mapping",
                })?;
                control::regenerate_logits_boost(
                    prompt,
                    &keys,
                    &config.control,
                    &config.generation,
                    backends.generator.as_ref(),
                    mapper.as_ref(),
                )
                .map(|(completion, _)| completion)
            }),
            Method::DatgP => datg_stage_keys(handle, prompt).and_then(|keys| {
                control::regenerate_prefix(
                    prompt,
                    &keys,
                    &config.control,
                    &config.generation,
                    backends.generator.as_ref(),
                )
                .map(|(completion, _)| completion)
            }),
        };

        match completion {
            Ok(text) => return_string(out_text, text),
            Err(e) => {
                set_last_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Score a text with the pipeline's attribute classifier.
///
/// # Safety
/// All pointers must be valid; `text` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn datg_classify(
    pipeline: *const DatgPipeline,
    text: *const c_char,
    out_score: *mut c_double,
) -> DatgStatus {
    guarded(|| {
        if pipeline.is_null() || out_score.is_null() {
            set_last_error("pipeline and out_score must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let text = match required_str(text, "text") {
            Ok(text) => text,
            Err(status) => return status,
        };
        match (*pipeline).backends.classifier.classify(text) {
            Ok(score) => {
                *out_score = score;
                DatgStatus::DatgOk
            }
            Err(e) => {
                set_last_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Mean negative log-likelihood per token of `completion` given `prompt`
/// under the pipeline's scorer; `exp` of it is the conditional perplexity.
///
/// # Safety
/// All pointers must be valid; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn datg_score_sequence(
    pipeline: *const DatgPipeline,
    prompt: *const c_char,
    completion: *const c_char,
    out_nll: *mut c_double,
) -> DatgStatus {
    guarded(|| {
        if pipeline.is_null() || out_nll.is_null() {
            set_last_error("pipeline and out_nll must not be null");
            return DatgStatus::DatgInvalidArgument;
        }
        let prompt = match required_str(prompt, "prompt") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let completion = match required_str(completion, "completion") {
            Ok(c) => c,
            Err(status) => return status,
        };
        match (*pipeline)
            .backends
            .scorer
            .score_sequence(prompt, completion)
        {
            Ok(nll) => {
                *out_nll = nll;
                DatgStatus::DatgOk
            }
            Err(e) => {
                set_last_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}
