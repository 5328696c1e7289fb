//! Batch CLI for the attribute-graph controlled-generation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use datg_core::pipeline::config::{validate_config, Method};
use datg_core::pipeline::dataset::{load_dataset, sample_jsonl, SampleMode};
use datg_core::pipeline::{run, run_graph_stage};

#[derive(Parser)]
#[command(
    name = "datg",
    version,
    about = "Attribute-graph controlled text generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods over a prompt dataset.
    Run {
        /// Pipeline config file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Dataset JSONL: one {"id", "prompt", "task"} object per line.
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated method names overriding the config.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Output directory overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a prompt sample from a source JSONL file.
    Sample {
        /// Source JSONL file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of records to draw.
        #[arg(long)]
        n: usize,
        /// random: seeded shuffle; top: largest --field values first.
        #[arg(long, value_enum)]
        mode: SampleModeArg,
        /// Numeric field for --mode top.
        #[arg(long)]
        field: Option<String>,
        /// Seed for --mode random.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and rank attribute graphs from an existing scored corpus.
    Graph {
        /// Corpus JSONL: one {"idx", "text", "score"} object per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for the DOT exports and key-token JSON.
        #[arg(long)]
        out: PathBuf,
        /// Key tokens to keep per graph.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Stopword list overriding the built-in English list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Check a config file and report every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleModeArg {
    Random,
    Top,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("datg: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            dataset,
            methods,
            out,
        } => {
            let mut pipeline_config =
                validate_config(&config).with_context(|| format!("config {}", config.display()))?;
            if let Some(names) = methods {
                let mut parsed = Vec::new();
                for name in names {
                    let method = Method::parse(name.trim())?;
                    if !parsed.contains(&method) {
                        parsed.push(method);
                    }
                }
                if parsed.is_empty() {
                    anyhow::bail!("--methods must name at least one method");
                }
                pipeline_config.methods = parsed;
            }
            if let Some(out) = out {
                pipeline_config.output_dir = out;
            }
            let records =
                load_dataset(&dataset).with_context(|| format!("dataset {}", dataset.display()))?;
            let outcome = run(&pipeline_config, &records)?;
            eprintln!(
                "datg: {} records, {} skipped, {} resumed -> {}",
                outcome.records_written,
                outcome.skipped.len(),
                outcome.resumed_units,
                pipeline_config.output_dir.display()
            );
            for skip in &outcome.skipped {
                eprintln!(
                    "datg: skipped {} / {}: {}",
                    skip.prompt_id, skip.method, skip.reason
                );
            }
            Ok(ExitCode::from(outcome.exit_code as u8))
        }
        Command::Sample {
            input,
            n,
            mode,
            field,
            seed,
            out,
        } => {
            let mode = match mode {
                SampleModeArg::Random => SampleMode::Random { seed },
                SampleModeArg::Top => SampleMode::TopByField {
                    field: field.ok_or_else(|| anyhow::anyhow!("--mode top requires --field"))?,
                },
            };
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let rows = sample_jsonl(&text, n, &mode)?;
            let mut output = String::new();
            for row in rows {
                output.push_str(&serde_json::to_string(&row)?);
                output.push('\n');
            }
            match out {
                Some(path) => std::fs::write(&path, output)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{output}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Graph {
            corpus,
            out,
            top_k,
            stopwords,
        } => {
            let mut selection = datg_core::graph::SelectionConfig {
                mode: datg_core::graph::SelectionMode::TopK { k: top_k },
                ..Default::default()
            };
            if let Some(path) = stopwords {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("stopwords {}", path.display()))?;
                selection.stopwords = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_string)
                    .collect();
            }
            let written = run_graph_stage(&corpus, &out, &selection)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => match validate_config(&config) {
            Ok(parsed) => {
                println!(
                    "ok: {} methods, output dir {}",
                    parsed.methods.len(),
                    parsed.output_dir.display()
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(err) => {
                eprintln!("invalid config {}:", config.display());
                if let datg_core::Error::InvalidConfig(violations) = &err {
                    for violation in violations {
                        eprintln!("  - {violation}");
                    }
                } else {
                    eprintln!("  - {err}");
                }
                Ok(ExitCode::from(1))
            }
        },
    }
}
