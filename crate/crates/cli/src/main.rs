//! `mathsift`: turn noisy web-crawled math Q/A corpora into clean SFT
//! datasets by pairing them with high-quality seed records and rewriting
//! them through a format-converter model.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use commands::{Ctx, PipelineArgs, ReportArgs, RewriteArgs};
use config::{ensure_output_dir, require_path, resolve_output_dir, PipelineConfig};
use mathsift_core::corpus::Source;
use mathsift_core::degrader::DegradationSpec;
use mathsift_core::matcher::{AnswerMatchMode, DedupMode};
use mathsift_core::sftgen::TrainLayout;

#[derive(Parser)]
#[command(
    name = "mathsift",
    version,
    about = "Convert noisy web-crawled math Q/A corpora into clean SFT datasets",
    propagate_version = true
)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Fix every random choice in the run.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for the parallel stages.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Where stage outputs are written (default: ./out).
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Validate configuration and inputs without side effects.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Seed,
    Crawl,
    Cleaned,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Source {
        match s {
            SourceArg::Seed => Source::Seed,
            SourceArg::Crawl => Source::Crawl,
            SourceArg::Cleaned => Source::Cleaned,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Subsequence,
    Substring,
}

#[derive(Clone, Copy, ValueEnum)]
enum DedupArg {
    Off,
    OnePerCrawl,
    OnePerSeed,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Flat,
    Chat,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and write its canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        source: SourceArg,
    },
    /// Inject synthetic formatting errors into a clean corpus.
    Degrade {
        #[arg(long)]
        input: Option<PathBuf>,
        /// JSON file with the degradation settings.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Per-class application rate override.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Pair seed records with crawled records.
    Match {
        #[arg(long)]
        seed_corpus: Option<PathBuf>,
        #[arg(long)]
        crawl_corpus: Option<PathBuf>,
        #[arg(long)]
        min_answer_len: Option<usize>,
        #[arg(long, value_enum)]
        answer_match_mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        dedup: Option<DedupArg>,
    },
    /// Apply the rule-based cleaning baseline.
    RuleClean {
        #[arg(long)]
        input: Option<PathBuf>,
        /// JSON file overriding the solution-marker registry.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Render rewriter training examples from matched pairs.
    EmitPairs {
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        seed_corpus: Option<PathBuf>,
        #[arg(long)]
        crawl_corpus: Option<PathBuf>,
        /// Synthetic syntax-error examples to add (default 2% of pairs).
        #[arg(long)]
        aug_count: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<LayoutArg>,
    },
    /// Drive the rewriter model over a crawl corpus, checkpointed.
    Rewrite {
        #[arg(long)]
        crawl_corpus: Option<PathBuf>,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Requests per minute.
        #[arg(long)]
        rpm: Option<u32>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long)]
        max_retries: Option<u32>,
        #[arg(long)]
        backoff_ms: Option<u64>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Environment variable holding the bearer token.
        #[arg(long)]
        auth_env: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after this many newly processed records.
        #[arg(long)]
        max_records: Option<usize>,
    },
    /// Build the cleaned corpus from validated rewriter outputs.
    Assemble {
        #[arg(long)]
        outputs: Option<PathBuf>,
    },
    /// Grade predictions against gold answers.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Relative tolerance for truncated decimals.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Pair-rate arithmetic over explicit counts or stage files.
    Report {
        #[arg(long)]
        seed_total: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        pairs_file: Option<PathBuf>,
        #[arg(long)]
        seed_corpus: Option<PathBuf>,
    },
    /// match -> emit-pairs -> rewrite -> assemble in one run.
    Pipeline {
        #[arg(long)]
        seed_corpus: Option<PathBuf>,
        #[arg(long)]
        crawl_corpus: Option<PathBuf>,
        #[arg(long)]
        min_answer_len: Option<usize>,
        #[arg(long, value_enum)]
        answer_match_mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        dedup: Option<DedupArg>,
        #[arg(long)]
        aug_count: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<LayoutArg>,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        rpm: Option<u32>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long)]
        max_retries: Option<u32>,
        #[arg(long)]
        backoff_ms: Option<u64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        auth_env: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Best effort; a second initialization in the same process is fine
        // to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = PipelineConfig::load_opt(cli.config.as_deref())?;
    let output_dir = resolve_output_dir(cli.output_dir.clone(), &file_config);
    let ctx = Ctx { output_dir: output_dir.clone(), rng_seed: cli.seed, dry_run: cli.dry_run };
    if !cli.dry_run {
        ensure_output_dir(&output_dir)?;
    }

    match cli.command {
        Command::Ingest { input, source } => {
            if !input.exists() {
                anyhow::bail!("input: path `{}` does not exist", input.display());
            }
            commands::cmd_ingest(&ctx, &input, source.into())
        }
        Command::Degrade { input, spec, rate } => {
            let input = require_path("input", input, file_config.seed_corpus.as_ref())?;
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("spec: cannot read `{}`", path.display()))?;
                    Some(serde_json::from_str::<DegradationSpec>(&text).with_context(|| {
                        format!("spec: `{}` is not a valid degradation spec", path.display())
                    })?)
                }
                None => file_config.degradation.clone(),
            };
            commands::cmd_degrade(&ctx, &input, spec, rate)
        }
        Command::Match { seed_corpus, crawl_corpus, min_answer_len, answer_match_mode, dedup } => {
            let seed = require_path("seed_corpus", seed_corpus, file_config.seed_corpus.as_ref())?;
            let crawl = require_path("crawl_corpus", crawl_corpus, file_config.crawl_corpus.as_ref())?;
            let cfg = commands::merged_match_config(
                file_config.match_config.clone(),
                min_answer_len,
                answer_match_mode.map(mode_arg),
                dedup.map(dedup_arg),
            );
            commands::cmd_match(&ctx, &seed, &crawl, &cfg)
        }
        Command::RuleClean { input, rules } => {
            let input = require_path("input", input, file_config.crawl_corpus.as_ref())?;
            commands::cmd_rule_clean(&ctx, &input, rules.as_deref())
        }
        Command::EmitPairs { pairs, seed_corpus, crawl_corpus, aug_count, format } => {
            let pairs = require_path("pairs", pairs, None)?;
            let seed = require_path("seed_corpus", seed_corpus, file_config.seed_corpus.as_ref())?;
            let crawl = require_path("crawl_corpus", crawl_corpus, file_config.crawl_corpus.as_ref())?;
            let mut aug = file_config.augment.clone().unwrap_or_default();
            if aug_count.is_some() {
                aug.count = aug_count;
            }
            let layout = format
                .map(layout_arg)
                .or(file_config.train_layout)
                .unwrap_or(TrainLayout::Flat);
            commands::cmd_emit_pairs(&ctx, &pairs, &seed, &crawl, aug, layout).map(|_| ())
        }
        Command::Rewrite {
            crawl_corpus,
            base_url,
            model,
            concurrency,
            rpm,
            timeout_secs,
            max_retries,
            backoff_ms,
            temperature,
            auth_env,
            checkpoint,
            max_records,
        } => {
            let crawl = require_path("crawl_corpus", crawl_corpus, file_config.crawl_corpus.as_ref())?;
            let endpoint = commands::merged_endpoint(
                file_config.endpoint.clone(),
                base_url,
                model,
                concurrency,
                rpm,
                timeout_secs,
                max_retries,
                backoff_ms,
                temperature,
                auth_env,
            )?;
            commands::cmd_rewrite(&ctx, &crawl, &endpoint, &RewriteArgs { checkpoint, max_records })
                .map(|_| ())
        }
        Command::Assemble { outputs } => {
            let outputs = require_path("outputs", outputs, None)?;
            commands::cmd_assemble(&ctx, &outputs)
        }
        Command::Evaluate { predictions, gold, tol } => {
            let predictions = require_path("predictions", Some(predictions), None)?;
            let gold = require_path("gold", Some(gold), None)?;
            commands::cmd_evaluate(&ctx, &predictions, &gold, tol)
        }
        Command::Report { seed_total, pairs, pairs_file, seed_corpus } => {
            commands::cmd_report(&ctx, &ReportArgs { seed_total, pairs, pairs_file, seed_corpus })
        }
        Command::Pipeline {
            seed_corpus,
            crawl_corpus,
            min_answer_len,
            answer_match_mode,
            dedup,
            aug_count,
            format,
            base_url,
            model,
            concurrency,
            rpm,
            timeout_secs,
            max_retries,
            backoff_ms,
            temperature,
            auth_env,
            checkpoint,
        } => {
            let seed = require_path("seed_corpus", seed_corpus, file_config.seed_corpus.as_ref())?;
            let crawl = require_path("crawl_corpus", crawl_corpus, file_config.crawl_corpus.as_ref())?;
            let match_config = commands::merged_match_config(
                file_config.match_config.clone(),
                min_answer_len,
                answer_match_mode.map(mode_arg),
                dedup.map(dedup_arg),
            );
            let endpoint = commands::merged_endpoint(
                file_config.endpoint.clone(),
                base_url,
                model,
                concurrency,
                rpm,
                timeout_secs,
                max_retries,
                backoff_ms,
                temperature,
                auth_env,
            )?;
            let mut augment = file_config.augment.clone().unwrap_or_default();
            if aug_count.is_some() {
                augment.count = aug_count;
            }
            let layout = format
                .map(layout_arg)
                .or(file_config.train_layout)
                .unwrap_or(TrainLayout::Flat);
            commands::cmd_pipeline(
                &ctx,
                &PipelineArgs {
                    seed_corpus: seed,
                    crawl_corpus: crawl,
                    match_config,
                    endpoint,
                    augment,
                    layout,
                    checkpoint,
                },
            )
        }
    }
}

fn mode_arg(m: ModeArg) -> AnswerMatchMode {
    match m {
        ModeArg::Subsequence => AnswerMatchMode::Subsequence,
        ModeArg::Substring => AnswerMatchMode::Substring,
    }
}

fn dedup_arg(d: DedupArg) -> DedupMode {
    match d {
        DedupArg::Off => DedupMode::Off,
        DedupArg::OnePerCrawl => DedupMode::OnePerCrawl,
        DedupArg::OnePerSeed => DedupMode::OnePerSeed,
    }
}

fn layout_arg(l: LayoutArg) -> TrainLayout {
    match l {
        LayoutArg::Flat => TrainLayout::Flat,
        LayoutArg::Chat => TrainLayout::Chat,
    }
}
