//! Subcommand implementations. Every stage reads files, writes files with
//! stable names under the output directory, and prints a short summary;
//! `pipeline` is the sequential composition of match, emit-pairs, rewrite,
//! and assemble.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mathsift_client::client::{run_fingerprint, status_key};
use mathsift_client::{assemble_cleaned, rewrite_corpus, EndpointConfig};
use mathsift_core::corpus::{self, Corpus, IngestReport, Source};
use mathsift_core::degrader::{degrade, DegradationSpec};
use mathsift_core::evaluator::{grade_dataset, read_predictions, EvalConfig, GradeReport};
use mathsift_core::matcher::{match_pairs, MatchConfig, MatchPair, MatchReason, PairSet};
use mathsift_core::report::{match_report, pair_rate_percent, RunReport};
use mathsift_core::rulecleaner::{clean, RuleRegistry};
use mathsift_core::sftgen::{build_training_set, extract_output, write_training_set, AugmentConfig, TrainLayout};

pub struct Ctx {
    pub output_dir: PathBuf,
    pub rng_seed: Option<u64>,
    pub dry_run: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn ingest_reporting(path: &Path, source: Source) -> Result<(Corpus, IngestReport)> {
    let (corpus, report) = corpus::ingest(path, source)
        .with_context(|| format!("ingesting `{}`", path.display()))?;
    for diag in &report.diagnostics {
        eprintln!("skipped: {diag}");
    }
    Ok((corpus, report))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing `{}`", path.display()))?;
    Ok(())
}

pub fn cmd_ingest(ctx: &Ctx, input: &Path, source: Source) -> Result<()> {
    if ctx.dry_run {
        println!("dry run ok: would ingest `{}` as {source}", input.display());
        return Ok(());
    }
    let (corpus, report) = ingest_reporting(input, source)?;
    let out = ctx.path(&format!("ingested_{source}.jsonl"));
    corpus::write_jsonl_file(&corpus, &out)?;
    println!(
        "ingested {} records ({} skipped) -> {}",
        report.ingested,
        report.skipped,
        out.display()
    );
    Ok(())
}

pub fn cmd_degrade(ctx: &Ctx, input: &Path, spec: Option<DegradationSpec>, rate: Option<f64>) -> Result<()> {
    let mut spec = spec.unwrap_or_else(|| DegradationSpec::all_classes(rate.unwrap_or(0.3), 0));
    if let Some(r) = rate {
        for v in spec.rates.values_mut() {
            *v = r;
        }
    }
    if let Some(seed) = ctx.rng_seed {
        spec.rng_seed = seed;
    }
    if ctx.dry_run {
        spec.validate().map_err(|e| anyhow::anyhow!("degradation: {e}"))?;
        println!("dry run ok: would degrade `{}`", input.display());
        return Ok(());
    }
    let (seed_corpus, _) = ingest_reporting(input, Source::Seed)?;
    let outcome = degrade(&seed_corpus, &spec).map_err(|e| anyhow::anyhow!("degrade: {e}"))?;

    let corpus_path = ctx.path("degraded.jsonl");
    corpus::write_jsonl_file(&outcome.corpus, &corpus_path)?;

    let manifest_path = ctx.path("degradation_manifest.jsonl");
    let mut f = std::fs::File::create(&manifest_path)?;
    for entry in &outcome.manifest.entries {
        serde_json::to_writer(&mut f, entry)?;
        f.write_all(b"\n")?;
    }
    println!(
        "degraded {} records ({} touched, {} edits) -> {}",
        outcome.corpus.len(),
        outcome.stats.records_touched,
        outcome.manifest.entries.len(),
        corpus_path.display()
    );
    for (class, n) in &outcome.stats.skipped_no_site {
        println!("  {class:?}: skipped on {n} fields with no applicable site");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PairLine {
    seed_id: String,
    crawl_id: String,
    reason: MatchReason,
}

pub fn write_pairs_file(path: &Path, set: &PairSet) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("writing `{}`", path.display()))?;
    for p in &set.pairs {
        let line = PairLine {
            seed_id: p.seed_id.clone(),
            crawl_id: p.crawl_id.clone(),
            reason: p.reason,
        };
        serde_json::to_writer(&mut f, &line)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs_file(path: &Path, seed_total: usize, crawl_total: usize) -> Result<PairSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading `{}`", path.display()))?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PairLine = serde_json::from_str(line).with_context(|| format!("bad pair line in `{}`", path.display()))?;
        pairs.push(MatchPair {
            seed_id: p.seed_id,
            crawl_id: p.crawl_id,
            reason: p.reason,
            seed_norm_len: 0,
            crawl_norm_len: 0,
        });
    }
    Ok(PairSet { pairs, seed_total, crawl_total })
}

pub fn cmd_match(ctx: &Ctx, seed_path: &Path, crawl_path: &Path, config: &MatchConfig) -> Result<()> {
    if ctx.dry_run {
        println!("dry run ok: would match `{}` against `{}`", seed_path.display(), crawl_path.display());
        return Ok(());
    }
    let (seed, _) = ingest_reporting(seed_path, Source::Seed)?;
    let (crawl, _) = ingest_reporting(crawl_path, Source::Crawl)?;
    let (set, stats) = match_pairs(&seed, &crawl, config);
    let report = match_report(&set, &stats);

    write_pairs_file(&ctx.path("pairs.jsonl"), &set)?;
    write_json(&ctx.path("match_report.json"), &report)?;
    println!(
        "matched {} pairs from {} seeds x {} crawled (pair rate {:.1}%)",
        report.pairs, report.seed_total, report.crawl_total, report.pair_rate_percent
    );
    Ok(())
}

pub fn cmd_rule_clean(ctx: &Ctx, input: &Path, rules: Option<&Path>) -> Result<()> {
    let registry = match rules {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("rules: cannot read `{}`", path.display()))?;
            serde_json::from_str::<RuleRegistry>(&text)
                .with_context(|| format!("rules: `{}` is not a valid registry", path.display()))?
        }
        None => RuleRegistry::default(),
    };
    if ctx.dry_run {
        println!("dry run ok: would rule-clean `{}`", input.display());
        return Ok(());
    }
    let (crawl, _) = ingest_reporting(input, Source::Crawl)?;

    let mut cleaned_records = Vec::with_capacity(crawl.len());
    let mut changesets = Vec::with_capacity(crawl.len());
    let mut touched = 0usize;
    for rec in crawl.iter() {
        let (cleaned, changes) = clean(rec, &registry);
        if !changes.is_empty() {
            touched += 1;
        }
        cleaned_records.push(cleaned);
        changesets.push(changes);
    }
    let cleaned = Corpus::from_records(cleaned_records, Source::Cleaned, "rule-clean")
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let corpus_path = ctx.path("rule_cleaned.jsonl");
    corpus::write_jsonl_file(&cleaned, &corpus_path)?;
    let cs_path = ctx.path("changesets.jsonl");
    let mut f = std::fs::File::create(&cs_path)?;
    for cs in &changesets {
        serde_json::to_writer(&mut f, cs)?;
        f.write_all(b"\n")?;
    }
    println!(
        "rule-cleaned {} records ({} changed) -> {}",
        cleaned.len(),
        touched,
        corpus_path.display()
    );
    Ok(())
}

pub fn cmd_emit_pairs(
    ctx: &Ctx,
    pairs_path: &Path,
    seed_path: &Path,
    crawl_path: &Path,
    aug: AugmentConfig,
    layout: TrainLayout,
) -> Result<usize> {
    if ctx.dry_run {
        println!("dry run ok: would emit training pairs from `{}`", pairs_path.display());
        return Ok(0);
    }
    let (seed, _) = ingest_reporting(seed_path, Source::Seed)?;
    let (crawl, _) = ingest_reporting(crawl_path, Source::Crawl)?;
    let pairs = read_pairs_file(pairs_path, seed.len(), crawl.len())?;
    let mut aug = aug;
    if let Some(s) = ctx.rng_seed {
        aug.rng_seed = s;
    }
    let examples = build_training_set(&pairs, &seed, &crawl, &aug)
        .map_err(|e| anyhow::anyhow!("emit-pairs: {e}"))?;

    let out = ctx.path("train.jsonl");
    let mut f = std::fs::File::create(&out)?;
    write_training_set(&examples, layout, &mut f)?;
    println!("wrote {} training examples -> {}", examples.len(), out.display());
    Ok(examples.len())
}

#[derive(Serialize, Deserialize)]
struct OutputLine {
    crawl_id: String,
    status: String,
    raw: String,
}

pub fn write_outputs_file(path: &Path, outputs: &[mathsift_core::sftgen::RewriteOutput]) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("writing `{}`", path.display()))?;
    for o in outputs {
        let line = OutputLine {
            crawl_id: o.crawl_id.clone(),
            status: status_key(o.status).to_string(),
            raw: o.raw.clone(),
        };
        serde_json::to_writer(&mut f, &line)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_outputs_file(path: &Path) -> Result<Vec<mathsift_core::sftgen::RewriteOutput>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading `{}`", path.display()))?;
    let mut outputs = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let l: OutputLine = serde_json::from_str(line)
            .with_context(|| format!("bad output line in `{}`", path.display()))?;
        // Status is re-derived from the raw text; the stored one is a hint.
        outputs.push(extract_output(l.crawl_id, &l.raw));
    }
    Ok(outputs)
}

pub struct RewriteArgs {
    pub checkpoint: Option<PathBuf>,
    pub max_records: Option<usize>,
}

pub fn cmd_rewrite(
    ctx: &Ctx,
    crawl_path: &Path,
    endpoint: &EndpointConfig,
    args: &RewriteArgs,
) -> Result<BTreeMap<String, usize>> {
    if ctx.dry_run {
        endpoint.validate().map_err(|e| anyhow::anyhow!("endpoint: {e}"))?;
        println!("dry run ok: would rewrite `{}` via {}", crawl_path.display(), endpoint.base_url);
        return Ok(BTreeMap::new());
    }
    let (crawl, _) = ingest_reporting(crawl_path, Source::Crawl)?;
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| ctx.path("rewrite_checkpoint.jsonl"));
    let (outputs, report) = rewrite_corpus(&crawl, endpoint, &checkpoint, args.max_records)
        .map_err(|e| anyhow::anyhow!("rewrite: {e}"))?;

    write_outputs_file(&ctx.path("rewrite_outputs.jsonl"), &outputs)?;
    write_json(&ctx.path("rewrite_report.json"), &report)?;
    println!(
        "rewrote {} records ({} resumed, {} failed) -> {}",
        report.succeeded,
        report.already_completed,
        report.failed.len(),
        ctx.path("rewrite_outputs.jsonl").display()
    );
    Ok(report.status_counts)
}

pub fn cmd_assemble(ctx: &Ctx, outputs_path: &Path) -> Result<()> {
    if ctx.dry_run {
        println!("dry run ok: would assemble `{}`", outputs_path.display());
        return Ok(());
    }
    let outputs = read_outputs_file(outputs_path)?;
    let (cleaned, report) = assemble_cleaned(&outputs).map_err(|e| anyhow::anyhow!("assemble: {e}"))?;
    corpus::write_jsonl_file(&cleaned, &ctx.path("cleaned.jsonl"))?;
    write_json(&ctx.path("assemble_report.json"), &report)?;
    println!(
        "assembled {} cleaned records (discarded: {}) -> {}",
        report.cleaned,
        outputs.len() - report.cleaned,
        ctx.path("cleaned.jsonl").display()
    );
    Ok(())
}

pub fn cmd_evaluate(ctx: &Ctx, predictions: &Path, gold: &Path, tol: Option<f64>) -> Result<()> {
    if ctx.dry_run {
        println!("dry run ok: would evaluate `{}` against `{}`", predictions.display(), gold.display());
        return Ok(());
    }
    let (gold_corpus, _) = ingest_reporting(gold, Source::Seed)?;
    let preds = read_predictions(predictions).map_err(|e| anyhow::anyhow!("predictions: {e}"))?;
    let mut cfg = EvalConfig::default();
    if let Some(t) = tol {
        cfg.tolerance = t;
    }
    let report = grade_dataset(&preds, &gold_corpus, &cfg);

    let verdicts_path = ctx.path("verdicts.jsonl");
    let mut f = std::fs::File::create(&verdicts_path)?;
    for v in &report.verdicts {
        serde_json::to_writer(&mut f, v)?;
        f.write_all(b"\n")?;
    }
    let summary = EvalSummary::from_report(&report, &verdicts_path);
    write_json(&ctx.path("eval_report.json"), &summary)?;
    print_eval_table(&report);
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    accuracy: Option<f64>,
    n: usize,
    correct: usize,
    per_grade: BTreeMap<String, mathsift_core::evaluator::GradeBucket>,
    verdicts_path: String,
}

impl EvalSummary {
    fn from_report(report: &GradeReport, verdicts_path: &Path) -> Self {
        EvalSummary {
            accuracy: report.accuracy,
            n: report.n,
            correct: report.correct,
            per_grade: report.per_grade.clone(),
            verdicts_path: verdicts_path.display().to_string(),
        }
    }
}

fn print_eval_table(report: &GradeReport) {
    match report.accuracy {
        Some(acc) => println!("items: {}  correct: {}  accuracy: {:.1}%", report.n, report.correct, acc * 100.0),
        None => println!("items: 0  accuracy: undefined"),
    }
    if !report.per_grade.is_empty() {
        println!("{:<8}{:>6}{:>9}{:>10}", "grade", "n", "correct", "accuracy");
        for (grade, bucket) in &report.per_grade {
            println!(
                "{:<8}{:>6}{:>9}{:>9.1}%",
                grade,
                bucket.n,
                bucket.correct,
                bucket.accuracy * 100.0
            );
        }
    }
}

pub struct ReportArgs {
    pub seed_total: Option<usize>,
    pub pairs: Option<usize>,
    pub pairs_file: Option<PathBuf>,
    pub seed_corpus: Option<PathBuf>,
}

#[derive(Serialize)]
struct PairRateReport {
    pairs: usize,
    seed_total: usize,
    pair_rate: f64,
    pair_rate_percent: f64,
}

pub fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> Result<()> {
    let (pairs, seed_total) = match (&args.pairs, &args.seed_total) {
        (Some(p), Some(s)) => (*p, *s),
        _ => {
            let pairs_file = args
                .pairs_file
                .as_ref()
                .context("report: need --pairs and --seed-total, or --pairs-file and --seed-corpus")?;
            let seed_path = args
                .seed_corpus
                .as_ref()
                .context("report: need --seed-corpus together with --pairs-file")?;
            if ctx.dry_run {
                println!("dry run ok");
                return Ok(());
            }
            let text = std::fs::read_to_string(pairs_file)
                .with_context(|| format!("pairs_file: cannot read `{}`", pairs_file.display()))?;
            let pair_count = text.lines().filter(|l| !l.trim().is_empty()).count();
            let (seed, _) = ingest_reporting(seed_path, Source::Seed)?;
            (pair_count, seed.len())
        }
    };
    if ctx.dry_run {
        println!("dry run ok");
        return Ok(());
    }
    let report = PairRateReport {
        pairs,
        seed_total,
        pair_rate: if seed_total == 0 { 0.0 } else { pairs as f64 / seed_total as f64 },
        pair_rate_percent: pair_rate_percent(pairs, seed_total),
    };
    write_json(&ctx.path("report.json"), &report)?;
    println!("pair rate: {:.1}% ({pairs}/{seed_total})", report.pair_rate_percent);
    Ok(())
}

pub struct PipelineArgs {
    pub seed_corpus: PathBuf,
    pub crawl_corpus: PathBuf,
    pub match_config: MatchConfig,
    pub endpoint: EndpointConfig,
    pub augment: AugmentConfig,
    pub layout: TrainLayout,
    pub checkpoint: Option<PathBuf>,
}

/// match -> emit-pairs -> rewrite -> assemble, with one report at the end.
pub fn cmd_pipeline(ctx: &Ctx, args: &PipelineArgs) -> Result<()> {
    if ctx.dry_run {
        args.endpoint.validate().map_err(|e| anyhow::anyhow!("endpoint: {e}"))?;
        println!(
            "dry run ok: would run pipeline on `{}` + `{}`",
            args.seed_corpus.display(),
            args.crawl_corpus.display()
        );
        return Ok(());
    }

    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut run = RunReport::default();

    let t = Instant::now();
    let (seed, seed_report) = ingest_reporting(&args.seed_corpus, Source::Seed)?;
    let (crawl, crawl_report) = ingest_reporting(&args.crawl_corpus, Source::Crawl)?;
    run.seed_ingested = seed.len();
    run.seed_skipped = seed_report.skipped;
    run.crawl_ingested = crawl.len();
    run.crawl_skipped = crawl_report.skipped;
    timings.insert("ingest".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (set, stats) = match_pairs(&seed, &crawl, &args.match_config);
    write_pairs_file(&ctx.path("pairs.jsonl"), &set)?;
    write_json(&ctx.path("match_report.json"), &match_report(&set, &stats))?;
    run.pairs = set.pairs.len();
    run.pair_rate_percent = pair_rate_percent(set.pairs.len(), set.seed_total);
    timings.insert("match".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let mut aug = args.augment.clone();
    if let Some(s) = ctx.rng_seed {
        aug.rng_seed = s;
    }
    let examples = build_training_set(&set, &seed, &crawl, &aug)
        .map_err(|e| anyhow::anyhow!("emit-pairs: {e}"))?;
    let mut f = std::fs::File::create(ctx.path("train.jsonl"))?;
    write_training_set(&examples, args.layout, &mut f)?;
    drop(f);
    run.training_examples = examples.len();
    timings.insert("emit_pairs".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| ctx.path("rewrite_checkpoint.jsonl"));
    let (outputs, rewrite_report) = rewrite_corpus(&crawl, &args.endpoint, &checkpoint, None)
        .map_err(|e| anyhow::anyhow!("rewrite: {e}"))?;
    write_outputs_file(&ctx.path("rewrite_outputs.jsonl"), &outputs)?;
    run.rewritten = outputs.len();
    run.discarded_by_status = rewrite_report
        .status_counts
        .iter()
        .filter(|(k, _)| k.as_str() != "ok")
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    timings.insert("rewrite".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (cleaned, assemble_report) = assemble_cleaned(&outputs).map_err(|e| anyhow::anyhow!("assemble: {e}"))?;
    corpus::write_jsonl_file(&cleaned, &ctx.path("cleaned.jsonl"))?;
    run.cleaned = assemble_report.cleaned;
    timings.insert("assemble".into(), t.elapsed().as_secs_f64());

    run.timings_secs = timings;
    run.config_fingerprint = run_fingerprint(&args.endpoint, &crawl);
    run.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_json(&ctx.path("report.json"), &run)?;

    println!(
        "pipeline complete: {} pairs, {} training examples, {} cleaned records -> {}",
        run.pairs,
        run.training_examples,
        run.cleaned,
        ctx.output_dir.display()
    );
    Ok(())
}

pub fn merged_match_config(
    base: Option<MatchConfig>,
    min_answer_len: Option<usize>,
    mode: Option<mathsift_core::matcher::AnswerMatchMode>,
    dedup: Option<mathsift_core::matcher::DedupMode>,
) -> MatchConfig {
    let mut cfg = base.unwrap_or_default();
    if let Some(m) = min_answer_len {
        cfg.min_answer_len = m;
    }
    if let Some(m) = mode {
        cfg.answer_match_mode = m;
    }
    if let Some(d) = dedup {
        cfg.dedup = d;
    }
    cfg
}

#[allow(clippy::too_many_arguments)]
pub fn merged_endpoint(
    base: Option<EndpointConfig>,
    base_url: Option<String>,
    model: Option<String>,
    concurrency: Option<usize>,
    rpm: Option<u32>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    backoff_ms: Option<u64>,
    temperature: Option<f64>,
    auth_env: Option<String>,
) -> Result<EndpointConfig> {
    let mut cfg = base.unwrap_or_default();
    if let Some(v) = base_url {
        cfg.base_url = v;
    }
    if let Some(v) = model {
        cfg.model_name = v;
    }
    if let Some(v) = concurrency {
        cfg.max_concurrency = v;
    }
    if let Some(v) = rpm {
        cfg.requests_per_minute = v;
    }
    if let Some(v) = timeout_secs {
        cfg.timeout_secs = v;
    }
    if let Some(v) = max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = backoff_ms {
        cfg.backoff_ms = v;
    }
    if let Some(v) = temperature {
        cfg.temperature = v;
    }
    if let Some(v) = auth_env {
        cfg.auth_env = Some(v);
    }
    if cfg.max_concurrency < 1 {
        bail!("endpoint.max_concurrency: must be >= 1");
    }
    Ok(cfg)
}
