//! Acceptance suite. Each test exercises one verification criterion end to
//! end and prints a PASS line (run with `-- --nocapture` to see them):
//!
//! 1. matching recovers every degraded record, perfectly, in bounded time
//! 2. the matcher equals a brute-force predicate evaluation on small corpora
//! 3. the subsequence check agrees with a dynamic-programming oracle
//! 4. the report stage reproduces the reference pair-rate arithmetic
//! 5. the rule cleaner reproduces its fixtures byte-exact, flaw included
//! 6. rendered targets round-trip; marker mutations are rejected
//! 7. the rewrite client survives kill/resume, retries, and an oracle endpoint
//! 8. the grader matches its hand-labeled fixture and its algebraic laws
//! 9. the whole pipeline runs on the bundled sample against the stub,
//!    deterministically

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mathsift_client::stub::{StubBehavior, StubConfig, StubServer};
use mathsift_client::{assemble_cleaned, rewrite_corpus, EndpointConfig};
use mathsift_core::corpus::{self, normalize, Corpus, Record, Source};
use mathsift_core::degrader::{degrade, DegradationSpec, ErrorClass};
use mathsift_core::evaluator::{equivalent, extract_answer, grade_dataset, Decision, EvalConfig, Prediction};
use mathsift_core::matcher::{is_subsequence, match_pairs, AnswerMatchMode, DedupMode, MatchConfig, MatchReason};
use mathsift_core::report::pair_rate_percent;
use mathsift_core::rulecleaner::{clean, RuleRegistry};
use mathsift_core::samples::synthetic_seed_corpus;
use mathsift_core::sftgen::{extract_output, render_prompt, render_target, OutputStatus, PromptMode};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mathsift")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn as_crawl(corpus: &Corpus) -> Corpus {
    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let mut c = r.clone();
            c.source = Source::Crawl;
            c
        })
        .collect();
    Corpus::from_records(records, Source::Crawl, "crawl-copy").unwrap()
}

// ---------------------------------------------------------------------------
// 1. Matching oracle recovery
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_matching_oracle_recovery() {
    let seed = synthetic_seed_corpus(1000, 11);
    let spec = DegradationSpec::with_classes(
        &[
            ErrorClass::FractionFlatten,
            ErrorClass::LinebreakDrop,
            ErrorClass::SuperscriptDrop,
            ErrorClass::SymbolSubstitute,
        ],
        0.6,
        99,
    );
    let outcome = degrade(&seed, &spec).unwrap();
    assert!(outcome.stats.records_touched > 800, "degradation barely fired");

    let start = Instant::now();
    let (set, _) = match_pairs(&seed, &outcome.corpus, &MatchConfig::default());
    let elapsed = start.elapsed();

    // Ground truth: each degraded record pairs with its own origin, nothing
    // else. Precision: every emitted pair is an identity pair. Recall: all
    // 1000 records are recovered.
    for p in &set.pairs {
        assert_eq!(p.seed_id, p.crawl_id, "false pair {} -> {}", p.seed_id, p.crawl_id);
    }
    let recovered: HashSet<&str> = set.pairs.iter().map(|p| p.crawl_id.as_str()).collect();
    assert_eq!(recovered.len(), 1000, "recall below 100%");
    assert_eq!(set.pairs.len(), 1000);
    assert!(elapsed < Duration::from_secs(10), "matching took {elapsed:?}");

    println!(
        "ACCEPTANCE 1 matching-oracle-recovery: PASS (recall 1000/1000, precision 1000/1000, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// 2. Brute-force equivalence on random corpora
// ---------------------------------------------------------------------------

const RAND_CHARS: &[char] = &[
    '数', '学', '题', '答', '解', '分', '米', '只', '1', '2', '3', '4', '5', '0', '，', '。',
    '（', '）', '+', '×', '=', '\n', '$', 'x', 'n',
];

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| RAND_CHARS[rng.gen_range(0..RAND_CHARS.len())]).collect()
}

/// Inserts noise characters (possibly kept ones) at random positions, so
/// some crawl answers become strict supersequences of seed answers.
fn supersequence_of(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut out = String::new();
    for c in base.chars() {
        while rng.gen_bool(0.25) {
            out.push(RAND_CHARS[rng.gen_range(0..RAND_CHARS.len())]);
        }
        out.push(c);
    }
    out
}

/// Only characters that normalization deletes.
fn punct_noise(rng: &mut ChaCha8Rng, base: &str) -> String {
    const PUNCT: &[char] = &['，', '。', '（', '）', '$', ' ', '\n', '+', '×', '='];
    let mut out = String::new();
    for c in base.chars() {
        while rng.gen_bool(0.3) {
            out.push(PUNCT[rng.gen_range(0..PUNCT.len())]);
        }
        out.push(c);
    }
    out
}

#[test]
fn acceptance_2_brute_force_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut total_pairs = 0usize;
    for trial in 0..50 {
        let n_seed = rng.gen_range(10..=200);
        let n_crawl = rng.gen_range(10..=200);

        let mut seeds = Vec::new();
        for i in 0..n_seed {
            seeds.push(Record::new(
                format!("s{i:03}"),
                random_text(&mut rng, 30),
                random_text(&mut rng, 50),
                Source::Seed,
            ));
        }
        let mut crawls = Vec::new();
        for j in 0..n_crawl {
            let (q, a) = if rng.gen_bool(0.4) && !seeds.is_empty() {
                // Derived record: noisy question, supersequence answer.
                let base = &seeds[rng.gen_range(0..seeds.len())];
                (punct_noise(&mut rng, &base.question), supersequence_of(&mut rng, &base.answer))
            } else {
                (random_text(&mut rng, 30), random_text(&mut rng, 50))
            };
            crawls.push(Record::new(format!("c{j:03}"), q, a, Source::Crawl));
        }
        let seed = Corpus::from_records(seeds, Source::Seed, "t").unwrap();
        let crawl = Corpus::from_records(crawls, Source::Crawl, "t").unwrap();

        let config = MatchConfig {
            answer_match_mode: if trial % 3 == 0 { AnswerMatchMode::Substring } else { AnswerMatchMode::Subsequence },
            min_answer_len: [0usize, 4, 8][trial % 3],
            dedup: DedupMode::Off,
        };

        let (set, _) = match_pairs(&seed, &crawl, &config);
        let got: HashSet<(String, String, MatchReason)> = set
            .pairs
            .iter()
            .map(|p| (p.seed_id.clone(), p.crawl_id.clone(), p.reason))
            .collect();
        assert_eq!(got.len(), set.pairs.len(), "duplicate pairs emitted");

        // Exhaustive predicate evaluation, question route first.
        let mut expected: HashSet<(String, String, MatchReason)> = HashSet::new();
        for s in seed.iter() {
            let sq = normalize(&s.question);
            let sa = normalize(&s.answer);
            for c in crawl.iter() {
                let cq = normalize(&c.question);
                let ca = normalize(&c.answer);
                if sq.as_str() == cq.as_str() {
                    expected.insert((s.id.clone(), c.id.clone(), MatchReason::QuestionExact));
                } else if sa.len() >= config.min_answer_len {
                    let hit = match config.answer_match_mode {
                        AnswerMatchMode::Subsequence => is_subsequence(&sa, &ca),
                        AnswerMatchMode::Substring => ca.as_str().contains(sa.as_str()),
                    };
                    if hit {
                        expected.insert((s.id.clone(), c.id.clone(), MatchReason::AnswerSubsequence));
                    }
                }
            }
        }
        assert_eq!(got, expected, "trial {trial} diverged from brute force");
        total_pairs += expected.len();
    }
    println!("ACCEPTANCE 2 brute-force-equivalence: PASS (50 trials, {total_pairs} pairs, 0 discrepancies)");
}

// ---------------------------------------------------------------------------
// 3. Subsequence vs dynamic-programming oracle
// ---------------------------------------------------------------------------

fn dp_subsequence(needle: &[char], hay: &[char]) -> bool {
    // reach[i] = first i needle chars embeddable; filled per haystack char.
    let mut reach = vec![false; needle.len() + 1];
    reach[0] = true;
    for &h in hay {
        for i in (0..needle.len()).rev() {
            if reach[i] && needle[i] == h {
                reach[i + 1] = true;
            }
        }
    }
    reach[needle.len()]
}

#[test]
fn acceptance_3_subsequence_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let alphabet = ['1', '2', '3', '七'];
    let mut trues = 0usize;
    for _ in 0..10_000 {
        let nl = rng.gen_range(0..=12);
        let hl = rng.gen_range(0..=50);
        let needle: Vec<char> = (0..nl).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        let hay: Vec<char> = (0..hl).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        let ns: String = needle.iter().collect();
        let hs: String = hay.iter().collect();

        let got = is_subsequence(&normalize(&ns), &normalize(&hs));
        let want = dp_subsequence(&needle, &hay);
        assert_eq!(got, want, "needle {ns:?} hay {hs:?}");
        if got {
            trues += 1;
        }
    }
    assert!(trues > 100, "oracle sweep degenerate: only {trues} positives");
    println!("ACCEPTANCE 3 subsequence-oracle: PASS (10000 pairs, {trues} positives, 0 discrepancies)");
}

// ---------------------------------------------------------------------------
// 4. Pair-rate arithmetic
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_pair_rate_arithmetic() {
    let rate = pair_rate_percent(24_336, 84_095);
    assert!((rate - 28.9).abs() <= 0.05, "library rate {rate}");

    // Same arithmetic through the report subcommand.
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args(["report", "--pairs", "24336", "--seed-total", "84095"])
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "report failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("28.9%"), "stdout was {stdout:?}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let reported = report["pair_rate_percent"].as_f64().unwrap();
    assert!((reported - 28.9).abs() <= 0.05, "reported rate {reported}");

    println!("ACCEPTANCE 4 pair-rate-arithmetic: PASS (24336/84095 -> {reported:.4}%)");
}

// ---------------------------------------------------------------------------
// 5. Rule-cleaner fixtures
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_rule_cleaner_fixtures() {
    let registry = RuleRegistry::default();

    let case1 = Record::new(
        "case1",
        "光明养鸡场今年养鸡2400只，比去年增加，去年养鸡多少只？",
        "试题分析：把去年养鸡的只数看作单位“1”，求单位“1”的量，用除法计算，数量2400除以对应的分率（1+\n1\n5）．\n试题解析：去年养鸡的只数：2400÷（1+1\n5），=2400÷6\n5，=2400×5\n6，=2000（只）．答：去年养鸡2000只．",
        Source::Crawl,
    );
    let case1_expected = "去年养鸡的只数：2400÷（1+1/5）=2400÷6/5=2400×5/6=2000（只）．答：去年养鸡2000只．";

    let case2 = Record::new(
        "case2",
        "工人把10.5立方米的黄沙铺在一个长6米，宽3.5米的长方体沙坑里，可以铺多厚？（用方程解）",
        "设可以铺x米，\n6×3.5×x=10.5\n21x=10.5\nx=10.5÷21\nx=0.5\n答：可以铺0.5米．",
        Source::Crawl,
    );
    // The blind fraction rule fuses the two equations: wrong on purpose.
    let case2_expected = "设可以铺x米，\n6×3.5×x=10.5/21x=10.5\nx=10.5÷21\nx=0.5\n答：可以铺0.5米．";

    for (record, expected) in [(&case1, case1_expected), (&case2, case2_expected)] {
        let (cleaned, _) = clean(record, &registry);
        assert_eq!(cleaned.answer, expected, "clean({}) not byte-exact", record.id);
        assert_eq!(cleaned.question, record.question);

        let mut again = cleaned.clone();
        again.source = Source::Crawl;
        let (twice, changes) = clean(&again, &registry);
        assert_eq!(twice.answer, cleaned.answer, "not idempotent on {}", record.id);
        assert!(changes.is_empty());
    }
    println!("ACCEPTANCE 5 rule-cleaner-fixtures: PASS (2 fixtures byte-exact, idempotent)");
}

// ---------------------------------------------------------------------------
// 6. Round-trip integrity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_round_trip_integrity() {
    let corpus = synthetic_seed_corpus(1000, 21);
    let mut mutations_checked = 0usize;
    for rec in corpus.iter() {
        let target = render_target(rec);
        let out = extract_output(rec.id.clone(), &target);
        assert_eq!(out.status, OutputStatus::Ok, "round trip failed for {}", rec.id);
        let (q, a) = out.parsed.unwrap();
        assert_eq!(q, rec.question);
        assert_eq!(a, rec.answer);

        let inverted = format!("[答案]\n{}\n[问题]\n{}", rec.answer, rec.question);
        let missing_question = format!("[答案]\n{}", rec.answer);
        let missing_answer = format!("[问题]\n{}", rec.question);
        let doubled = format!("{target}\n[答案]\n再来一份");
        let empty_section = format!("[问题]\n\n[答案]\n{}", rec.answer);
        for mutated in [inverted, missing_question, missing_answer, doubled, empty_section] {
            assert_eq!(
                extract_output(rec.id.clone(), &mutated).status,
                OutputStatus::Malformed,
                "mutation accepted for {}",
                rec.id
            );
            mutations_checked += 1;
        }
    }
    println!("ACCEPTANCE 6 round-trip-integrity: PASS (1000 round trips, {mutations_checked} mutations rejected)");
}

// ---------------------------------------------------------------------------
// 7. Rewrite-client robustness
// ---------------------------------------------------------------------------

fn oracle_map(seed: &Corpus, crawl: &Corpus) -> HashMap<String, String> {
    crawl
        .iter()
        .map(|c| {
            let s = seed.get(&c.id).expect("paired seed");
            (render_prompt(c, PromptMode::Sft), render_target(s))
        })
        .collect()
}

fn count_complete_lines(path: &Path) -> usize {
    match std::fs::read(path) {
        Ok(bytes) => bytes.iter().filter(|b| **b == b'\n').count(),
        Err(_) => 0,
    }
}

#[test]
fn acceptance_7_rewrite_client_robustness() {
    let seed = synthetic_seed_corpus(50, 31);
    let crawl = as_crawl(&seed);
    let stub = StubServer::start(StubConfig {
        behavior: StubBehavior::Oracle(oracle_map(&seed, &crawl)),
        ..Default::default()
    });

    let dir = tempfile::tempdir().unwrap();
    let crawl_path = dir.path().join("crawl.jsonl");
    corpus::write_jsonl_file(&crawl, &crawl_path).unwrap();

    // (a) Kill mid-run, then resume. The run is paced at 240 requests per
    // minute (one per 250 ms) with a single worker, so after a persisted
    // record the client is quiescent for ~250 ms; polling the checkpoint at
    // 5 ms granularity and killing inside that window guarantees no request
    // is in flight when the SIGKILL lands.
    let out_kill = dir.path().join("out_kill");
    let checkpoint = out_kill.join("rewrite_checkpoint.jsonl");
    let mut child = Command::new(bin())
        .args(["rewrite", "--model", "stub-model", "--concurrency", "1", "--rpm", "240"])
        .args(["--crawl-corpus"])
        .arg(&crawl_path)
        .args(["--base-url", stub.url()])
        .arg("--output-dir")
        .arg(&out_kill)
        .spawn()
        .unwrap();

    let kill_after_entries = 12usize;
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        // Header line plus entries.
        if count_complete_lines(&checkpoint) >= kill_after_entries + 1 {
            break;
        }
        assert!(Instant::now() < deadline, "stub never reached {kill_after_entries} entries");
        std::thread::sleep(Duration::from_millis(5));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let killed_at = count_complete_lines(&checkpoint) - 1;

    // Resume at full speed; delivery knobs may change without breaking the
    // checkpoint fingerprint.
    let out = Command::new(bin())
        .args(["rewrite", "--model", "stub-model", "--concurrency", "4", "--rpm", "60000"])
        .args(["--crawl-corpus"])
        .arg(&crawl_path)
        .args(["--base-url", stub.url()])
        .arg("--output-dir")
        .arg(&out_kill)
        .output()
        .unwrap();
    assert!(out.status.success(), "resume failed: {}", String::from_utf8_lossy(&out.stderr));

    // Zero duplicate requests across kill and resume.
    let counts = stub.counts();
    assert_eq!(counts.len(), 50);
    assert!(counts.values().all(|&n| n == 1), "duplicate requests observed");

    // Output identical to an uninterrupted run.
    let out_ref = dir.path().join("out_ref");
    let status = Command::new(bin())
        .args(["rewrite", "--model", "stub-model", "--concurrency", "4", "--rpm", "60000"])
        .args(["--crawl-corpus"])
        .arg(&crawl_path)
        .args(["--base-url", stub.url()])
        .arg("--output-dir")
        .arg(&out_ref)
        .status()
        .unwrap();
    assert!(status.success());
    let resumed = std::fs::read(out_kill.join("rewrite_outputs.jsonl")).unwrap();
    let reference = std::fs::read(out_ref.join("rewrite_outputs.jsonl")).unwrap();
    assert_eq!(resumed, reference, "kill+resume output differs from uninterrupted run");

    // (b) Injected 429 and 500 responses are retried within max_retries.
    for status_code in [429u16, 500u16] {
        let flaky = StubServer::start(StubConfig {
            behavior: StubBehavior::Oracle(oracle_map(&seed, &crawl)),
            fail_first: 2,
            fail_status: status_code,
            ..Default::default()
        });
        let endpoint = EndpointConfig {
            base_url: flaky.url().to_string(),
            model_name: "stub-model".into(),
            max_concurrency: 4,
            requests_per_minute: 60_000,
            max_retries: 3,
            backoff_ms: 5,
            ..Default::default()
        };
        let cp = dir.path().join(format!("cp_flaky_{status_code}.jsonl"));
        let (outputs, report) = rewrite_corpus(&crawl, &endpoint, &cp, None).unwrap();
        assert!(report.failed.is_empty(), "failures under injected {status_code}");
        assert!(outputs.iter().all(|o| o.status == OutputStatus::Ok));
        assert!(flaky.counts().values().all(|&n| n <= 1 + endpoint.max_retries));
    }

    // (c) Oracle endpoint: the assembled corpus equals the paired seeds.
    let endpoint = EndpointConfig {
        base_url: stub.url().to_string(),
        model_name: "stub-model".into(),
        max_concurrency: 4,
        requests_per_minute: 60_000,
        ..Default::default()
    };
    let cp = dir.path().join("cp_oracle.jsonl");
    let (outputs, _) = rewrite_corpus(&crawl, &endpoint, &cp, None).unwrap();
    let (cleaned, _) = assemble_cleaned(&outputs).unwrap();
    assert_eq!(cleaned.len(), seed.len());
    for rec in cleaned.iter() {
        let original = seed.get(rec.id.strip_prefix("cleaned:").unwrap()).unwrap();
        assert_eq!(rec.question, original.question);
        assert_eq!(rec.answer, original.answer);
    }

    println!(
        "ACCEPTANCE 7 rewrite-client-robustness: PASS (killed after {killed_at} records, zero duplicates; 429/500 retried; oracle run exact)"
    );
}

// ---------------------------------------------------------------------------
// 8. Evaluator fixture and properties
// ---------------------------------------------------------------------------

/// Hand-labeled grading fixture: (id, model response, gold answer, verdict).
/// The verdicts were assigned by reading each case, not by running the
/// grader.
const VERDICT_FIXTURE: &[(&str, &str, &str, Decision)] = &[
    ("e01", "答：去年养鸡2000只．", "解：2400÷1.2=2000\n答：去年养鸡2000只．", Decision::Correct),
    ("e02", "计算得2400÷1.2=2000，答：2000只", "答：去年养鸡2000只．", Decision::Correct),
    ("e03", "答：1999只", "答：去年养鸡2000只．", Decision::Incorrect),
    ("e04", "答：14.4小时", "答：实际用14.4小时到达灾区．", Decision::Correct),
    ("e05", "答：14.40小时", "答：14.4小时", Decision::Correct),
    ("e06", "x=14.4，答：这辆汽车实际用14.4小时到达灾区", "答：14.4小时", Decision::Correct),
    ("e07", "答：15小时", "答：14.4小时", Decision::Incorrect),
    ("e08", "答：6/5", "答：1.2", Decision::Correct),
    ("e09", "答：$\\frac{6}{5}$", "答：1.2", Decision::Correct),
    ("e10", "答：1.2", "答：6/5", Decision::Correct),
    ("e11", "答：20%", "答：0.2", Decision::Correct),
    ("e12", "答：20%", "答：1/5", Decision::Correct),
    ("e13", "答：25%", "答：1/5", Decision::Incorrect),
    ("e14", "答：0.3333", "答：1/3", Decision::Correct),
    ("e15", "答：0.3334", "答：1/3", Decision::Incorrect),
    ("e16", "答：0", "答：1/3", Decision::Incorrect),
    ("e17", "故答案为:(2n+1).", "故答案为：2n+1", Decision::Correct),
    ("e18", "故答案为：(2n+1)", "故答案为：(2n+3)", Decision::Incorrect),
    ("e19", "答：2000米", "答：2000只", Decision::Incorrect),
    ("e20", "答：2000", "答：2000只", Decision::Correct),
    ("e21", "答：2000只", "答：2000", Decision::Correct),
    ("e22", "@@@@ ####", "答：42", Decision::Unparseable),
    ("e23", "", "答：42", Decision::Unparseable),
    ("e24", "答：", "答：42", Decision::Unparseable),
    ("e25", "答：2又1/2米", "答：2.5米", Decision::Correct),
    ("e26", "答：5分之8", "答：8/5", Decision::Correct),
    ("e27", "答：8/5", "答：5分之8", Decision::Correct),
    ("e28", "答：1.6", "答：8/5", Decision::Correct),
    ("e29", "答案为96平方米", "答：96平方米", Decision::Correct),
    ("e30", "答：96 平方米", "答：96平方米", Decision::Correct),
    ("e31", "经过计算，最后答案是42", "答：42", Decision::Correct),
    ("e32", "答：42。", "答：42", Decision::Correct),
    ("e33", "答：-5", "答：-5", Decision::Correct),
    ("e34", "答：-5", "答：5", Decision::Incorrect),
    ("e35", "面积是20cm2", "答：20cm2", Decision::Correct),
    ("e36", "答：共1120（千克）", "答：1120千克", Decision::Correct),
    ("e37", "无法解答这道题", "答：42", Decision::Incorrect),
    ("e38-missing", "答：42", "", Decision::Unparseable),
    ("e39", "答：3.50元", "答：3.5元", Decision::Correct),
    ("e40", "答：7/2", "答：3又1/2", Decision::Correct),
];

#[test]
fn acceptance_8_evaluator_fixture_and_properties() {
    // 40-item hand-labeled fixture.
    let mut gold_records = Vec::new();
    for (id, _, gold, _) in VERDICT_FIXTURE {
        if !gold.is_empty() {
            gold_records.push(Record::new(*id, format!("题目{id}"), *gold, Source::Seed));
        }
    }
    let gold = Corpus::from_records(gold_records, Source::Seed, "fixture").unwrap();
    let predictions: Vec<Prediction> = VERDICT_FIXTURE
        .iter()
        .map(|(id, response, _, _)| Prediction { id: id.to_string(), response: response.to_string() })
        .collect();
    let cfg = EvalConfig::default();
    let report = grade_dataset(&predictions, &gold, &cfg);
    assert_eq!(report.n, 40);
    let mut agree = 0usize;
    for (v, (id, _, _, want)) in report.verdicts.iter().zip(VERDICT_FIXTURE) {
        assert_eq!(v.prediction_id, *id);
        assert_eq!(
            v.decision, *want,
            "{id}: grader said {:?} ({}), fixture says {want:?}",
            v.decision, v.reason
        );
        agree += 1;
    }
    assert_eq!(agree, 40);

    // Reflexivity and symmetry over random rationals (as extracted answers
    // in assorted surface forms).
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..10_000 {
        let n = rng.gen_range(-99_999i64..=99_999);
        let d = rng.gen_range(1i64..=9_999);
        let x_text = format!("答：{n}/{d}");
        let y_text = match rng.gen_range(0..3) {
            0 => format!("答：{}/{}", n * 3, d * 3),
            1 => format!("答：{n}/{d}只"),
            _ => format!("答：先算别的数{}，再得{n}/{d}", rng.gen_range(0..100)),
        };
        let x = extract_answer(&x_text, &cfg);
        let y = extract_answer(&y_text, &cfg);
        assert!(equivalent(&x, &x, cfg.tolerance), "reflexivity failed on {x_text}");
        assert!(equivalent(&y, &y, cfg.tolerance), "reflexivity failed on {y_text}");
        assert_eq!(
            equivalent(&x, &y, cfg.tolerance),
            equivalent(&y, &x, cfg.tolerance),
            "symmetry failed on {x_text} / {y_text}"
        );
        assert!(equivalent(&x, &y, cfg.tolerance), "{x_text} should equal {y_text}");
    }

    // Fraction / decimal / percent tri-representation equivalence for 1000
    // random terminating rationals.
    for _ in 0..1_000 {
        let num = rng.gen_range(-100_000i64..=100_000);
        let a = rng.gen_range(0u32..=5);
        let b = rng.gen_range(0u32..=5);
        let den = 2i64.pow(a) * 5i64.pow(b);

        let places = a.max(b).max(1) as usize;
        let scaled = num as i128 * 10i128.pow(places as u32) / den as i128;
        let sign = if scaled < 0 { "-" } else { "" };
        let digits = format!("{:0width$}", scaled.abs(), width = places + 1);
        let split = digits.len() - places;
        let dec_text = format!("答：{sign}{}.{}", &digits[..split], &digits[split..]);

        // Percent: value * 100, still terminating at the same precision.
        let pct_places = places;
        let pct_scaled = num as i128 * 100 * 10i128.pow(pct_places as u32) / den as i128;
        let pct_digits = format!("{:0width$}", pct_scaled.abs(), width = pct_places + 1);
        let pct_split = pct_digits.len() - pct_places;
        let pct_sign = if pct_scaled < 0 { "-" } else { "" };
        let pct_text = format!("答：{pct_sign}{}.{}%", &pct_digits[..pct_split], &pct_digits[pct_split..]);

        let frac = extract_answer(&format!("答：{num}/{den}"), &cfg);
        let dec = extract_answer(&dec_text, &cfg);
        let pct = extract_answer(&pct_text, &cfg);
        assert!(equivalent(&frac, &dec, cfg.tolerance), "{num}/{den} vs {dec_text}");
        assert!(equivalent(&frac, &pct, cfg.tolerance), "{num}/{den} vs {pct_text}");
        assert!(equivalent(&dec, &pct, cfg.tolerance), "{dec_text} vs {pct_text}");
    }

    println!("ACCEPTANCE 8 evaluator: PASS (40/40 fixture agreement; 10000 reflexive/symmetric; 1000 tri-representation)");
}

// ---------------------------------------------------------------------------
// 9. End-to-end pipeline smoke on the bundled sample
// ---------------------------------------------------------------------------

fn validate_pairs_file(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("pair line parses");
        assert!(v["seed_id"].is_string() && v["crawl_id"].is_string() && v["reason"].is_string());
        n += 1;
    }
    n
}

fn validate_train_file(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("train line parses");
        assert!(v["prompt"].is_string() && v["target"].is_string() && v["label"].is_string());
        n += 1;
    }
    n
}

fn report_without_timings(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings_secs");
    v
}

#[test]
fn acceptance_9_pipeline_smoke() {
    let seed_path = data_dir().join("sample_seed_50.jsonl");
    let crawl_path = data_dir().join("sample_crawl_50.jsonl");
    let (seed, _) = corpus::ingest(&seed_path, Source::Seed).unwrap();
    let (crawl, _) = corpus::ingest(&crawl_path, Source::Crawl).unwrap();
    assert_eq!(seed.len(), 50);
    assert_eq!(crawl.len(), 50);

    let stub = StubServer::start(StubConfig {
        behavior: StubBehavior::Oracle(oracle_map(&seed, &crawl)),
        ..Default::default()
    });

    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        let out = Command::new(bin())
            .args(["pipeline", "--model", "stub-model", "--concurrency", "4", "--rpm", "60000"])
            .args(["--seed", "7", "--aug-count", "2"])
            .args(["--seed-corpus"])
            .arg(&seed_path)
            .args(["--crawl-corpus"])
            .arg(&crawl_path)
            .args(["--base-url", stub.url()])
            .arg("--output-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out_dir);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "two pipeline runs took {elapsed:?}");

    // Artifacts exist and validate against their shapes.
    let run0 = &outputs[0];
    let pair_count = validate_pairs_file(&run0.join("pairs.jsonl"));
    assert_eq!(pair_count, 50, "expected every sample record paired");
    let train_count = validate_train_file(&run0.join("train.jsonl"));
    assert_eq!(train_count, 52); // 50 pairs + 2 augmented

    let (cleaned, _) = corpus::ingest(&run0.join("cleaned.jsonl"), Source::Cleaned).unwrap();
    assert_eq!(cleaned.len(), 50);
    for rec in cleaned.iter() {
        let original = seed.get(rec.id.strip_prefix("cleaned:").unwrap()).unwrap();
        assert_eq!(rec.answer, original.answer);
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run0.join("report.json")).unwrap()).unwrap();
    for key in ["pairs", "pair_rate_percent", "training_examples", "rewritten", "cleaned", "config_fingerprint", "timings_secs"] {
        assert!(!report[key].is_null(), "report missing {key}");
    }
    assert_eq!(report["cleaned"].as_u64(), Some(50));

    // Determinism: both seeded runs byte-identical (timings live only in
    // the report and are excluded there).
    for file in ["pairs.jsonl", "train.jsonl", "rewrite_outputs.jsonl", "cleaned.jsonl", "match_report.json"] {
        let a = std::fs::read(outputs[0].join(file)).unwrap();
        let b = std::fs::read(outputs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between seeded runs");
    }
    assert_eq!(
        report_without_timings(&outputs[0].join("report.json")),
        report_without_timings(&outputs[1].join("report.json"))
    );

    println!(
        "ACCEPTANCE 9 pipeline-smoke: PASS ({pair_count} pairs, {train_count} training examples, 50 cleaned, 2 runs in {elapsed:?}, byte-identical)"
    );
}
