//! Regenerates the bundled sample corpora:
//! `cargo run -p mathsift-core --example generate_samples -- data/`
//!
//! Writes a 50-record clean seed corpus and its degraded crawl twin
//! (fractions flattened, superscripts dropped, line breaks removed, symbols
//! substituted), both fully deterministic.

use std::path::PathBuf;

use mathsift_core::corpus::write_jsonl_file;
use mathsift_core::degrader::{degrade, DegradationSpec, ErrorClass};
use mathsift_core::samples::synthetic_seed_corpus;

fn main() {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data".into()).into();
    std::fs::create_dir_all(&dir).expect("create output dir");

    let seed = synthetic_seed_corpus(50, 20240501);
    write_jsonl_file(&seed, &dir.join("sample_seed_50.jsonl")).expect("write seed corpus");

    let spec = DegradationSpec::with_classes(
        &[
            ErrorClass::FractionFlatten,
            ErrorClass::SuperscriptDrop,
            ErrorClass::LinebreakDrop,
            ErrorClass::SymbolSubstitute,
        ],
        0.6,
        20240502,
    );
    let outcome = degrade(&seed, &spec).expect("degrade seed corpus");
    write_jsonl_file(&outcome.corpus, &dir.join("sample_crawl_50.jsonl")).expect("write crawl corpus");

    println!(
        "wrote {} seed and {} crawl records to {}",
        seed.len(),
        outcome.corpus.len(),
        dir.display()
    );
}
