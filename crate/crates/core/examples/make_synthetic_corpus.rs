//! Regenerate the committed synthetic corpus:
//!
//! ```text
//! cargo run -p bmi-curate --example make_synthetic_corpus -- crates/core/tests/fixtures/synthetic
//! ```
//!
//! Writes `manifest.jsonl` and `planted.json`. Pass `--images` to also render
//! the PNGs next to the manifest.

use std::path::PathBuf;

use bmi_curate::ingest::write_records;
use bmi_curate::synthetic::{generate, write_images, CorpusSpec, GroundTruthFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: make_synthetic_corpus <dir> [--images]")?);
    let images = args.any(|a| a == "--images");

    let corpus = generate(&CorpusSpec::default())?;
    write_records(&dir.join("manifest.jsonl"), &corpus.records)?;
    let truth = GroundTruthFile {
        spec: corpus.spec.clone(),
        planted: corpus.planted.clone(),
    };
    std::fs::write(dir.join("planted.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    if images {
        write_images(&corpus.records, &dir)?;
    }
    println!("{} records, {} planted anomalies", corpus.records.len(), corpus.planted.all().len());
    Ok(())
}
