//! The committed synthetic corpus, staged with rendered images.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use bmi_curate::ingest::load_manifest;
use bmi_curate::pipeline::PipelineConfig;
use bmi_curate::synthetic::{write_images, GroundTruthFile};
use bmi_curate::verdict::FilterReason;
use serde::Deserialize;

use super::fixtures;

/// Copy the manifest into `dir`, render its images and return a default
/// config writing to `dir/out`.
pub fn stage(dir: &Path) -> (PipelineConfig, GroundTruthFile) {
    let src = fixtures().join("synthetic");
    let manifest = dir.join("manifest.jsonl");
    std::fs::copy(src.join("manifest.jsonl"), &manifest).unwrap();
    let records = load_manifest(&manifest).unwrap().records;
    write_images(&records, dir).unwrap();
    let truth: GroundTruthFile =
        serde_json::from_str(&std::fs::read_to_string(src.join("planted.json")).unwrap()).unwrap();
    let cfg = PipelineConfig {
        manifest,
        output_dir: dir.join("out"),
        ..PipelineConfig::default()
    };
    (cfg, truth)
}

#[derive(Deserialize)]
struct VerdictLine {
    image_id: String,
    passed: bool,
    reasons: BTreeSet<FilterReason>,
}

/// image id -> reasons, read back from the written verdict file.
pub fn read_verdicts(out: &Path) -> BTreeMap<String, BTreeSet<FilterReason>> {
    std::fs::read_to_string(out.join("filter/verdicts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: VerdictLine = serde_json::from_str(l).unwrap();
            assert_eq!(v.passed, v.reasons.is_empty());
            (v.image_id, v.reasons)
        })
        .collect()
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
