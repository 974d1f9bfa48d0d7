//! End-to-end orchestration.
//!
//! Stages run in the order ingest, cluster, filter, crop, split, eval,
//! report. Each writes into `<output_dir>/<stage>/` and finishes by writing a
//! `.stage.json` sidecar holding a hash of its configuration and upstream
//! hashes. A stage is skipped when its sidecar is complete, the hash matches
//! and its listed outputs exist. Clustering is fitted on every ingested
//! record; the filter stage then combines person and posture verdicts.

pub mod accounting;
pub mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use accounting::{filter_accounting, FilterReport, OverlapCount};
pub use config::{EvalConfig, PipelineConfig, SplitConfig};
pub use report::SummaryReport;

use crate::crop::{self, CropRect, Perspective, PixelRect, MARGIN_CONVENTION};
use crate::error::{Error, Result};
use crate::eval::{self, BmiModel, EvalItem};
use crate::ingest::{self, write_lines, ImageRecord};
use crate::person_filter::apply_person_filter;
use crate::posture::{fit_posture, ClusterModel};
use crate::split::{greedy_split, verify_disjoint, SplitAssignment};
use crate::verdict::{merge_verdicts, FilterVerdict};

pub const SIDECAR: &str = ".stage.json";
pub const ARTIFACTS: &str = "artifacts.json";
/// Bumped whenever a stage's output format changes, invalidating old runs.
const HASH_VERSION: &str = "bmi-curate/stage-hash/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Cluster,
    Filter,
    Crop,
    Split,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::Filter,
        Stage::Crop,
        Stage::Split,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Filter => "filter",
            Stage::Crop => "crop",
            Stage::Split => "split",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidecarStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub code: String,
    pub message: String,
}

/// Contents of a stage's `.stage.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSidecar {
    pub stage: Stage,
    pub status: SidecarStatus,
    pub hash: String,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
}

impl StageSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed("stage sidecar", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Executed,
    Skipped,
    /// Eval without a configured model.
    NotConfigured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub stages: Vec<StageOutcome>,
}

impl RunSummary {
    pub fn executed(&self) -> Vec<Stage> {
        self.stages
            .iter()
            .filter(|o| o.status == StageStatus::Executed)
            .map(|o| o.stage)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropStatus {
    Ok,
    Skipped,
}

/// One line of a perspective's `crops.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropEntry {
    pub image_id: String,
    pub subject_id: String,
    pub perspective: Perspective,
    pub status: CropStatus,
    pub margin_per_side: f64,
    pub margin_convention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<CropRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels: Option<PixelRect>,
    /// Crop file, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub total_lines: usize,
    pub records: usize,
    pub rejects: usize,
    pub rejects_by_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSummary {
    pub perspective: Perspective,
    pub cropped: usize,
    pub skipped: usize,
    pub skipped_by_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: Stage,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_lines(path, [text])
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, kind: &'static str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(kind, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, kind: &'static str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::malformed(kind, e)))
        .collect()
}

fn load_records(path: &Path) -> Result<Vec<ImageRecord>> {
    let m = ingest::load_manifest(path)?;
    if let Some(r) = m.rejects.first() {
        return Err(Error::malformed(
            "intermediate manifest",
            format!("line {} rejected: {}", r.line, r.reason.as_str()),
        ));
    }
    Ok(m.records)
}

/// File name for an image id: the id itself when it is filesystem-safe,
/// otherwise a sanitized form plus a short digest to keep names unique.
pub fn crop_file_name(image_id: &str) -> String {
    let safe: String = image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if safe == image_id && !safe.starts_with('.') {
        format!("{safe}.png")
    } else {
        format!("{safe}-{}.png", &sha256_hex(image_id.as_bytes())[..12])
    }
}

struct Hasher(Sha256);

impl Hasher {
    fn new(stage: Stage) -> Self {
        let mut h = Sha256::new();
        h.update(HASH_VERSION.as_bytes());
        h.update([0]);
        h.update(stage.as_str().as_bytes());
        Hasher(h)
    }

    fn field(mut self, name: &str, value: impl AsRef<[u8]>) -> Self {
        let v = value.as_ref();
        self.0.update([0]);
        self.0.update(name.as_bytes());
        self.0.update((v.len() as u64).to_le_bytes());
        self.0.update(v);
        self
    }

    fn json(self, name: &str, value: &impl Serialize) -> Self {
        let text = serde_json::to_string(value).expect("config serializes");
        self.field(name, text)
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    /// Validates the configuration, including that its inputs exist.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate_for_run()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.cfg.output_dir.join(stage.as_str())
    }

    fn out(&self, stage: Stage, name: &str) -> PathBuf {
        self.stage_dir(stage).join(name)
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.cfg.output_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Hashes for every stage, each chained on its upstream hashes.
    fn stage_hashes(&self) -> Result<BTreeMap<Stage, String>> {
        let c = &self.cfg;
        let mut h = BTreeMap::new();
        let manifest = file_sha256(&c.manifest)?;
        h.insert(Stage::Ingest, Hasher::new(Stage::Ingest).field("manifest", &manifest).finish());
        h.insert(
            Stage::Cluster,
            Hasher::new(Stage::Cluster)
                .field("ingest", &h[&Stage::Ingest])
                .json("posture", &c.posture)
                .finish(),
        );
        h.insert(
            Stage::Filter,
            Hasher::new(Stage::Filter)
                .field("ingest", &h[&Stage::Ingest])
                .field("cluster", &h[&Stage::Cluster])
                .json("person_filter", &c.person_filter)
                .finish(),
        );
        h.insert(
            Stage::Crop,
            Hasher::new(Stage::Crop)
                .field("filter", &h[&Stage::Filter])
                .json("perspectives", &c.perspectives)
                .field("image_root", c.image_root().to_string_lossy().as_bytes())
                .finish(),
        );
        h.insert(
            Stage::Split,
            Hasher::new(Stage::Split)
                .field("filter", &h[&Stage::Filter])
                .json("split", &c.split)
                .finish(),
        );
        let model = match &c.eval.model {
            Some(p) => file_sha256(p)?,
            None => String::new(),
        };
        h.insert(
            Stage::Eval,
            Hasher::new(Stage::Eval)
                .field("crop", &h[&Stage::Crop])
                .field("split", &h[&Stage::Split])
                .field("model", &model)
                .json("split_label", &c.eval.split)
                .json("perspective", &c.eval.perspective)
                .json("preprocess", &c.eval.preprocess)
                .finish(),
        );
        let mut report = Hasher::new(Stage::Report);
        for (s, v) in &h {
            report = report.field(s.as_str(), v);
        }
        h.insert(Stage::Report, report.finish());
        Ok(h)
    }

    fn is_current(&self, stage: Stage, hash: &str) -> bool {
        let Ok(sc) = StageSidecar::load(&self.out(stage, SIDECAR)) else {
            return false;
        };
        sc.status == SidecarStatus::Complete
            && sc.hash == hash
            && sc.outputs.iter().all(|o| self.cfg.output_dir.join(o).is_file())
    }

    pub fn run(&self) -> Result<RunSummary> {
        self.run_through(Stage::Report)
    }

    /// Run every stage up to and including `last`, skipping current ones.
    pub fn run_through(&self, last: Stage) -> Result<RunSummary> {
        let hashes = self.stage_hashes()?;
        let mut outcomes = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
            let hash = hashes[&stage].clone();
            if stage == Stage::Eval && self.cfg.eval.model.is_none() {
                outcomes.push(StageOutcome { stage, status: StageStatus::NotConfigured, hash });
                continue;
            }
            if self.is_current(stage, &hash) {
                outcomes.push(StageOutcome { stage, status: StageStatus::Skipped, hash });
                continue;
            }
            let sidecar_path = self.out(stage, SIDECAR);
            // A stale sidecar must not survive a half-finished rerun.
            if sidecar_path.exists() {
                fs::remove_file(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
            }
            match self.execute(stage) {
                Ok(outputs) => {
                    let sc = StageSidecar {
                        stage,
                        status: SidecarStatus::Complete,
                        hash: hash.clone(),
                        outputs: outputs.iter().map(|p| self.rel(p)).collect(),
                        error: None,
                    };
                    write_json(&sidecar_path, &sc)?;
                    outcomes.push(StageOutcome { stage, status: StageStatus::Executed, hash });
                }
                Err(e) => {
                    let sc = StageSidecar {
                        stage,
                        status: SidecarStatus::Failed,
                        hash,
                        outputs: Vec::new(),
                        error: Some(StageError {
                            code: e.code().to_owned(),
                            message: e.to_string(),
                        }),
                    };
                    // Best effort: the stage error is what gets reported.
                    let _ = write_json(&sidecar_path, &sc);
                    return Err(Error::Stage {
                        stage: stage.as_str(),
                        source: Box::new(e),
                    });
                }
            }
        }
        self.write_artifacts()?;
        Ok(RunSummary {
            output_dir: self.cfg.output_dir.clone(),
            stages: outcomes,
        })
    }

    fn execute(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Cluster => self.cluster(),
            Stage::Filter => self.filter(),
            Stage::Crop => self.crop(),
            Stage::Split => self.split(),
            Stage::Eval => self.eval(),
            Stage::Report => self.report(),
        }
    }

    pub fn records_path(&self) -> PathBuf {
        self.out(Stage::Ingest, "records.jsonl")
    }

    pub fn curated_path(&self) -> PathBuf {
        self.out(Stage::Filter, "curated.jsonl")
    }

    pub fn cluster_model_path(&self) -> PathBuf {
        self.out(Stage::Cluster, "model.json")
    }

    pub fn split_path(&self) -> PathBuf {
        self.out(Stage::Split, "split.jsonl")
    }

    pub fn crop_index_path(&self, p: Perspective) -> PathBuf {
        self.stage_dir(Stage::Crop).join(p.as_str()).join("crops.jsonl")
    }

    fn ingest(&self) -> Result<Vec<PathBuf>> {
        let manifest = ingest::load_manifest(&self.cfg.manifest)?;
        let records = self.records_path();
        let rejects = self.out(Stage::Ingest, "rejects.jsonl");
        let summary_path = self.out(Stage::Ingest, "summary.json");
        ingest::write_records(&records, &manifest.records)?;
        ingest::write_rejects(&rejects, &manifest.rejects)?;
        let mut by_reason = BTreeMap::new();
        for r in &manifest.rejects {
            *by_reason.entry(r.reason.as_str().to_owned()).or_insert(0) += 1;
        }
        let summary = IngestSummary {
            total_lines: manifest.total_lines(),
            records: manifest.records.len(),
            rejects: manifest.rejects.len(),
            rejects_by_reason: by_reason,
        };
        write_json(&summary_path, &summary)?;
        Ok(vec![records, rejects, summary_path])
    }

    fn cluster(&self) -> Result<Vec<PathBuf>> {
        let records = load_records(&self.records_path())?;
        let fit = fit_posture(&records, &self.cfg.posture)?;
        let model = self.cluster_model_path();
        let report = self.out(Stage::Cluster, "report.json");
        fit.model.save(&model)?;
        write_json(&report, &fit.report)?;
        Ok(vec![model, report])
    }

    fn filter(&self) -> Result<Vec<PathBuf>> {
        let records = load_records(&self.records_path())?;
        let model = ClusterModel::load(&self.cluster_model_path())?;
        let person = apply_person_filter(&records, &self.cfg.person_filter);
        let posture = model.apply(&records)?;
        let verdicts = merge_verdicts(&[&person, &posture])?;
        let report = filter_accounting(&verdicts)?;

        let passed: BTreeMap<&str, bool> = verdicts.iter().map(|v| (v.image_id.as_str(), v.passed())).collect();
        let curated: Vec<ImageRecord> = records
            .iter()
            .filter(|r| passed[r.image_id.as_str()])
            .cloned()
            .collect();
        let verdict_path = self.out(Stage::Filter, "verdicts.jsonl");
        let removed_path = self.out(Stage::Filter, "removed.jsonl");
        let report_path = self.out(Stage::Filter, "report.json");
        write_lines(&verdict_path, verdicts.iter().map(FilterVerdict::to_json_line))?;
        write_lines(
            &removed_path,
            verdicts.iter().filter(|v| !v.passed()).map(FilterVerdict::to_json_line),
        )?;
        ingest::write_records(&self.curated_path(), &curated)?;
        write_json(&report_path, &report)?;
        Ok(vec![verdict_path, removed_path, self.curated_path(), report_path])
    }

    fn crop(&self) -> Result<Vec<PathBuf>> {
        let records = load_records(&self.curated_path())?;
        let root = self.cfg.image_root();
        let mut outputs = Vec::new();
        let mut summaries = Vec::new();
        for &p in &self.cfg.perspectives {
            let dir = self.stage_dir(Stage::Crop).join(p.as_str());
            let entries = records
                .par_iter()
                .map(|r| self.crop_one(r, p, &root, &dir))
                .collect::<Result<Vec<_>>>()?;
            let mut skipped_by_reason = BTreeMap::new();
            for e in entries.iter().filter(|e| e.status == CropStatus::Skipped) {
                *skipped_by_reason.entry(e.reason.clone().unwrap_or_default()).or_insert(0) += 1;
            }
            let cropped = entries.iter().filter(|e| e.status == CropStatus::Ok).count();
            summaries.push(CropSummary {
                perspective: p,
                cropped,
                skipped: entries.len() - cropped,
                skipped_by_reason,
            });
            let index = self.crop_index_path(p);
            write_lines(&index, entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes")))?;
            outputs.push(index);
        }
        let summary = self.out(Stage::Crop, "summary.json");
        write_json(&summary, &summaries)?;
        outputs.push(summary);
        Ok(outputs)
    }

    fn crop_one(&self, r: &ImageRecord, p: Perspective, root: &Path, dir: &Path) -> Result<CropEntry> {
        let mut entry = CropEntry {
            image_id: r.image_id.clone(),
            subject_id: r.subject_id.clone(),
            perspective: p,
            status: CropStatus::Skipped,
            margin_per_side: p.margin_per_side(),
            margin_convention: MARGIN_CONVENTION.to_owned(),
            rect: None,
            pixels: None,
            path: None,
            reason: None,
        };
        let rect = match crop::crop_for(r, p) {
            Ok(rect) => rect,
            // Geometry preconditions are per-image facts, not stage failures.
            Err(
                e @ (Error::InsufficientTorsoKeypoints
                | Error::InsufficientHeadKeypoints
                | Error::DegenerateCrop
                | Error::MissingAnnotation(_)),
            ) => {
                entry.reason = Some(e.code().to_owned());
                return Ok(entry);
            }
            Err(e) => return Err(e),
        };
        if r.face_bbox.is_some() && p == Perspective::Face {
            entry.margin_per_side = 0.0;
        }
        let out = dir.join(crop_file_name(&r.image_id));
        let px = crop::apply_crop(
            &r.resolve_image_path(root),
            (r.image_width, r.image_height),
            &rect,
            &out,
        )?;
        entry.status = CropStatus::Ok;
        entry.rect = Some(rect);
        entry.pixels = Some(px);
        entry.path = Some(self.rel(&out));
        Ok(entry)
    }

    fn split(&self) -> Result<Vec<PathBuf>> {
        let records = load_records(&self.curated_path())?;
        let assignment = greedy_split(&records, self.cfg.split.ratios, self.cfg.split.seed)?;
        let check = verify_disjoint(&assignment, &records)?;
        let report = self.out(Stage::Split, "report.json");
        assignment.save(&self.split_path())?;
        write_json(&report, &check)?;
        Ok(vec![self.split_path(), report])
    }

    fn eval(&self) -> Result<Vec<PathBuf>> {
        let ecfg = &self.cfg.eval;
        let model_path = ecfg.model.as_ref().ok_or_else(|| Error::InvalidConfig("no model configured".into()))?;
        let model = BmiModel::load(model_path, ecfg.preprocess.shape())?;
        let records = load_records(&self.curated_path())?;
        let split = SplitAssignment::load(&self.split_path())?;
        let crops: Vec<CropEntry> = read_jsonl(&self.crop_index_path(ecfg.perspective), "crop entry")?;
        let crop_paths: BTreeMap<&str, &str> = crops
            .iter()
            .filter_map(|c| Some((c.image_id.as_str(), c.path.as_deref()?)))
            .collect();
        let labels = split.index();
        let items: Vec<EvalItem<'_>> = records
            .iter()
            .filter(|r| labels.get(r.subject_id.as_str()) == Some(&ecfg.split))
            .filter_map(|r| {
                Some(EvalItem {
                    record: r,
                    image: self.cfg.output_dir.join(crop_paths.get(r.image_id.as_str())?),
                    split: ecfg.split.as_str().to_owned(),
                })
            })
            .collect();
        if items.is_empty() {
            return Err(Error::EmptyInput);
        }
        let preds = eval::predict_all(&model, &ecfg.preprocess, &items)?;
        let mut metrics = eval::compute_metrics_parallel(&preds)?;
        metrics.split = Some(ecfg.split.as_str().to_owned());
        metrics.perspective = Some(ecfg.perspective.as_str().to_owned());
        let pred_path = self.out(Stage::Eval, "predictions.jsonl");
        let metrics_path = self.out(Stage::Eval, "metrics.json");
        eval::metrics::write_predictions(&pred_path, &preds)?;
        write_json(&metrics_path, &metrics)?;
        Ok(vec![pred_path, metrics_path])
    }

    fn report(&self) -> Result<Vec<PathBuf>> {
        let summary = report::build(self)?;
        let json = self.out(Stage::Report, "summary.json");
        let text = self.out(Stage::Report, "summary.txt");
        write_json(&json, &summary)?;
        write_lines(&text, [summary.to_text()])?;
        Ok(vec![json, text])
    }

    /// Load the summary written by the report stage.
    pub fn load_summary(&self) -> Result<SummaryReport> {
        read_json(&self.out(Stage::Report, "summary.json"), "summary report")
    }

    /// Rewrite `artifacts.json` from the sidecars of complete stages.
    fn write_artifacts(&self) -> Result<()> {
        let mut entries = Vec::new();
        for stage in Stage::ALL {
            let Ok(sc) = StageSidecar::load(&self.out(stage, SIDECAR)) else {
                continue;
            };
            if sc.status != SidecarStatus::Complete {
                continue;
            }
            for o in &sc.outputs {
                let path = self.cfg.output_dir.join(o);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                entries.push(ArtifactEntry {
                    stage,
                    path: o.clone(),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        write_json(&self.cfg.output_dir.join(ARTIFACTS), &entries)
    }
}

/// Validate `cfg` and run every stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    Pipeline::new(cfg.clone())?.run()
}
