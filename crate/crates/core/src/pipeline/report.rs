use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{read_json, CropSummary, FilterReport, IngestSummary, Pipeline, Stage};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::posture::{ClusterReport, Decision};
use crate::split::DisjointReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub ingested_lines: usize,
    pub ingest_rejects: usize,
    pub curated: usize,
    pub removed: usize,
    /// curated + removed == ingested lines - ingest rejects
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLine {
    pub cluster: usize,
    pub members: usize,
    pub fraction: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureSummary {
    pub retained_components: usize,
    pub selected_k: usize,
    pub elbow_curve: Vec<(usize, f64)>,
    pub clusters: Vec<ClusterLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub cluster_seed: u64,
    pub split_seed: u64,
    pub ingest: IngestSummary,
    pub conservation: Conservation,
    pub filter: FilterReport,
    pub posture: PostureSummary,
    pub crops: Vec<CropSummary>,
    pub split: DisjointReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

pub(super) fn build(p: &Pipeline) -> Result<SummaryReport> {
    let cfg = p.config();
    let ingest: IngestSummary = read_json(&p.out(Stage::Ingest, "summary.json"), "ingest summary")?;
    let filter: FilterReport = read_json(&p.out(Stage::Filter, "report.json"), "filter report")?;
    let cluster: ClusterReport = read_json(&p.out(Stage::Cluster, "report.json"), "cluster report")?;
    let crops: Vec<CropSummary> = read_json(&p.out(Stage::Crop, "summary.json"), "crop summary")?;
    let split: DisjointReport = read_json(&p.out(Stage::Split, "report.json"), "split report")?;
    let metrics = if cfg.eval.model.is_some() {
        Some(read_json(&p.out(Stage::Eval, "metrics.json"), "metrics report")?)
    } else {
        None
    };

    let conservation = Conservation {
        ingested_lines: ingest.total_lines,
        ingest_rejects: ingest.rejects,
        curated: filter.curated,
        removed: filter.removed_total,
        holds: filter.curated + filter.removed_total + ingest.rejects == ingest.total_lines,
    };
    if !conservation.holds {
        return Err(Error::malformed(
            "stage outputs",
            "curated + removed != ingested - rejects; outputs come from different runs",
        ));
    }
    let posture = PostureSummary {
        retained_components: cluster.retained_components,
        selected_k: cluster.selected_k,
        elbow_curve: cluster.elbow_curve,
        clusters: cluster
            .clusters
            .iter()
            .map(|c| ClusterLine {
                cluster: c.cluster,
                members: c.members,
                fraction: c.fraction,
                decision: c.decision,
            })
            .collect(),
    };
    Ok(SummaryReport {
        cluster_seed: cfg.posture.seed,
        split_seed: cfg.split.seed,
        ingest,
        conservation,
        filter,
        posture,
        crops,
        split,
        metrics,
    })
}

impl SummaryReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = &self.filter;
        let _ = writeln!(s, "seeds: cluster={} split={}", self.cluster_seed, self.split_seed);
        let _ = writeln!(
            s,
            "ingest: {} lines, {} records, {} rejected",
            self.ingest.total_lines, self.ingest.records, self.ingest.rejects
        );
        let _ = writeln!(
            s,
            "filter: {} of {} removed ({:.2}%), {} curated",
            f.removed_total, f.total_images, f.removed_percent, f.curated
        );
        for (reason, n) in &f.per_reason {
            let _ = writeln!(s, "  {:<20} {n}", reason.as_str());
        }
        let _ = writeln!(s, "  overlap mass         {}", f.overlap_mass);
        for o in f.pairwise_overlaps.iter().chain(&f.triple_overlaps).filter(|o| o.count > 0) {
            let names: Vec<&str> = o.reasons.iter().map(|r| r.as_str()).collect();
            let _ = writeln!(s, "  {} = {}", names.join(" & "), o.count);
        }
        let _ = writeln!(
            s,
            "posture: {} components, k={}",
            self.posture.retained_components, self.posture.selected_k
        );
        for c in &self.posture.clusters {
            let _ = writeln!(
                s,
                "  cluster {}: {} images ({:.2}%) {:?}",
                c.cluster,
                c.members,
                100.0 * c.fraction,
                c.decision
            );
        }
        for c in &self.crops {
            let _ = writeln!(s, "crop {}: {} written, {} skipped", c.perspective, c.cropped, c.skipped);
        }
        let sp = &self.split;
        let _ = writeln!(
            s,
            "split: images {}/{}/{}, subjects {}/{}/{}, overlap {}",
            sp.images_per_split[0],
            sp.images_per_split[1],
            sp.images_per_split[2],
            sp.subjects_per_split[0],
            sp.subjects_per_split[1],
            sp.subjects_per_split[2],
            sp.overlapping_subjects
        );
        if let Some(m) = &self.metrics {
            let _ = writeln!(
                s,
                "eval ({} {}, n={}): MAPE {:.3}%, MAE {:.4} BMI, {:.4} kg",
                m.split.as_deref().unwrap_or("?"),
                m.perspective.as_deref().unwrap_or("?"),
                m.n,
                m.mape_percent,
                m.mae_bmi,
                m.mae_kg
            );
        }
        s.trim_end().to_owned()
    }
}
