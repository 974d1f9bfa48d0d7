//! Subject-disjoint train/val/test assignment.
//!
//! Subjects are shuffled with a seeded generator and handed out one at a
//! time to whichever split is currently furthest below its target image
//! count. Ties go to train, then val, then test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::{write_lines, ImageRecord};

pub const SPLIT_FORMAT: &str = "bmi-curate/split";
pub const SHUFFLE_GENERATOR: &str = "rand_chacha::ChaCha8Rng/seed_from_u64+rand::seq::SliceRandom::shuffle";
const RATIO_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLabel {
    Train,
    Val,
    Test,
}

impl SplitLabel {
    pub const ALL: [SplitLabel; 3] = [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Train => "train",
            SplitLabel::Val => "val",
            SplitLabel::Test => "test",
        }
    }
}

impl fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown split {s:?}")))
    }
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios([0.70, 0.15, 0.15])
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios([train, val, test]);
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRatios(format!("{:?} has a negative or non-finite entry", self.0)));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > RATIO_SUM_TOLERANCE {
            return Err(Error::InvalidRatios(format!("{:?} sums to {sum}, not 1", self.0)));
        }
        Ok(())
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = Error;

    /// Parses `"0.7,0.15,0.15"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidRatios(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => SplitRatios::new(*a, *b, *c),
            _ => Err(Error::InvalidRatios(format!("{s:?}: expected three values"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSplit {
    pub subject_id: String,
    pub split: SplitLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    /// Assignment order (the shuffled subject order for greedy output).
    pub entries: Vec<SubjectSplit>,
    pub ratios: SplitRatios,
    /// ratio x total images, per split.
    pub targets: [f64; 3],
    /// Images actually assigned, per split.
    pub actual: [usize; 3],
    pub seed: u64,
    pub generator: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitHeader {
    format: String,
    generator: String,
    seed: u64,
    ratios: [f64; 3],
    targets: [f64; 3],
    actual: [usize; 3],
}

impl SplitAssignment {
    /// Subject lookup (first entry wins if a corrupted list repeats one).
    pub fn index(&self) -> BTreeMap<&str, SplitLabel> {
        let mut map = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.subject_id.as_str()).or_insert(e.split);
        }
        map
    }

    pub fn split_of(&self, subject_id: &str) -> Option<SplitLabel> {
        self.entries
            .iter()
            .find(|e| e.subject_id == subject_id)
            .map(|e| e.split)
    }

    pub fn subjects_in(&self, label: SplitLabel) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == label)
            .map(|e| e.subject_id.as_str())
            .collect()
    }

    /// Header line followed by one `{subject_id, split}` line per subject.
    pub fn to_jsonl(&self) -> Vec<String> {
        let header = json!({
            "format": SPLIT_FORMAT,
            "generator": self.generator,
            "seed": self.seed,
            "ratios": self.ratios.0,
            "targets": self.targets,
            "actual": self.actual,
        });
        std::iter::once(header.to_string())
            .chain(self.entries.iter().map(|e| json!(e).to_string()))
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: SplitHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::malformed("split file", "missing header"))?,
        )
        .map_err(|e| Error::malformed("split file header", e))?;
        if header.format != SPLIT_FORMAT {
            return Err(Error::malformed("split file", "unknown format"));
        }
        let ratios = SplitRatios(header.ratios);
        ratios.validate()?;
        let entries = lines
            .map(|l| serde_json::from_str::<SubjectSplit>(l).map_err(|e| Error::malformed("split entry", e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SplitAssignment {
            entries,
            ratios,
            targets: header.targets,
            actual: header.actual,
            seed: header.seed,
            generator: header.generator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_lines(path, self.to_jsonl())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Images per subject, keyed by subject id.
pub fn subject_image_counts(records: &[ImageRecord]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.subject_id.as_str()).or_insert(0) += 1;
    }
    counts
}

pub fn greedy_split(records: &[ImageRecord], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let counts = subject_image_counts(records);
    // BTreeMap iteration is sorted, so the shuffle input is independent of
    // record order.
    let mut subjects: Vec<(&str, usize)> = counts.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);

    let total = records.len() as f64;
    let targets = ratios.0.map(|r| r * total);
    let mut actual = [0usize; 3];
    let mut entries = Vec::with_capacity(subjects.len());
    for (subject, n) in subjects {
        let mut best = 0;
        for s in 1..3 {
            if targets[s] - actual[s] as f64 > targets[best] - actual[best] as f64 {
                best = s;
            }
        }
        actual[best] += n;
        entries.push(SubjectSplit {
            subject_id: subject.to_owned(),
            split: SplitLabel::ALL[best],
        });
    }
    Ok(SplitAssignment {
        entries,
        ratios,
        targets,
        actual,
        seed,
        generator: SHUFFLE_GENERATOR.to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointReport {
    pub overlapping_subjects: usize,
    pub subjects_per_split: [usize; 3],
    pub images_per_split: [usize; 3],
    pub image_fractions: [f64; 3],
}

/// Check that every subject of `records` sits in exactly one split.
pub fn verify_disjoint(assignment: &SplitAssignment, records: &[ImageRecord]) -> Result<DisjointReport> {
    let mut labels: BTreeMap<&str, BTreeSet<SplitLabel>> = BTreeMap::new();
    let mut repeats = BTreeSet::new();
    for e in &assignment.entries {
        let set = labels.entry(e.subject_id.as_str()).or_default();
        if !set.insert(e.split) || set.len() > 1 {
            repeats.insert(e.subject_id.clone());
        }
    }
    if !repeats.is_empty() {
        return Err(Error::SubjectOverlap(repeats.into_iter().collect()));
    }

    let mut images = [0usize; 3];
    for r in records {
        let set = labels
            .get(r.subject_id.as_str())
            .ok_or_else(|| Error::UncoveredSubject(r.subject_id.clone()))?;
        let label = *set.iter().next().expect("non-empty label set");
        images[label.index()] += 1;
    }
    let mut subjects = [0usize; 3];
    for set in labels.values() {
        subjects[set.iter().next().expect("non-empty").index()] += 1;
    }
    let total = records.len().max(1) as f64;
    Ok(DisjointReport {
        overlapping_subjects: 0,
        subjects_per_split: subjects,
        images_per_split: images,
        image_fractions: images.map(|n| n as f64 / total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Measurement;

    fn records(per_subject: &[(&str, usize)]) -> Vec<ImageRecord> {
        per_subject
            .iter()
            .flat_map(|&(s, n)| {
                (0..n).map(move |i| ImageRecord {
                    image_id: format!("{s}-{i}"),
                    subject_id: s.to_owned(),
                    image_path: String::new(),
                    image_width: 10,
                    image_height: 10,
                    bbox: None,
                    keypoints: None,
                    face_bbox: None,
                    measurement: Measurement::new(70.0, 1.7).unwrap(),
                })
            })
            .collect()
    }

    #[test]
    fn ten_single_image_subjects() {
        let names: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let spec: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 1)).collect();
        let recs = records(&spec);
        for seed in [0, 1, 42, 999] {
            let a = greedy_split(&recs, SplitRatios::default(), seed).unwrap();
            assert_eq!(a.actual, [7, 2, 1]);
            // Hand simulation of the gap rule: six to train, then val, test,
            // train, and the final tie (0.5 vs 0.5) to val.
            let order: Vec<SplitLabel> = a.entries.iter().map(|e| e.split).collect();
            use SplitLabel::*;
            assert_eq!(order, vec![Train, Train, Train, Train, Train, Train, Val, Test, Train, Val]);
        }
    }

    #[test]
    fn single_subject_goes_to_train() {
        let recs = records(&[("only", 5)]);
        let a = greedy_split(&recs, SplitRatios::default(), 3).unwrap();
        assert_eq!(a.actual, [5, 0, 0]);
        assert_eq!(a.split_of("only"), Some(SplitLabel::Train));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let recs = records(&[("a", 3), ("b", 1), ("c", 2), ("d", 5), ("e", 1), ("f", 2)]);
        let a = greedy_split(&recs, SplitRatios::default(), 11).unwrap();
        let b = greedy_split(&recs, SplitRatios::default(), 11).unwrap();
        assert_eq!(a, b);
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(greedy_split(&reversed, SplitRatios::default(), 11).unwrap(), a);
    }

    #[test]
    fn errors() {
        assert_eq!(greedy_split(&[], SplitRatios::default(), 0).unwrap_err().code(), "empty_input");
        let recs = records(&[("a", 1)]);
        assert!(greedy_split(&recs, SplitRatios([1.2, -0.1, -0.1]), 0).is_err());
        assert_eq!(SplitRatios::new(0.7, 0.1, 0.1).unwrap_err().code(), "invalid_ratios");
        assert!("0.7,0.15".parse::<SplitRatios>().is_err());
        assert_eq!("0.8, 0.1, 0.1".parse::<SplitRatios>().unwrap().0, [0.8, 0.1, 0.1]);
    }

    #[test]
    fn verify_detects_planted_overlap() {
        let recs = records(&[("a", 2), ("b", 2), ("c", 2)]);
        let mut a = greedy_split(&recs, SplitRatios::default(), 5).unwrap();
        let report = verify_disjoint(&a, &recs).unwrap();
        assert_eq!(report.overlapping_subjects, 0);
        assert_eq!(report.images_per_split.iter().sum::<usize>(), 6);

        let first = a.entries[0].clone();
        let other = SplitLabel::ALL.into_iter().find(|l| *l != first.split).unwrap();
        a.entries.push(SubjectSplit { subject_id: first.subject_id.clone(), split: other });
        match verify_disjoint(&a, &recs).unwrap_err() {
            Error::SubjectOverlap(s) => assert_eq!(s, vec![first.subject_id]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn verify_detects_uncovered_subject() {
        let recs = records(&[("a", 1), ("b", 1)]);
        let a = greedy_split(&recs[..1], SplitRatios::default(), 5).unwrap();
        assert_eq!(verify_disjoint(&a, &recs).unwrap_err().code(), "uncovered_subject");
    }

    #[test]
    fn file_round_trip() {
        let recs = records(&[("a", 2), ("b", 1), ("c", 4)]);
        let a = greedy_split(&recs, SplitRatios::default(), 8).unwrap();
        let text = a.to_jsonl().join("\n");
        assert!(text.lines().next().unwrap().contains("ChaCha8Rng"));
        assert_eq!(SplitAssignment::from_jsonl(&text).unwrap(), a);
        assert!(SplitAssignment::from_jsonl("").is_err());
        assert!(SplitAssignment::from_jsonl("{\"format\":\"x\"}").is_err());
    }
}
