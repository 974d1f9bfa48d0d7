use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verdict::{FilterReason, FilterVerdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCount {
    pub reasons: Vec<FilterReason>,
    pub count: usize,
}

/// Per-reason and overlap accounting of filter verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total_images: usize,
    /// Size of the union of all per-reason sets.
    pub removed_total: usize,
    pub curated: usize,
    /// Recomputed from the raw counts, never copied from elsewhere.
    pub removed_percent: f64,
    pub per_reason: BTreeMap<FilterReason, usize>,
    pub pairwise_overlaps: Vec<OverlapCount>,
    pub triple_overlaps: Vec<OverlapCount>,
    /// Σ per-reason counts minus the union.
    pub overlap_mass: usize,
}

const REASONS: [FilterReason; 4] = [
    FilterReason::SmallPerson,
    FilterReason::LowConfidence,
    FilterReason::OutlierPose,
    FilterReason::MissingAnnotation,
];

pub fn filter_accounting(verdicts: &[FilterVerdict]) -> Result<FilterReport> {
    let mut seen = BTreeSet::new();
    for v in verdicts {
        if !seen.insert(v.image_id.as_str()) {
            return Err(Error::DuplicateVerdict(v.image_id.clone()));
        }
    }
    let sets: BTreeMap<FilterReason, BTreeSet<&str>> = REASONS
        .iter()
        .map(|&r| {
            let ids = verdicts
                .iter()
                .filter(|v| v.reasons.contains(&r))
                .map(|v| v.image_id.as_str())
                .collect();
            (r, ids)
        })
        .collect();
    let union: BTreeSet<&str> = sets.values().flatten().copied().collect();

    let intersect = |rs: &[FilterReason]| -> usize {
        let (first, rest) = rs.split_first().expect("non-empty");
        sets[first]
            .iter()
            .filter(|id| rest.iter().all(|r| sets[r].contains(*id)))
            .count()
    };
    let mut pairwise = Vec::new();
    let mut triple = Vec::new();
    for i in 0..REASONS.len() {
        for j in i + 1..REASONS.len() {
            let rs = [REASONS[i], REASONS[j]];
            pairwise.push(OverlapCount { reasons: rs.to_vec(), count: intersect(&rs) });
            for k in j + 1..REASONS.len() {
                let rs = [REASONS[i], REASONS[j], REASONS[k]];
                triple.push(OverlapCount { reasons: rs.to_vec(), count: intersect(&rs) });
            }
        }
    }

    let per_reason: BTreeMap<FilterReason, usize> = sets.iter().map(|(r, s)| (*r, s.len())).collect();
    let total = verdicts.len();
    let removed = union.len();
    Ok(FilterReport {
        total_images: total,
        removed_total: removed,
        curated: total - removed,
        removed_percent: if total == 0 { 0.0 } else { 100.0 * removed as f64 / total as f64 },
        overlap_mass: per_reason.values().sum::<usize>() - removed,
        per_reason,
        pairwise_overlaps: pairwise,
        triple_overlaps: triple,
    })
}

impl FilterReport {
    pub fn pairwise(&self, a: FilterReason, b: FilterReason) -> usize {
        find(&self.pairwise_overlaps, &[a, b])
    }

    pub fn triple(&self, a: FilterReason, b: FilterReason, c: FilterReason) -> usize {
        find(&self.triple_overlaps, &[a, b, c])
    }
}

fn find(list: &[OverlapCount], rs: &[FilterReason]) -> usize {
    let want: BTreeSet<_> = rs.iter().collect();
    list.iter()
        .find(|o| o.reasons.iter().collect::<BTreeSet<_>>() == want)
        .map_or(0, |o| o.count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use FilterReason::*;

    #[test]
    fn two_reason_example() {
        let v = vec![
            FilterVerdict::with_reasons("1", [SmallPerson]),
            FilterVerdict::with_reasons("2", [SmallPerson, LowConfidence]),
            FilterVerdict::with_reasons("3", [LowConfidence]),
            FilterVerdict::pass("4"),
        ];
        let r = filter_accounting(&v).unwrap();
        assert_eq!(r.per_reason[&SmallPerson], 2);
        assert_eq!(r.per_reason[&LowConfidence], 2);
        assert_eq!(r.pairwise(SmallPerson, LowConfidence), 1);
        assert_eq!(r.pairwise(LowConfidence, SmallPerson), 1);
        assert_eq!(r.removed_total, 3);
        assert_eq!(r.curated, 1);
        assert_eq!(r.overlap_mass, 1);
        assert_eq!(r.removed_percent, 75.0);
    }

    #[test]
    fn all_pass() {
        let v: Vec<_> = (0..5).map(|i| FilterVerdict::pass(i.to_string())).collect();
        let r = filter_accounting(&v).unwrap();
        assert_eq!(r.removed_total, 0);
        assert!(r.per_reason.values().all(|&c| c == 0));
        assert!(r.pairwise_overlaps.iter().chain(&r.triple_overlaps).all(|o| o.count == 0));
        assert_eq!(r.pairwise_overlaps.len(), 6);
        assert_eq!(r.triple_overlaps.len(), 4);
    }

    #[test]
    fn duplicate_rejected() {
        let v = vec![FilterVerdict::pass("a"), FilterVerdict::pass("a")];
        assert_eq!(filter_accounting(&v).unwrap_err().code(), "duplicate_verdict");
    }
}
