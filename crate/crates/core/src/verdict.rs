use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exclusion criteria. Ordering is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    SmallPerson,
    LowConfidence,
    OutlierPose,
    MissingAnnotation,
}

impl FilterReason {
    pub const ALL: [FilterReason; 4] = [
        FilterReason::SmallPerson,
        FilterReason::LowConfidence,
        FilterReason::OutlierPose,
        FilterReason::MissingAnnotation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::SmallPerson => "small_person",
            FilterReason::LowConfidence => "low_confidence",
            FilterReason::OutlierPose => "outlier_pose",
            FilterReason::MissingAnnotation => "missing_annotation",
        }
    }
}

impl fmt::Display for FilterReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one or more filters for a single image. `passed()` holds
/// exactly when no reason was recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub image_id: String,
    pub reasons: BTreeSet<FilterReason>,
}

impl FilterVerdict {
    pub fn pass(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            reasons: BTreeSet::new(),
        }
    }

    pub fn with_reasons(
        image_id: impl Into<String>,
        reasons: impl IntoIterator<Item = FilterReason>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            reasons: reasons.into_iter().collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "image_id": self.image_id,
            "passed": self.passed(),
            "reasons": self.reasons,
        })
        .to_string()
    }
}

/// Union the reasons of independently produced verdict lists, keyed by
/// image id. Output order follows the first list, then unseen ids in order.
pub fn merge_verdicts(lists: &[&[FilterVerdict]]) -> Result<Vec<FilterVerdict>> {
    let mut order = Vec::new();
    let mut merged: BTreeMap<&str, BTreeSet<FilterReason>> = BTreeMap::new();
    for list in lists {
        let mut seen_here = BTreeSet::new();
        for v in list.iter() {
            if !seen_here.insert(v.image_id.as_str()) {
                return Err(Error::DuplicateVerdict(v.image_id.clone()));
            }
            let entry = merged.entry(v.image_id.as_str()).or_insert_with(|| {
                order.push(v.image_id.as_str());
                BTreeSet::new()
            });
            entry.extend(v.reasons.iter().copied());
        }
    }
    Ok(order
        .into_iter()
        .map(|id| FilterVerdict {
            image_id: id.to_owned(),
            reasons: merged[id].clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_unions_reasons() {
        let a = vec![
            FilterVerdict::with_reasons("1", [FilterReason::SmallPerson]),
            FilterVerdict::pass("2"),
        ];
        let b = vec![
            FilterVerdict::with_reasons("2", [FilterReason::OutlierPose]),
            FilterVerdict::with_reasons("1", [FilterReason::SmallPerson, FilterReason::OutlierPose]),
        ];
        let m = merge_verdicts(&[&a, &b]).unwrap();
        assert_eq!(m[0].image_id, "1");
        assert_eq!(m[0].reasons.len(), 2);
        assert_eq!(
            m[1].reasons.iter().copied().collect::<Vec<_>>(),
            vec![FilterReason::OutlierPose]
        );
    }

    #[test]
    fn duplicate_in_one_list_is_error() {
        let a = vec![FilterVerdict::pass("x"), FilterVerdict::pass("x")];
        assert_eq!(merge_verdicts(&[&a]).unwrap_err().code(), "duplicate_verdict");
    }
}
